//! Monitored functionals, the upper-bound certificate for `v`, and residuals
//! of the two identities satisfied by the auxiliary field
//! `g = (I - DΔ)⁻¹ u`:
//!
//! ```text
//! g_t + γ(v)u/D = (I - DΔ)⁻¹[γ(v)u]/D + α (I - DΔ)⁻¹[uF(w)]
//! ½ d/dt(∫g² + D∫|∇g|²) + ∫γ(v)u²/D = ∫γ(v)ug/D + α∫uF(w)g
//! ```
//!
//! [`Monitor`] is the [`Observer`] that assembles a [`DiagnosticsRecord`] at
//! every snapshot and keeps the per-step checks (conservation, mass growth,
//! positivity, plateau of `‖u‖∞`).

use serde::Serialize;
use thiserror::Error;

use crate::grid::Field;
use crate::helmholtz::{HelmholtzError, HelmholtzSettings, HelmholtzSolver};
use crate::kinetics::{IntakeSpec, KineticsError, MotilitySpec, find_c1};
use crate::stepper::{Observer, SolverConfig, State, StepInfo};

/// Certificate tolerance relative to `max v`.
pub const CERT_RTOL: f64 = 1e-6;
/// Slop allowed on `max w` against its initial value.
pub const W_MAX_SLOP: f64 = 1e-12;
/// Per-step decrease of `∫u` tolerated as rounding, relative to `∫u`.
pub const MASS_ROUNDING_RTOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error(transparent)]
    Helmholtz(#[from] HelmholtzError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("certificate denominator 1 - gamma(C1)/D = {0} is not positive")]
    Denominator(f64),
}

/// `g = (I - DΔ)⁻¹ u`.
pub fn compute_g(s: &State, d: f64) -> Result<Field, DiagError> {
    let mut solver = HelmholtzSolver::new(*s.grid(), HelmholtzSettings::default())?;
    compute_g_with(&mut solver, s, d)
}

pub fn compute_g_with(solver: &mut HelmholtzSolver, s: &State, d: f64) -> Result<Field, DiagError> {
    Ok(solver.solve(d, &s.u)?)
}

/// Explicit constants of the bound `v ≤ (g + C₃)/(1 - γ(C₁)/D)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertificateParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma_c1: f64,
    pub d: f64,
    /// `1/(1 - γ(C₁)/D)`.
    pub factor: f64,
    /// The `v_floor` that `c2` was computed from.
    pub v_floor: f64,
    /// `max_x(v₀ - g₀ - Γ(v₀))`, fixed by the initial data.
    pub initial_excess: f64,
}

impl CertificateParams {
    /// `C₁` from [`find_c1`], `C₂ = C₁ γ(v_floor)`,
    /// `C₃ = max(C₂/D, max_x(v₀ - g₀ - Γ(v₀)))`.
    pub fn new(
        motility: &MotilitySpec,
        d: f64,
        v_floor: f64,
        s0: &State,
        g0: &Field,
    ) -> Result<Self, DiagError> {
        let c1 = find_c1(motility, d)?;
        let mut excess = f64::NEG_INFINITY;
        for (&v, &g) in s0.v.values().iter().zip(g0.values()) {
            excess = excess.max(v - g - motility.gamma_antiderivative(v, c1, d)?);
        }
        Self::from_parts(motility, d, c1, v_floor, excess)
    }

    pub fn from_parts(
        motility: &MotilitySpec,
        d: f64,
        c1: f64,
        v_floor: f64,
        initial_excess: f64,
    ) -> Result<Self, DiagError> {
        let gamma_c1 = motility.gamma(c1)?;
        let denom = 1.0 - gamma_c1 / d;
        if !(denom > 0.0) {
            return Err(DiagError::Denominator(denom));
        }
        let c2 = c1 * motility.gamma(v_floor)?;
        Ok(Self {
            c1,
            c2,
            c3: (c2 / d).max(initial_excess),
            gamma_c1,
            d,
            factor: 1.0 / denom,
            v_floor,
            initial_excess,
        })
    }

    /// Same `C₁` and initial excess with a new floor.
    pub fn with_floor(&self, motility: &MotilitySpec, v_floor: f64) -> Result<Self, DiagError> {
        Self::from_parts(motility, self.d, self.c1, v_floor, self.initial_excess)
    }
}

/// `min_x[(g + C₃)/(1 - γ(C₁)/D) - v]`.
pub fn check_v_certificate(s: &State, g: &Field, p: &CertificateParams) -> Result<f64, DiagError> {
    if !(p.factor > 0.0 && p.factor.is_finite()) {
        return Err(DiagError::Denominator(1.0 / p.factor));
    }
    Ok(g.values()
        .iter()
        .zip(s.v.values())
        .map(|(g, v)| (g + p.c3) * p.factor - v)
        .fold(f64::INFINITY, f64::min))
}

/// Whether a slack passes: `slack ≥ -1e-6 · max v`.
pub fn certificate_passes(slack: f64, max_v: f64) -> bool {
    slack >= -CERT_RTOL * max_v
}

/// Model parameters the residuals depend on.
#[derive(Clone, Copy, Debug)]
pub struct Physics<'a> {
    pub d: f64,
    pub alpha: f64,
    pub motility: &'a MotilitySpec,
    pub intake: &'a IntakeSpec,
}

impl<'a> Physics<'a> {
    pub fn of(c: &'a SolverConfig) -> Self {
        Self {
            d: c.d,
            alpha: c.alpha,
            motility: &c.motility,
            intake: &c.intake,
        }
    }
}

/// A consecutive pair of states with their `g` fields.
#[derive(Clone, Copy, Debug)]
pub struct StepPair<'a> {
    pub prev: &'a State,
    pub next: &'a State,
    pub g_prev: &'a Field,
    pub g_next: &'a Field,
    pub dt: f64,
}

fn gamma_u(p: &Physics<'_>, s: &State) -> Field {
    s.v.zip_map(&s.u, |v, u| p.motility.gamma_unchecked(v) * u)
}

fn reaction(p: &Physics<'_>, s: &State) -> Field {
    s.u.zip_map(&s.w, |u, w| u * p.intake.intake_unchecked(w))
}

/// `‖(gⁿ⁺¹ - gⁿ)/dt + γ(vⁿ)uⁿ/D - solve(γ(vⁿ)uⁿ)/D - α solve(uⁿF(wⁿ))‖_{L²}`.
pub fn g_evolution_residual(
    solver: &mut HelmholtzSolver,
    pair: &StepPair<'_>,
    p: &Physics<'_>,
) -> Result<f64, DiagError> {
    let gu = gamma_u(p, pair.prev);
    let smooth_gu = solver.solve(p.d, &gu)?;
    let smooth_r = solver.solve(p.d, &reaction(p, pair.prev))?;
    let inv_d = 1.0 / p.d;
    let n = gu.len();
    let mut res = pair.g_next.clone();
    for i in 0..n {
        let dg = (pair.g_next.values()[i] - pair.g_prev.values()[i]) / pair.dt;
        res.values_mut()[i] = dg + inv_d * gu.values()[i]
            - inv_d * smooth_gu.values()[i]
            - p.alpha * smooth_r.values()[i];
    }
    Ok(res.norm_lp(2.0).expect("p = 2 is a valid exponent"))
}

/// `E = ½(∫g² + D ∫|∇g|²)`.
pub fn g_energy(g: &Field, d: f64) -> f64 {
    0.5 * (g.inner(g) + d * g.grad_sq_integral())
}

/// `|ΔE/dt + ∫γ(vⁿ)(uⁿ)²/D - ∫γ(vⁿ)uⁿgⁿ/D - α∫uⁿF(wⁿ)gⁿ|`.
pub fn energy_residual(pair: &StepPair<'_>, p: &Physics<'_>) -> f64 {
    let de = g_energy(pair.g_next, p.d) - g_energy(pair.g_prev, p.d);
    let gu = gamma_u(p, pair.prev);
    let dissipation = gu.inner(&pair.prev.u) / p.d;
    let exchange = gu.inner(pair.g_prev) / p.d;
    let growth = p.alpha * reaction(p, pair.prev).inner(pair.g_prev);
    (de / pair.dt + dissipation - exchange - growth).abs()
}

/// `u* = (∫u₀ + α∫w₀)/|Ω|`.
pub fn u_star(mass_u0: f64, mass_w0: f64, alpha: f64, volume: f64) -> f64 {
    (mass_u0 + alpha * mass_w0) / volume
}

/// `(‖u - u*‖∞, ‖v - u*‖∞, ‖w‖∞)`.
pub fn equilibrium_distance(s: &State, u_star: f64) -> (f64, f64, f64) {
    let dist = |f: &Field| {
        f.values()
            .iter()
            .fold(0.0_f64, |m, x| m.max((x - u_star).abs()))
    };
    (dist(&s.u), dist(&s.v), s.w.max_abs())
}

/// Space-time integrals `∫∫u²` and `∫∫γ(v)u²` over trailing windows of length
/// `τ`, accumulated by the trapezoidal rule through snapshot times.
#[derive(Clone, Debug)]
pub struct WindowAccumulator {
    tau: f64,
    /// `(t, ∫₀ᵗ∫u², ∫₀ᵗ∫γu², ∫u²(t), ∫γu²(t))`
    history: Vec<[f64; 5]>,
    max_u2: f64,
    max_gu2: f64,
}

impl WindowAccumulator {
    /// `τ = min(1, t_end/2)`.
    pub fn new(t_end: f64) -> Self {
        Self::with_tau(1.0_f64.min(0.5 * t_end))
    }

    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            history: Vec::new(),
            max_u2: 0.0,
            max_gu2: 0.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Adds the integrands at time `t` (non-decreasing) and returns the two
    /// window integrals ending at `t`.
    pub fn push(&mut self, t: f64, u2: f64, gu2: f64) -> (f64, f64) {
        let entry = match self.history.last() {
            None => [t, 0.0, 0.0, u2, gu2],
            Some(&[t0, i1, i2, a, b]) => {
                let h = t - t0;
                [
                    t,
                    i1 + 0.5 * h * (a + u2),
                    i2 + 0.5 * h * (b + gu2),
                    u2,
                    gu2,
                ]
            }
        };
        self.history.push(entry);
        let (w1, w2) = self.window_at_end();
        self.max_u2 = self.max_u2.max(w1);
        self.max_gu2 = self.max_gu2.max(w2);
        (w1, w2)
    }

    fn window_at_end(&self) -> (f64, f64) {
        let last = self.history[self.history.len() - 1];
        let start = last[0] - self.tau;
        let first = self.history[0];
        if start <= first[0] {
            return (last[1], last[2]);
        }
        // integral up to `start`, interpolating the trapezoid inside its interval
        let k = self.history.partition_point(|e| e[0] <= start);
        let a = self.history[k - 1];
        let b = self.history[k];
        let s = start - a[0];
        let h = b[0] - a[0];
        let frac = |ia: f64, fa: f64, fb: f64| {
            let f_start = fa + (fb - fa) * s / h;
            ia + 0.5 * s * (fa + f_start)
        };
        let i1 = frac(a[1], a[3], b[3]);
        let i2 = frac(a[2], a[4], b[4]);
        (last[1] - i1, last[2] - i2)
    }

    /// Largest window integrals seen so far.
    pub fn maxima(&self) -> (f64, f64) {
        (self.max_u2, self.max_gu2)
    }
}

/// One snapshot row. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub dt: f64,
    pub mass_u: f64,
    pub mass_w: f64,
    pub total: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub grad_v_sq: f64,
    pub g_l2_sq: f64,
    pub d_grad_g_sq: f64,
    pub cert_slack: f64,
    pub window_u2: f64,
    pub window_gamma_u2: f64,
    pub clamped_mass: f64,
    pub residual_g: f64,
    pub residual_energy: f64,
    pub eq_du: f64,
    pub eq_dv: f64,
    pub eq_dw: f64,
    pub v_floor: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 27] = [
        "t",
        "step",
        "dt",
        "mass_u",
        "mass_w",
        "total",
        "min_u",
        "max_u",
        "min_v",
        "max_v",
        "min_w",
        "max_w",
        "u_l2",
        "u_linf",
        "grad_v_sq",
        "g_l2_sq",
        "d_grad_g_sq",
        "cert_slack",
        "window_u2",
        "window_gamma_u2",
        "clamped_mass",
        "residual_g",
        "residual_energy",
        "eq_du",
        "eq_dv",
        "eq_dw",
        "v_floor",
    ];

    /// Values in [`Self::COLUMNS`] order.
    pub fn values(&self) -> [f64; 27] {
        [
            self.t,
            self.step as f64,
            self.dt,
            self.mass_u,
            self.mass_w,
            self.total,
            self.min_u,
            self.max_u,
            self.min_v,
            self.max_v,
            self.min_w,
            self.max_w,
            self.u_l2,
            self.u_linf,
            self.grad_v_sq,
            self.g_l2_sq,
            self.d_grad_g_sq,
            self.cert_slack,
            self.window_u2,
            self.window_gamma_u2,
            self.clamped_mass,
            self.residual_g,
            self.residual_energy,
            self.eq_du,
            self.eq_dv,
            self.eq_dw,
            self.v_floor,
        ]
    }

    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.len() != Self::COLUMNS.len() {
            return None;
        }
        Some(Self {
            t: v[0],
            step: v[1] as u64,
            dt: v[2],
            mass_u: v[3],
            mass_w: v[4],
            total: v[5],
            min_u: v[6],
            max_u: v[7],
            min_v: v[8],
            max_v: v[9],
            min_w: v[10],
            max_w: v[11],
            u_l2: v[12],
            u_linf: v[13],
            grad_v_sq: v[14],
            g_l2_sq: v[15],
            d_grad_g_sq: v[16],
            cert_slack: v[17],
            window_u2: v[18],
            window_gamma_u2: v[19],
            clamped_mass: v[20],
            residual_g: v[21],
            residual_energy: v[22],
            eq_du: v[23],
            eq_dv: v[24],
            eq_dw: v[25],
            v_floor: v[26],
        })
    }
}

/// Running results of the per-step and per-snapshot checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorSummary {
    pub steps: u64,
    pub initial_total: f64,
    /// Largest `|total - α·clamped - total₀| / total₀` seen at any step.
    pub max_drift: f64,
    pub clamped_mass: f64,
    pub clamp_warnings: u64,
    /// Steps at which `∫u` fell by more than rounding.
    pub mass_decreases: u64,
    /// Largest relative per-step decrease of `∫u` (0 if it never fell).
    pub worst_mass_decrease: f64,
    pub initial_max_w: f64,
    /// Snapshots with `max w > max w₀ + 1e-12`.
    pub w_max_violations: u64,
    pub worst_w_excess: f64,
    pub initial_min_v: f64,
    pub v_floor: f64,
    /// Snapshots with `min v ≤ 0`.
    pub v_nonpositive: u64,
    pub min_u: f64,
    pub min_w: f64,
    /// `None` when no certificate applies (with the reason in `certificate_note`).
    pub certificate_failures: Option<u64>,
    /// Most negative `slack / max v` over the snapshots.
    pub worst_cert_ratio: f64,
    pub certificate_note: Option<String>,
    pub max_residual_g: f64,
    pub max_residual_energy: f64,
    /// Running max of `‖u‖∞` in each quarter of `[0, t_end]`.
    pub quarter_max_u: [f64; 4],
    pub max_window_u2: f64,
    pub max_window_gamma_u2: f64,
    pub u_star: f64,
    pub snapshots: u64,
}

fn quarter(t_end: f64, t: f64) -> usize {
    if t_end > 0.0 {
        ((4.0 * t / t_end) as usize).min(3)
    } else {
        3
    }
}

/// Diagnostics observer: records at the snapshot cadence, checks every step.
pub struct Monitor {
    d: f64,
    alpha: f64,
    motility: MotilitySpec,
    intake: IntakeSpec,
    t_end: f64,
    solver: HelmholtzSolver,
    certificate: Option<CertificateParams>,
    windows: WindowAccumulator,
    /// Compute the identity residuals at each snapshot.
    pub residuals: bool,
    records: Vec<DiagnosticsRecord>,
    summary: MonitorSummary,
    last_mass_u: f64,
    first_error: Option<String>,
}

impl std::fmt::Debug for Monitor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Monitor")
            .field("summary", &self.summary)
            .finish_non_exhaustive()
    }
}

impl Monitor {
    pub fn new(s0: &State, config: &SolverConfig) -> Result<Self, DiagError> {
        let mut solver = HelmholtzSolver::new(*s0.grid(), config.helmholtz)?;
        let g0 = compute_g_with(&mut solver, s0, config.d)?;
        let v_floor = s0.v.min_val();
        let (certificate, note) =
            match CertificateParams::new(&config.motility, config.d, v_floor, s0, &g0) {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(format!("certificate not applicable: {e}"))),
            };
        let total = s0.total(config.alpha);
        let summary = MonitorSummary {
            steps: 0,
            initial_total: total,
            max_drift: 0.0,
            clamped_mass: 0.0,
            clamp_warnings: 0,
            mass_decreases: 0,
            worst_mass_decrease: 0.0,
            initial_max_w: s0.w.max_val(),
            w_max_violations: 0,
            worst_w_excess: f64::NEG_INFINITY,
            initial_min_v: v_floor,
            v_floor,
            v_nonpositive: 0,
            min_u: s0.u.min_val(),
            min_w: s0.w.min_val(),
            certificate_failures: certificate.map(|_| 0),
            worst_cert_ratio: f64::INFINITY,
            certificate_note: note,
            max_residual_g: 0.0,
            max_residual_energy: 0.0,
            quarter_max_u: [f64::NEG_INFINITY; 4],
            max_window_u2: 0.0,
            max_window_gamma_u2: 0.0,
            u_star: u_star(
                s0.u.integrate(),
                s0.w.integrate(),
                config.alpha,
                s0.grid().volume(),
            ),
            snapshots: 0,
        };
        Ok(Self {
            d: config.d,
            alpha: config.alpha,
            motility: config.motility.clone(),
            intake: config.intake.clone(),
            t_end: config.t_end,
            solver,
            certificate,
            windows: WindowAccumulator::new(config.t_end),
            residuals: true,
            records: Vec::new(),
            summary,
            last_mass_u: s0.u.integrate(),
            first_error: None,
        })
    }

    pub fn records(&self) -> &[DiagnosticsRecord] {
        &self.records
    }

    pub fn summary(&self) -> &MonitorSummary {
        &self.summary
    }

    pub fn certificate(&self) -> Option<&CertificateParams> {
        self.certificate.as_ref()
    }

    /// First solver error met while building a record, if any.
    pub fn error(&self) -> Option<&str> {
        self.first_error.as_deref()
    }

    pub fn into_parts(self) -> (Vec<DiagnosticsRecord>, MonitorSummary) {
        (self.records, self.summary)
    }

    fn record(
        &mut self,
        prev: Option<&State>,
        s: &State,
        info: Option<&StepInfo>,
    ) -> Result<DiagnosticsRecord, DiagError> {
        let phys = Physics {
            d: self.d,
            alpha: self.alpha,
            motility: &self.motility,
            intake: &self.intake,
        };
        let g = compute_g_with(&mut self.solver, s, self.d)?;
        let mut cert_slack = f64::NAN;
        if let Some(p) = self.certificate {
            let p = if p.v_floor != self.summary.v_floor {
                p.with_floor(&self.motility, self.summary.v_floor)?
            } else {
                p
            };
            self.certificate = Some(p);
            cert_slack = check_v_certificate(s, &g, &p)?;
            let max_v = s.v.max_val();
            self.summary.worst_cert_ratio = self.summary.worst_cert_ratio.min(cert_slack / max_v);
            if !certificate_passes(cert_slack, max_v)
                && let Some(n) = self.summary.certificate_failures.as_mut() {
                    *n += 1;
                }
        }
        let (mut rg, mut re) = (f64::NAN, f64::NAN);
        if let (true, Some(prev), Some(info)) = (self.residuals, prev, info) {
            let g_prev = compute_g_with(&mut self.solver, prev, self.d)?;
            let pair = StepPair {
                prev,
                next: s,
                g_prev: &g_prev,
                g_next: &g,
                dt: info.dt,
            };
            rg = g_evolution_residual(&mut self.solver, &pair, &phys)?;
            re = energy_residual(&pair, &phys);
            self.summary.max_residual_g = self.summary.max_residual_g.max(rg);
            self.summary.max_residual_energy = self.summary.max_residual_energy.max(re);
        }
        let gu = gamma_u(&phys, s);
        let (window_u2, window_gamma_u2) = self.windows.push(s.t, s.u.inner(&s.u), gu.inner(&s.u));
        let (mw1, mw2) = self.windows.maxima();
        self.summary.max_window_u2 = mw1;
        self.summary.max_window_gamma_u2 = mw2;
        let (eq_du, eq_dv, eq_dw) = equilibrium_distance(s, self.summary.u_star);
        let (mass_u, mass_w) = (s.u.integrate(), s.w.integrate());
        Ok(DiagnosticsRecord {
            t: s.t,
            step: info.map_or(0, |i| i.step_index),
            dt: info.map_or(f64::NAN, |i| i.dt),
            mass_u,
            mass_w,
            total: mass_u + self.alpha * mass_w,
            min_u: s.u.min_val(),
            max_u: s.u.max_val(),
            min_v: s.v.min_val(),
            max_v: s.v.max_val(),
            min_w: s.w.min_val(),
            max_w: s.w.max_val(),
            u_l2: s.u.norm_lp(2.0).expect("valid exponent"),
            u_linf: s.u.max_abs(),
            grad_v_sq: s.v.grad_sq_integral(),
            g_l2_sq: g.inner(&g),
            d_grad_g_sq: self.d * g.grad_sq_integral(),
            cert_slack,
            window_u2,
            window_gamma_u2,
            clamped_mass: self.summary.clamped_mass,
            residual_g: rg,
            residual_energy: re,
            eq_du,
            eq_dv,
            eq_dw,
            v_floor: self.summary.v_floor,
        })
    }

    fn push_record(&mut self, prev: Option<&State>, s: &State, info: Option<&StepInfo>) {
        match self.record(prev, s, info) {
            Ok(r) => {
                let excess = r.max_w - self.summary.initial_max_w;
                self.summary.worst_w_excess = self.summary.worst_w_excess.max(excess);
                if excess > W_MAX_SLOP {
                    self.summary.w_max_violations += 1;
                }
                if !(r.min_v > 0.0) {
                    self.summary.v_nonpositive += 1;
                }
                self.summary.snapshots += 1;
                self.records.push(r);
            }
            Err(e) => {
                self.first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
}

impl Observer for Monitor {
    fn on_start(&mut self, s0: &State) {
        let q = quarter(self.t_end, s0.t);
        self.summary.quarter_max_u[q] = self.summary.quarter_max_u[q].max(s0.u.max_abs());
        self.push_record(None, s0, None);
    }

    fn on_step(&mut self, _prev: &State, next: &State, info: &StepInfo) {
        let sm = &mut self.summary;
        sm.steps = info.step_index;
        sm.clamped_mass += info.clamped_mass;
        if info.clamp_warning {
            sm.clamp_warnings += 1;
        }
        let mass_u = next.u.integrate();
        let mass_w = next.w.integrate();
        let total = mass_u + self.alpha * mass_w;
        let drift =
            (total - self.alpha * sm.clamped_mass - sm.initial_total).abs() / sm.initial_total;
        sm.max_drift = sm.max_drift.max(drift);
        let fall = (self.last_mass_u - mass_u) / self.last_mass_u;
        if fall > MASS_ROUNDING_RTOL {
            sm.mass_decreases += 1;
        }
        sm.worst_mass_decrease = sm.worst_mass_decrease.max(fall);
        self.last_mass_u = mass_u;
        sm.v_floor = sm.v_floor.min(next.v.min_val());
        sm.min_u = sm.min_u.min(next.u.min_val());
        sm.min_w = sm.min_w.min(next.w.min_val());
        let q = quarter(self.t_end, next.t);
        sm.quarter_max_u[q] = sm.quarter_max_u[q].max(next.u.max_abs());
    }

    fn on_snapshot(&mut self, prev: &State, next: &State, info: &StepInfo) {
        self.push_record(Some(prev), next, Some(info));
    }
}
