//! IMEX time integration of
//!
//! ```text
//! u_t = Δ(γ(v) u) + α u F(w)
//! v_t = D Δv + u - v
//! w_t = Δw - u F(w)
//! ```
//!
//! The cross-diffusion term and the reaction are explicit; the linear
//! diffusion of `v` and `w` is backward Euler through the Helmholtz solver.
//! One step, with every read taken from level `n`:
//!
//! 1. `w̃ = (I - dt Δ)⁻¹ wⁿ`
//! 2. `r = uⁿ F(w̃)`
//! 3. `uⁿ⁺¹ = uⁿ + dt (Δ(γ(vⁿ) uⁿ) + α r)`
//! 4. `wⁿ⁺¹ = w̃ - dt r`, negatives clamped to zero and counted
//! 5. `vⁿ⁺¹ = (I - dt D/(1+dt) Δ)⁻¹ (vⁿ + dt (uⁿ - vⁿ)/(1+dt))`
//!
//! The `± dt r` pair cancels in `∫u + α∫w`, and both diffusions preserve the
//! mean, so the scheme conserves that total to rounding.

use std::fmt;

use thiserror::Error;

use crate::grid::{Field, Grid, GridError};
use crate::helmholtz::{HelmholtzError, HelmholtzSettings, HelmholtzSolver};
use crate::kinetics::{IntakeSpec, KineticsError, MotilitySpec};

pub const DEFAULT_CFL_SAFETY: f64 = 0.4;
pub const DEFAULT_OVERFLOW_GUARD: f64 = 1e12;
/// Per-step clamped mass above this fraction of `∫w⁰` raises a warning.
pub const CLAMP_WARNING_FRACTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Helmholtz(#[from] HelmholtzError),
    #[error("step size {dt:e} exceeds the stability limit {limit:e} at t = {t}")]
    StepTooLarge { t: f64, dt: f64, limit: f64 },
    #[error("non-finite value in {field} after the step from t = {}", .last_good.t)]
    NonFinite {
        field: &'static str,
        last_good: Box<State>,
    },
    #[error("numerical blow-up at t = {t}: max u = {max_u:e} exceeds the overflow guard {guard:e}")]
    BlowUp {
        t: f64,
        max_u: f64,
        guard: f64,
        last: Box<State>,
    },
}

impl StepError {
    /// The last finite state carried by an abort, if any.
    pub fn dump(&self) -> Option<&State> {
        match self {
            Self::NonFinite { last_good, .. } => Some(last_good),
            Self::BlowUp { last, .. } => Some(last),
            _ => None,
        }
    }
}

/// Time-stamped `(u, v, w)` on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

impl State {
    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// `∫u + α∫w`.
    pub fn total(&self, alpha: f64) -> f64 {
        self.u.integrate() + alpha * self.w.integrate()
    }

    /// Checks `u ≥ 0`, `v > 0`, `w ≥ 0`, finiteness and a shared grid.
    pub fn check(&self) -> Result<(), StepError> {
        let g = *self.grid();
        if *self.v.grid() != g || *self.w.grid() != g {
            return Err(StepError::Grid(GridError::GridMismatch));
        }
        for (name, f) in [("u", &self.u), ("v", &self.v), ("w", &self.w)] {
            if !f.is_finite() {
                return Err(StepError::InitialData(format!(
                    "{name} has non-finite cells"
                )));
            }
        }
        if self.u.min_val() < 0.0 {
            return Err(StepError::InitialData(format!(
                "u >= 0 violated (min u = {:e})",
                self.u.min_val()
            )));
        }
        if self.w.min_val() < 0.0 {
            return Err(StepError::InitialData(format!(
                "w >= 0 violated (min w = {:e})",
                self.w.min_val()
            )));
        }
        if !(self.v.min_val() > 0.0) {
            return Err(StepError::InitialData(format!(
                "v > 0 violated (min v = {:e})",
                self.v.min_val()
            )));
        }
        Ok(())
    }
}

/// An initial profile.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// Closed-form expression in `x`, `y`, `Lx`, `Ly` and `pi`, with the usual
    /// functions (`cos`, `exp`, `sqrt`, ...). On 1D grids `y = 0` and `Ly = 1`.
    Expression(String),
    Values(Field),
}

impl Profile {
    pub fn expr(s: impl Into<String>) -> Self {
        Self::Expression(s.into())
    }

    pub fn sample(&self, grid: Grid) -> Result<Field, StepError> {
        match self {
            Self::Constant(c) => Ok(Field::new(grid, vec![*c; grid.cell_count()])?),
            Self::Values(f) => {
                if *f.grid() != grid {
                    return Err(StepError::Grid(GridError::GridMismatch));
                }
                Ok(f.clone())
            }
            Self::Expression(src) => {
                use exmex::prelude::*;
                let expr = exmex::parse::<f64>(src)
                    .map_err(|e| StepError::InitialData(format!("cannot parse '{src}': {e}")))?;
                let ly = if grid.dim() == 2 { grid.extent(1) } else { 1.0 };
                enum Slot {
                    X,
                    Y,
                    Const(f64),
                }
                let mut slots = Vec::new();
                for name in expr.var_names() {
                    slots.push(match name.as_str() {
                        "x" => Slot::X,
                        "y" => Slot::Y,
                        "Lx" => Slot::Const(grid.extent(0)),
                        "Ly" => Slot::Const(ly),
                        "pi" => Slot::Const(std::f64::consts::PI),
                        other => {
                            return Err(StepError::InitialData(format!(
                                "unknown variable '{other}' in '{src}' (allowed: x, y, Lx, Ly, pi)"
                            )));
                        }
                    });
                }
                let mut args = vec![0.0; slots.len()];
                let mut values = Vec::with_capacity(grid.cell_count());
                for [x, y] in grid.centers() {
                    for (arg, slot) in args.iter_mut().zip(&slots) {
                        *arg = match slot {
                            Slot::X => x,
                            Slot::Y => y,
                            Slot::Const(c) => *c,
                        };
                    }
                    let value = expr
                        .eval(&args)
                        .map_err(|e| StepError::InitialData(format!("in '{src}': {e}")))?;
                    values.push(value);
                }
                Field::new(grid, values).map_err(|e| {
                    StepError::InitialData(format!("'{src}' is not finite on the grid: {e}"))
                })
            }
        }
    }
}

/// Samples the profiles and checks `u₀ ≥ 0, u₀ ≢ 0, v₀ > 0, w₀ ≥ 0`.
pub fn init_state(
    grid: Grid,
    u0: &Profile,
    v0: &Profile,
    w0: &Profile,
) -> Result<State, StepError> {
    let s = State {
        t: 0.0,
        u: u0.sample(grid)?,
        v: v0.sample(grid)?,
        w: w0.sample(grid)?,
    };
    s.check()?;
    if !(s.u.integrate() > 0.0) {
        return Err(StepError::InitialData("u0 ≢ 0 violated".into()));
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub d: f64,
    pub alpha: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub dt_max: f64,
    pub overflow_guard: f64,
    pub motility: MotilitySpec,
    pub intake: IntakeSpec,
    pub helmholtz: HelmholtzSettings,
    /// Time between observer snapshots.
    pub snapshot_every: f64,
}

impl SolverConfig {
    /// Defaults for everything except the physics.
    pub fn new(d: f64, alpha: f64, motility: MotilitySpec, intake: IntakeSpec, t_end: f64) -> Self {
        Self {
            d,
            alpha,
            cfl_safety: DEFAULT_CFL_SAFETY,
            t_end,
            dt_max: f64::INFINITY,
            overflow_guard: DEFAULT_OVERFLOW_GUARD,
            motility,
            intake,
            helmholtz: HelmholtzSettings::default(),
            snapshot_every: if t_end > 0.0 { t_end / 200.0 } else { 1.0 },
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |m: String| Err(StepError::Config(m));
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad(format!("D must be > 0, got {}", self.d));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety < 1.0) {
            return bad(format!(
                "cfl_safety must lie in (0, 1), got {}",
                self.cfl_safety
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be > 0, got {}", self.dt_max));
        }
        if !(self.overflow_guard > 0.0) {
            return bad(format!(
                "overflow_guard must be > 0, got {}",
                self.overflow_guard
            ));
        }
        if !(self.snapshot_every > 0.0) {
            return bad(format!(
                "snapshot_every must be > 0, got {}",
                self.snapshot_every
            ));
        }
        self.motility.validate()?;
        self.intake.validate()?;
        Ok(())
    }
}

/// The individual step-size limits before the safety factor is applied.
/// A guard is infinite when the quantity it controls vanishes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Guards {
    pub diffusion: f64,
    pub uptake: f64,
    pub growth: f64,
    pub dt_max: f64,
}

impl Guards {
    pub fn min(&self) -> f64 {
        self.diffusion
            .min(self.uptake)
            .min(self.growth)
            .min(self.dt_max)
    }
}

fn max_gamma(motility: &MotilitySpec, v: &Field) -> f64 {
    if motility.is_monotone() {
        motility.gamma_unchecked(v.min_val())
    } else {
        v.values()
            .iter()
            .map(|&x| motility.gamma_unchecked(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn max_intake(intake: &IntakeSpec, w: &Field) -> f64 {
    if intake.is_monotone() {
        intake.intake_unchecked(w.max_val())
    } else {
        w.values()
            .iter()
            .map(|&x| intake.intake_unchecked(x))
            .fold(0.0, f64::max)
    }
}

fn inv_or_inf(x: f64) -> f64 {
    if x > 0.0 { 1.0 / x } else { f64::INFINITY }
}

pub fn guards(s: &State, c: &SolverConfig) -> Result<Guards, StepError> {
    let g = s.grid();
    let h = g.min_spacing();
    let dim = g.dim() as f64;
    let lf = c.intake.lipschitz_bound(s.w.max_val())?;
    Ok(Guards {
        diffusion: h * h / (2.0 * dim * max_gamma(&c.motility, &s.v)),
        uptake: inv_or_inf(s.u.max_val() * lf),
        growth: inv_or_inf(c.alpha * max_intake(&c.intake, &s.w)),
        dt_max: c.dt_max,
    })
}

/// `cfl_safety · min(h²/(2·dim·max γ(v)), 1/(max u · L_F), 1/(α max F(w)), dt_max)`.
pub fn stable_dt(s: &State, c: &SolverConfig) -> Result<f64, StepError> {
    Ok(c.cfl_safety * guards(s, c)?.min())
}

/// Additional limit for the fully explicit reference scheme: forward Euler
/// diffusion of `v` and `w`.
pub fn reference_dt(s: &State, c: &SolverConfig) -> Result<f64, StepError> {
    let g = s.grid();
    let h2 = g.min_spacing().powi(2);
    let dim = g.dim() as f64;
    let v_limit = 1.0 / (2.0 * dim * c.d / h2 + 1.0);
    let w_limit = h2 / (2.0 * dim);
    Ok(stable_dt(s, c)?.min(c.cfl_safety * v_limit.min(w_limit)))
}

/// Prescribed source terms added to the three equations (manufactured solutions).
#[derive(Clone, Debug, PartialEq)]
pub struct Sources {
    pub u: Field,
    pub v: Field,
    pub w: Field,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    /// Mass removed from `w` by clamping in this step.
    pub clamped_mass: f64,
    pub step_index: u64,
    pub clamp_warning: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    #[default]
    Imex,
    /// Forward Euler on all three equations.
    Explicit,
}

/// Step-size policy for [`run`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum DtPolicy {
    /// `stable_dt` at every step; steps are shortened to land on snapshot times.
    #[default]
    Adaptive,
    /// A constant step (only the final step is shortened). Errors if it ever
    /// exceeds the scheme's stability limit.
    Fixed(f64),
}

/// Single-trajectory integrator: owns the configuration, the Helmholtz
/// solver and scratch space.
pub struct Stepper {
    config: SolverConfig,
    solver: HelmholtzSolver,
    flux: Vec<f64>,
    lap: Vec<f64>,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Stepper {
    pub fn new(grid: Grid, config: SolverConfig) -> Result<Self, StepError> {
        config.validate()?;
        let solver = HelmholtzSolver::new(grid, config.helmholtz)?;
        let n = grid.cell_count();
        Ok(Self {
            config,
            solver,
            flux: vec![0.0; n],
            lap: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn solver(&mut self) -> &mut HelmholtzSolver {
        &mut self.solver
    }

    pub fn stable_dt(&self, s: &State) -> Result<f64, StepError> {
        stable_dt(s, &self.config)
    }

    /// Writes `Δ_h(γ(v) u)` into `self.lap`.
    fn cross_diffusion(&mut self, s: &State) {
        self.config
            .motility
            .gamma_into(s.v.values(), &mut self.flux);
        for (f, u) in self.flux.iter_mut().zip(s.u.values()) {
            *f *= u;
        }
        s.grid().laplacian_into(&self.flux, &mut self.lap);
    }

    /// One IMEX step of length `dt`. Returns the new state and the mass removed
    /// from `w` by clamping.
    pub fn step(&mut self, s: &State, dt: f64) -> Result<(State, f64), StepError> {
        self.step_forced(s, dt, None)
    }

    pub fn step_forced(
        &mut self,
        s: &State,
        dt: f64,
        sources: Option<&Sources>,
    ) -> Result<(State, f64), StepError> {
        let grid = *s.grid();
        let (alpha, d) = (self.config.alpha, self.config.d);

        let w_tilde = match sources {
            Some(src) => self
                .solver
                .solve(dt, &s.w.zip_map(&src.w, |w, q| w + dt * q))?,
            None => self.solver.solve(dt, &s.w)?,
        };

        self.cross_diffusion(s);
        // reaction r = u F(w̃), kept in `flux` now that the cross-diffusion is done
        self.config
            .intake
            .intake_into(w_tilde.values(), &mut self.flux);
        for (r, u) in self.flux.iter_mut().zip(s.u.values()) {
            *r *= u;
        }
        let r = &self.flux;

        let mut u: Vec<f64> =
            s.u.values()
                .iter()
                .zip(&self.lap)
                .zip(r)
                .map(|((u, l), r)| u + dt * (l + alpha * r))
                .collect();
        if let Some(src) = sources {
            // forced steps recompute the bracket so the source sits inside the dt product
            for (((un, u0), l), (r, q)) in u
                .iter_mut()
                .zip(s.u.values())
                .zip(&self.lap)
                .zip(r.iter().zip(src.u.values()))
            {
                *un = u0 + dt * (l + alpha * r + q);
            }
        }
        let mut w = w_tilde.into_values();
        let mut clamped = 0.0;
        for (wi, r) in w.iter_mut().zip(r) {
            let next = *wi - dt * r;
            if next < 0.0 {
                clamped -= next;
                *wi = 0.0;
            } else {
                *wi = next;
            }
        }
        clamped *= grid.cell_volume();

        let kappa = dt * d / (1.0 + dt);
        let v_rhs = match sources {
            Some(src) => {
                let mut f = s.v.zip_map(&s.u, |v0, u0| v0 + dt * (u0 - v0) / (1.0 + dt));
                for (((f, v0), u0), q) in f
                    .values_mut()
                    .iter_mut()
                    .zip(s.v.values())
                    .zip(s.u.values())
                    .zip(src.v.values())
                {
                    *f = v0 + dt * (u0 - v0 + q) / (1.0 + dt);
                }
                f
            }
            None => s.v.zip_map(&s.u, |v0, u0| v0 + dt * (u0 - v0) / (1.0 + dt)),
        };
        let v = self.solver.solve(kappa, &v_rhs)?;

        let next = State {
            t: s.t + dt,
            u: Field::from_raw(grid, u),
            v,
            w: Field::from_raw(grid, w),
        };
        finite_or_dump(s, &next)?;
        Ok((next, clamped))
    }

    /// Forward Euler on all three equations with the same spatial operators.
    pub fn reference_step(
        &mut self,
        s: &State,
        dt: f64,
        sources: Option<&Sources>,
    ) -> Result<(State, f64), StepError> {
        let grid = *s.grid();
        let (alpha, d) = (self.config.alpha, self.config.d);
        let vol = grid.cell_volume();
        let n = grid.cell_count();
        let lap_v = s.v.laplacian();
        let lap_w = s.w.laplacian();
        self.cross_diffusion(s);
        let intake = &self.config.intake;
        let mut u = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut clamped = 0.0;
        for i in 0..n {
            let (ui, vi, wi) = (s.u.values()[i], s.v.values()[i], s.w.values()[i]);
            let (qu, qv, qw) = sources.map_or((0.0, 0.0, 0.0), |src| {
                (src.u.values()[i], src.v.values()[i], src.w.values()[i])
            });
            let r = ui * intake.intake_unchecked(wi);
            u.push(ui + dt * (self.lap[i] + alpha * r + qu));
            v.push(vi + dt * (d * lap_v.values()[i] + ui - vi + qv));
            let wn = wi + dt * (lap_w.values()[i] - r + qw);
            if wn < 0.0 {
                clamped -= wn * vol;
                w.push(0.0);
            } else {
                w.push(wn);
            }
        }
        let next = State {
            t: s.t + dt,
            u: Field::from_raw(grid, u),
            v: Field::from_raw(grid, v),
            w: Field::from_raw(grid, w),
        };
        finite_or_dump(s, &next)?;
        Ok((next, clamped))
    }
}

fn finite_or_dump(prev: &State, next: &State) -> Result<(), StepError> {
    for (field, f) in [("u", &next.u), ("v", &next.v), ("w", &next.w)] {
        if !f.is_finite() {
            return Err(StepError::NonFinite {
                field,
                last_good: Box::new(prev.clone()),
            });
        }
    }
    Ok(())
}

/// Receives the trajectory as it is computed.
pub trait Observer {
    fn on_start(&mut self, _s0: &State) {}
    /// After every step. Keep it cheap.
    fn on_step(&mut self, _prev: &State, _next: &State, _info: &StepInfo) {}
    /// At the snapshot cadence and at the final time.
    fn on_snapshot(&mut self, _prev: &State, _next: &State, _info: &StepInfo) {}
}

/// Discards everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullObserver;

impl Observer for NullObserver {}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub state: State,
    pub steps: u64,
    pub clamped_mass: f64,
    pub clamp_warnings: u64,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// Knobs for [`run_with`] beyond the solver configuration.
pub struct RunOptions<'a> {
    pub scheme: Scheme,
    pub dt: DtPolicy,
    /// Source terms as a function of the time at the start of the step.
    pub forcing: Option<&'a dyn Fn(f64) -> Sources>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            dt: DtPolicy::Adaptive,
            forcing: None,
        }
    }
}

/// Integrates from `s0` to `config.t_end` with the IMEX scheme and adaptive steps.
pub fn run(
    s0: &State,
    config: &SolverConfig,
    observer: &mut dyn Observer,
) -> Result<RunOutcome, StepError> {
    run_with(s0, config, observer, &RunOptions::default())
}

pub fn run_with(
    s0: &State,
    config: &SolverConfig,
    observer: &mut dyn Observer,
    options: &RunOptions<'_>,
) -> Result<RunOutcome, StepError> {
    s0.check()?;
    let mut stepper = Stepper::new(*s0.grid(), config.clone())?;
    let t_end = config.t_end;
    let clamp_limit = CLAMP_WARNING_FRACTION * s0.w.integrate();
    observer.on_start(s0);

    let mut out = RunOutcome {
        state: s0.clone(),
        steps: 0,
        clamped_mass: 0.0,
        clamp_warnings: 0,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
    };
    let start = s0.t;
    let mut snap_k: u64 = 1;
    let snap_time = |k: u64| (start + k as f64 * config.snapshot_every).min(t_end);
    let mut s = s0.clone();
    while s.t < t_end {
        let limit = match options.scheme {
            Scheme::Imex => stable_dt(&s, config)?,
            Scheme::Explicit => reference_dt(&s, config)?,
        };
        let next_snap = snap_time(snap_k);
        let (mut dt, target) = match options.dt {
            DtPolicy::Adaptive => (limit, next_snap),
            DtPolicy::Fixed(dt) => {
                if dt > limit * (1.0 + 1e-12) {
                    return Err(StepError::StepTooLarge { t: s.t, dt, limit });
                }
                (dt, t_end)
            }
        };
        // land exactly on the target when within a sliver of it, and never
        // leave a sliver behind
        let mut landed = false;
        let remaining = target - s.t;
        if s.t + dt >= target - 1e-9 * dt {
            dt = remaining;
            landed = true;
        } else if remaining < 1.1 * dt && options.dt == DtPolicy::Adaptive {
            dt = 0.5 * remaining;
        }
        let sources = options.forcing.map(|f| f(s.t));
        let (mut next, clamped) = match options.scheme {
            Scheme::Imex => stepper.step_forced(&s, dt, sources.as_ref())?,
            Scheme::Explicit => stepper.reference_step(&s, dt, sources.as_ref())?,
        };
        if landed {
            next.t = target;
        } else if let DtPolicy::Fixed(h) = options.dt {
            next.t = start + (out.steps + 1) as f64 * h;
        }
        let max_u = next.u.max_abs();
        if max_u > config.overflow_guard {
            return Err(StepError::BlowUp {
                t: next.t,
                max_u,
                guard: config.overflow_guard,
                last: Box::new(s),
            });
        }
        out.steps += 1;
        out.clamped_mass += clamped;
        out.min_dt = out.min_dt.min(dt);
        out.max_dt = out.max_dt.max(dt);
        let info = StepInfo {
            dt,
            clamped_mass: clamped,
            step_index: out.steps,
            clamp_warning: clamped > clamp_limit,
        };
        if info.clamp_warning {
            out.clamp_warnings += 1;
        }
        observer.on_step(&s, &next, &info);
        let mut snapped = false;
        while next.t >= snap_time(snap_k) && snap_time(snap_k - 1) < t_end {
            snapped = true;
            snap_k += 1;
        }
        if snapped || next.t >= t_end {
            observer.on_snapshot(&s, &next, &info);
        }
        s = next;
    }
    out.state = s;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::helmholtz::Backend;

    fn cfg(t_end: f64) -> SolverConfig {
        SolverConfig::new(
            1.0,
            1.0,
            MotilitySpec::PowerLaw { c0: 1.0, k: 1.0 },
            IntakeSpec::Hill { lambda: 1.0 },
            t_end,
        )
    }

    fn smooth_state(grid: Grid) -> State {
        init_state(
            grid,
            &Profile::expr("1 + 0.3*cos(pi*x/Lx)*cos(pi*y/Ly)"),
            &Profile::expr("1 + 0.2*cos(2*pi*x/Lx)"),
            &Profile::expr("0.5 + 0.4*cos(pi*x/Lx)"),
        )
        .unwrap()
    }

    #[test]
    fn init_state_examples() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let one = Profile::Constant(1.0);
        let s = init_state(g, &one, &one, &one).unwrap();
        assert_eq!(s.u, Field::constant(g, 1.0));
        let e = init_state(g, &Profile::Constant(0.0), &one, &one).unwrap_err();
        assert!(e.to_string().contains("u0 ≢ 0 violated"), "{e}");
        let mut v = vec![1.0; 16];
        v[5] = 0.0;
        let zero_cell = Profile::Values(Field::new(g, v).unwrap());
        assert!(init_state(g, &one, &zero_cell, &one).is_err());
        assert!(init_state(g, &one, &one, &Profile::Constant(-1.0)).is_err());
        assert!(init_state(g, &Profile::expr("x +"), &one, &one).is_err());
        assert!(init_state(g, &Profile::expr("1/(x-x)"), &one, &one).is_err());
    }

    #[test]
    fn expressions_use_float_arithmetic_and_extents() {
        let g = Grid::new_2d(4, 3, 2.0, 3.0).unwrap();
        let f = Profile::expr("1/2 + x/Lx + y/Ly").sample(g).unwrap();
        let [x, y] = g.center(1, 1);
        assert!((f.values()[g.index(1, 1)] - (0.5 + x / 2.0 + y / 3.0)).abs() < 1e-15);
        let g1 = Grid::new_1d(4, 2.0).unwrap();
        let f1 = Profile::expr("cos(pi*y/Ly)").sample(g1).unwrap();
        assert_eq!(f1, Field::constant(g1, 1.0));
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::new_1d(10, 1.0).unwrap();
        let mut c = cfg(1.0);
        c.motility = MotilitySpec::Tabulated {
            points: vec![[0.0, 1.0], [10.0, 1.0]],
        };
        let one = Profile::Constant(1.0);
        let s = init_state(g, &one, &one, &Profile::Constant(0.0)).unwrap();
        assert!((stable_dt(&s, &c).unwrap() - 0.002).abs() < 1e-15);

        let mut c2 = c.clone();
        c2.motility = MotilitySpec::Tabulated {
            points: vec![[0.0, 2.0], [10.0, 2.0]],
        };
        let a = guards(&s, &c).unwrap().diffusion;
        let b = guards(&s, &c2).unwrap().diffusion;
        assert!((a / b - 2.0).abs() < 1e-14);

        let s10 = init_state(g, &Profile::Constant(10.0), &one, &Profile::Constant(10.0)).unwrap();
        let lf = IntakeSpec::Hill { lambda: 1.0 }
            .lipschitz_bound(10.0)
            .unwrap();
        let gr = guards(&s10, &cfg(1.0)).unwrap();
        assert!((gr.uptake - 1.0 / (10.0 * lf)).abs() < 1e-14);
        assert!((gr.uptake - 0.1538).abs() < 1e-3);
        assert!(stable_dt(&s10, &cfg(1.0)).unwrap() <= 0.4 * gr.uptake);
    }

    #[test]
    fn homogeneous_equilibrium_is_bitwise_stationary() {
        for g in [
            Grid::new_1d(32, 1.0).unwrap(),
            Grid::new_2d(16, 8, 1.0, 2.0).unwrap(),
        ] {
            for a in [0.3, 1.0, 7.25] {
                for backend in [Backend::Spectral, Backend::ConjugateGradient] {
                    let mut c = cfg(10.0);
                    c.helmholtz.backend = backend;
                    let s0 = init_state(
                        g,
                        &Profile::Constant(a),
                        &Profile::Constant(a),
                        &Profile::Constant(0.0),
                    )
                    .unwrap();
                    let mut st = Stepper::new(g, c.clone()).unwrap();
                    let (s1, clamped) = st.step(&s0, 0.01).unwrap();
                    assert_eq!(
                        (s1.u.clone(), s1.v.clone(), s1.w.clone()),
                        (s0.u.clone(), s0.v.clone(), s0.w.clone())
                    );
                    assert_eq!(clamped, 0.0);
                    let (r1, _) = st.reference_step(&s0, 0.001, None).unwrap();
                    assert_eq!(r1.u, s0.u);
                    assert_eq!(r1.v, s0.v);
                    let out = run(&s0, &c, &mut NullObserver).unwrap();
                    assert_eq!(out.state.t, 10.0);
                    assert!(out.state.u.max_diff(&s0.u) <= 1e-12);
                    assert!(out.state.v.max_diff(&s0.v) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn no_nutrient_keeps_cell_mass_fixed() {
        let g = Grid::new_2d(16, 16, 1.0, 1.0).unwrap();
        let mut s = smooth_state(g);
        s.w = Field::zeros(g);
        let c = cfg(1.0);
        let m0 = s.u.integrate();
        let mut st = Stepper::new(g, c.clone()).unwrap();
        for _ in 0..50 {
            let dt = st.stable_dt(&s).unwrap();
            s = st.step(&s, dt).unwrap().0;
        }
        assert!((s.u.integrate() - m0).abs() <= 1e-13 * m0);
    }

    #[test]
    fn step_conserves_total_and_grows_mass() {
        for g in [
            Grid::new_1d(64, 2.0).unwrap(),
            Grid::new_2d(16, 16, 1.0, 1.0).unwrap(),
        ] {
            let c = cfg(1.0);
            let mut s = smooth_state(g);
            let total0 = s.total(1.0);
            let w_max0 = s.w.max_val();
            let mut st = Stepper::new(g, c.clone()).unwrap();
            for _ in 0..200 {
                let dt = st.stable_dt(&s).unwrap();
                let (next, clamped) = st.step(&s, dt).unwrap();
                assert_eq!(clamped, 0.0);
                let (a, b) = (s.total(1.0), next.total(1.0));
                assert!((a - b).abs() <= 1e-12 * a);
                assert!(next.u.integrate() >= s.u.integrate() * (1.0 - 1e-15));
                assert!(next.w.max_val() <= s.w.max_val() + 1e-12 * w_max0);
                assert!(
                    next.v.min_val() > 0.0 && next.u.min_val() >= 0.0 && next.w.min_val() >= 0.0
                );
                s = next;
            }
            assert!((s.total(1.0) - total0).abs() <= 1e-10 * total0);
        }
    }

    #[test]
    fn zero_end_time_returns_the_initial_state() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let s0 = smooth_state(g);
        let out = run(&s0, &cfg(0.0), &mut NullObserver).unwrap();
        assert_eq!(out.state, s0);
        assert_eq!(out.steps, 0);
    }

    #[derive(Default)]
    struct Recorder {
        starts: usize,
        steps: usize,
        snaps: Vec<f64>,
    }

    impl Observer for Recorder {
        fn on_start(&mut self, _: &State) {
            self.starts += 1;
        }
        fn on_step(&mut self, prev: &State, next: &State, info: &StepInfo) {
            assert!((next.t - prev.t - info.dt).abs() < 1e-12);
            self.steps += 1;
        }
        fn on_snapshot(&mut self, _: &State, next: &State, _: &StepInfo) {
            self.snaps.push(next.t);
        }
    }

    #[test]
    fn run_hits_snapshot_times_and_the_end_exactly() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let mut c = cfg(0.5);
        c.snapshot_every = 0.1;
        let mut rec = Recorder::default();
        let out = run(&smooth_state(g), &c, &mut rec).unwrap();
        assert_eq!(out.state.t, 0.5);
        assert_eq!(rec.starts, 1);
        assert_eq!(rec.steps as u64, out.steps);
        assert_eq!(rec.snaps.len(), 5);
        for (k, t) in rec.snaps.iter().enumerate() {
            assert!((t - 0.1 * (k + 1) as f64).abs() < 1e-12, "{:?}", rec.snaps);
        }
    }

    #[test]
    fn fixed_step_is_checked_against_the_limit() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let c = cfg(0.1);
        let opts = RunOptions {
            dt: DtPolicy::Fixed(1.0),
            ..Default::default()
        };
        assert!(matches!(
            run_with(&smooth_state(g), &c, &mut NullObserver, &opts),
            Err(StepError::StepTooLarge { .. })
        ));
        let opts = RunOptions {
            dt: DtPolicy::Fixed(1e-4),
            ..Default::default()
        };
        let out = run_with(&smooth_state(g), &c, &mut NullObserver, &opts).unwrap();
        assert_eq!(out.state.t, 0.1);
        assert_eq!(out.steps, 1000);
    }

    #[test]
    fn overflow_guard_is_distinct_from_nan() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let mut c = cfg(1.0);
        c.overflow_guard = 1.05;
        let s0 = smooth_state(g);
        let e = run(&s0, &c, &mut NullObserver).unwrap_err();
        assert!(matches!(e, StepError::BlowUp { .. }), "{e}");
        assert!(e.dump().is_some());

        let mut st = Stepper::new(g, cfg(1.0)).unwrap();
        let mut bad = s0.clone();
        bad.u.values_mut()[3] = f64::MAX;
        let e = st.step(&bad, 1e-3).unwrap_err();
        assert!(matches!(e, StepError::NonFinite { .. }), "{e}");
    }

    #[test]
    fn reference_scheme_conserves_and_agrees_in_the_small_step_limit() {
        let g = Grid::new_1d(32, 1.0).unwrap();
        let c = cfg(0.05);
        let s0 = smooth_state(g);
        let imex = |dt| {
            run_with(
                &s0,
                &c,
                &mut NullObserver,
                &RunOptions {
                    dt: DtPolicy::Fixed(dt),
                    ..Default::default()
                },
            )
            .unwrap()
            .state
        };
        let expl = |dt| {
            run_with(
                &s0,
                &c,
                &mut NullObserver,
                &RunOptions {
                    dt: DtPolicy::Fixed(dt),
                    scheme: Scheme::Explicit,
                    ..Default::default()
                },
            )
            .unwrap()
            .state
        };
        let (a, b) = (imex(1e-4), expl(1e-4));
        assert!((b.total(1.0) - s0.total(1.0)).abs() <= 1e-12 * s0.total(1.0));
        let d1 = a.u.max_diff(&b.u);
        let d2 = imex(5e-5).u.max_diff(&expl(5e-5).u);
        assert!(d1 > 0.0 && d2 < d1);
    }

    #[test]
    fn config_validation_names_the_constraint() {
        let mut c = cfg(1.0);
        c.d = -1.0;
        assert!(
            c.validate()
                .unwrap_err()
                .to_string()
                .contains("D must be > 0")
        );
        let mut c = cfg(1.0);
        c.cfl_safety = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(1.0);
        c.alpha = 0.0;
        assert!(c.validate().is_err());
    }
}
