//! Manufactured-solution convergence study.
//!
//! With `γ(v) = e^{-χv}`, Hill intake `F(w) = w²/(w²+λ)` and
//! `φ = cos(πx)e^{-t}` on the unit interval, the fields
//!
//! ```text
//! u = v = s := 2 + φ,    w = e^{-t}
//! ```
//!
//! solve the forced system `u_t = Δ(γ(v)u) + αuF(w) + S_u`,
//! `v_t = DΔv + u - v + S_v`, `w_t = Δw - uF(w) + S_w` with
//!
//! ```text
//! S_u = -φ - (q''(s) s_x² + q'(s) s_xx) - α s F(w),   q(s) = s e^{-χs}
//! S_v = -φ + Dπ²φ
//! S_w = -e^{-t} + s F(e^{-t})
//! ```
//!
//! where `q'(s) = e^{-χs}(1 - χs)`, `q''(s) = e^{-χs}(χ²s - 2χ)`,
//! `s_x = -π sin(πx)e^{-t}` and `s_xx = -π²φ`. All three satisfy the Neumann
//! condition at `x = 0, 1`.
//!
//! The spatial table refines `h` with `dt ∝ h²` and compares against the
//! exact solution; the temporal table refines `dt` on a fixed grid and
//! compares successive runs. A third table checks first-order decay of the
//! identity residuals on an unforced smooth run.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::diagnostics::{Monitor, MonitorSummary};
use crate::grid::{Field, Grid};
use crate::kinetics::{IntakeSpec, MotilitySpec};
use crate::stepper::{
    DtPolicy, NullObserver, Profile, RunOptions, SolverConfig, Sources, State, StepError,
    init_state, run_with,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manufactured {
    #[serde(rename = "D")]
    pub d: f64,
    pub alpha: f64,
    pub chi: f64,
    pub lambda: f64,
}

impl Manufactured {
    fn hill(&self, w: f64) -> f64 {
        w * w / (w * w + self.lambda)
    }

    /// `(u, v, w)` at `(t, x)`.
    pub fn exact(&self, t: f64, x: f64) -> (f64, f64, f64) {
        let s = 2.0 + (PI * x).cos() * (-t).exp();
        (s, s, (-t).exp())
    }

    pub fn exact_state(&self, grid: Grid, t: f64) -> State {
        let f = |k: usize| {
            Field::from_fn(grid, |[x, _]| {
                let e = self.exact(t, x);
                [e.0, e.1, e.2][k]
            })
        };
        State {
            t,
            u: f(0),
            v: f(1),
            w: f(2),
        }
    }

    pub fn sources(&self, grid: Grid, t: f64) -> Sources {
        let decay = (-t).exp();
        let (chi, d, alpha) = (self.chi, self.d, self.alpha);
        let f_w = self.hill(decay);
        let su = Field::from_fn(grid, |[x, _]| {
            let phi = (PI * x).cos() * decay;
            let s = 2.0 + phi;
            let sx = -PI * (PI * x).sin() * decay;
            let sxx = -PI * PI * phi;
            let e = (-chi * s).exp();
            let q1 = e * (1.0 - chi * s);
            let q2 = e * (chi * chi * s - 2.0 * chi);
            -phi - (q2 * sx * sx + q1 * sxx) - alpha * s * f_w
        });
        let sv = Field::from_fn(grid, |[x, _]| {
            let phi = (PI * x).cos() * decay;
            -phi + d * PI * PI * phi
        });
        let sw = Field::from_fn(grid, |[x, _]| {
            let s = 2.0 + (PI * x).cos() * decay;
            -decay + s * f_w
        });
        Sources {
            u: su,
            v: sv,
            w: sw,
        }
    }

    pub fn solver_config(&self, t_end: f64, cfl_safety: f64) -> SolverConfig {
        let mut c = SolverConfig::new(
            self.d,
            self.alpha,
            MotilitySpec::Exponential { chi: self.chi },
            IntakeSpec::Hill {
                lambda: self.lambda,
            },
            t_end,
        );
        c.cfl_safety = cfl_safety;
        c.snapshot_every = t_end.max(f64::MIN_POSITIVE);
        c
    }

    /// Forced fixed-step run from the exact initial data.
    pub fn solve(
        &self,
        n: usize,
        dt: f64,
        t_end: f64,
        cfl_safety: f64,
    ) -> Result<State, StepError> {
        let grid = Grid::new_1d(n, 1.0)?;
        let s0 = self.exact_state(grid, 0.0);
        let forcing = |t: f64| self.sources(grid, t);
        let opts = RunOptions {
            dt: DtPolicy::Fixed(dt),
            forcing: Some(&forcing),
            ..Default::default()
        };
        Ok(run_with(
            &s0,
            &self.solver_config(t_end, cfl_safety),
            &mut NullObserver,
            &opts,
        )?
        .state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialStudy {
    pub n: Vec<usize>,
    /// `dt = dt_per_h2 · h²`.
    pub dt_per_h2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalStudy {
    pub n: usize,
    /// Successively halved steps.
    pub dt: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualStudy {
    pub n: usize,
    pub t_end: f64,
    pub dt: Vec<f64>,
    pub u0: String,
    pub v0: String,
    pub w0: String,
    /// Constant of the homogeneous equilibrium `(a, a, 0)`.
    pub homogeneous: f64,
}

fn spatial_range() -> [f64; 2] {
    [1.8, 2.2]
}

fn temporal_range() -> [f64; 2] {
    [0.8, 1.2]
}

fn ratio_range() -> [f64; 2] {
    [0.35, 0.65]
}

fn homogeneous_tol() -> f64 {
    1e-13
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsExpect {
    #[serde(default = "spatial_range")]
    pub spatial_order: [f64; 2],
    #[serde(default = "temporal_range")]
    pub temporal_order: [f64; 2],
    #[serde(default = "ratio_range")]
    pub residual_ratio: [f64; 2],
    #[serde(default = "homogeneous_tol")]
    pub homogeneous_residual: f64,
}

impl Default for MmsExpect {
    fn default() -> Self {
        Self {
            spatial_order: spatial_range(),
            temporal_order: temporal_range(),
            residual_ratio: ratio_range(),
            homogeneous_residual: homogeneous_tol(),
        }
    }
}

fn mms_cfl() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmsConfig {
    pub name: String,
    pub t_end: f64,
    #[serde(default = "mms_cfl")]
    pub cfl_safety: f64,
    pub manufactured: Manufactured,
    pub spatial: SpatialStudy,
    pub temporal: TemporalStudy,
    pub residuals: ResidualStudy,
    #[serde(default)]
    pub expect: MmsExpect,
}

pub fn parse_mms_config(text: &str) -> Result<MmsConfig, String> {
    let c: MmsConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if c.spatial.n.len() < 2 || c.temporal.dt.len() < 3 || c.residuals.dt.len() < 2 {
        return Err("need at least 2 spatial levels, 3 time steps and 2 residual steps".into());
    }
    Ok(c)
}

/// Error norms of a run against a reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Errors {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl Errors {
    pub fn between(a: &State, b: &State) -> Self {
        Self {
            u: a.u.max_diff(&b.u),
            v: a.v.max_diff(&b.v),
            w: a.w.max_diff(&b.w),
        }
    }

    pub fn max(&self) -> f64 {
        self.u.max(self.v).max(self.w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpatialRow {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub error: Errors,
    /// `log2(e(2h)/e(h))` against the previous row.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemporalRow {
    /// The finer step of the compared pair.
    pub dt: f64,
    /// `‖U_{2dt} - U_dt‖∞`.
    pub difference: Errors,
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub dt: f64,
    pub residual_g: f64,
    pub residual_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MmsReport {
    pub spatial: Vec<SpatialRow>,
    pub temporal: Vec<TemporalRow>,
    pub residuals: Vec<ResidualRow>,
    /// `r(dt/2)/r(dt)` for successive residual rows.
    pub residual_g_ratios: Vec<f64>,
    pub residual_energy_ratios: Vec<f64>,
    pub homogeneous_residual_g: f64,
    pub homogeneous_residual_energy: f64,
    /// Monitor summary of the finest unforced residual run.
    pub unforced_summary: Option<MonitorSummary>,
    pub spatial_ok: bool,
    pub temporal_ok: bool,
    pub residuals_ok: bool,
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn within(x: f64, [lo, hi]: [f64; 2]) -> bool {
    (lo..=hi).contains(&x)
}

fn residual_run(
    cfg: &MmsConfig,
    dt: f64,
    physics: &SolverConfig,
) -> Result<(ResidualRow, MonitorSummary), String> {
    let r = &cfg.residuals;
    let grid = Grid::new_1d(r.n, 1.0).map_err(|e| e.to_string())?;
    let s0 = init_state(
        grid,
        &Profile::expr(r.u0.clone()),
        &Profile::expr(r.v0.clone()),
        &Profile::expr(r.w0.clone()),
    )
    .map_err(|e| e.to_string())?;
    let mut c = physics.clone();
    c.t_end = r.t_end;
    c.snapshot_every = r.t_end / 10.0;
    let mut monitor = Monitor::new(&s0, &c).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        dt: DtPolicy::Fixed(dt),
        ..Default::default()
    };
    run_with(&s0, &c, &mut monitor, &opts).map_err(|e| e.to_string())?;
    if let Some(e) = monitor.error() {
        return Err(e.to_string());
    }
    let last = monitor.records().last().ok_or("no records")?;
    let row = ResidualRow {
        dt,
        residual_g: last.residual_g,
        residual_energy: last.residual_energy,
    };
    Ok((row, monitor.into_parts().1))
}

fn homogeneous_residuals(cfg: &MmsConfig, physics: &SolverConfig) -> Result<(f64, f64), String> {
    use crate::diagnostics::{
        Physics, StepPair, compute_g_with, energy_residual, g_evolution_residual,
    };
    use crate::helmholtz::HelmholtzSolver;
    let r = &cfg.residuals;
    let grid = Grid::new_1d(r.n, 1.0).map_err(|e| e.to_string())?;
    let a = Profile::Constant(r.homogeneous);
    let s0 = init_state(grid, &a, &a, &Profile::Constant(0.0)).map_err(|e| e.to_string())?;
    let mut stepper =
        crate::stepper::Stepper::new(grid, physics.clone()).map_err(|e| e.to_string())?;
    let dt = r.dt[0];
    let (s1, _) = stepper.step(&s0, dt).map_err(|e| e.to_string())?;
    let mut solver = HelmholtzSolver::new(grid, physics.helmholtz).map_err(|e| e.to_string())?;
    let g0 = compute_g_with(&mut solver, &s0, physics.d).map_err(|e| e.to_string())?;
    let g1 = compute_g_with(&mut solver, &s1, physics.d).map_err(|e| e.to_string())?;
    let pair = StepPair {
        prev: &s0,
        next: &s1,
        g_prev: &g0,
        g_next: &g1,
        dt,
    };
    let p = Physics::of(physics);
    Ok((
        g_evolution_residual(&mut solver, &pair, &p).map_err(|e| e.to_string())?,
        energy_residual(&pair, &p),
    ))
}

/// Runs the three tables.
pub fn run_study(cfg: &MmsConfig) -> Result<MmsReport, String> {
    let m = &cfg.manufactured;
    let mut spatial = Vec::new();
    for &n in &cfg.spatial.n {
        let h = 1.0 / n as f64;
        let dt = cfg.spatial.dt_per_h2 * h * h;
        let num = m
            .solve(n, dt, cfg.t_end, cfg.cfl_safety)
            .map_err(|e| e.to_string())?;
        let exact = m.exact_state(*num.grid(), cfg.t_end);
        let error = Errors::between(&num, &exact);
        let order = spatial
            .last()
            .map(|p: &SpatialRow| order(p.error.max(), error.max()));
        spatial.push(SpatialRow {
            n,
            h,
            dt,
            error,
            order,
        });
    }

    let mut runs = Vec::new();
    for &dt in &cfg.temporal.dt {
        runs.push(
            m.solve(cfg.temporal.n, dt, cfg.t_end, cfg.cfl_safety)
                .map_err(|e| e.to_string())?,
        );
    }
    let mut temporal: Vec<TemporalRow> = Vec::new();
    for (k, pair) in runs.windows(2).enumerate() {
        let difference = Errors::between(&pair[0], &pair[1]);
        let order = temporal
            .last()
            .map(|p| order(p.difference.max(), difference.max()));
        temporal.push(TemporalRow {
            dt: cfg.temporal.dt[k + 1],
            difference,
            order,
        });
    }

    let physics = m.solver_config(cfg.residuals.t_end, cfg.cfl_safety);
    let mut residuals = Vec::new();
    let mut summary = None;
    for &dt in &cfg.residuals.dt {
        let (row, s) = residual_run(cfg, dt, &physics)?;
        residuals.push(row);
        summary = Some(s);
    }
    let ratios = |f: fn(&ResidualRow) -> f64| {
        residuals
            .windows(2)
            .map(|p| f(&p[1]) / f(&p[0]))
            .collect::<Vec<_>>()
    };
    let residual_g_ratios = ratios(|r| r.residual_g);
    let residual_energy_ratios = ratios(|r| r.residual_energy);
    let (hg, he) = homogeneous_residuals(cfg, &physics)?;

    let e = &cfg.expect;
    let spatial_ok = spatial
        .iter()
        .filter_map(|r| r.order)
        .all(|o| within(o, e.spatial_order));
    let temporal_ok = temporal
        .iter()
        .filter_map(|r| r.order)
        .all(|o| within(o, e.temporal_order));
    let residuals_ok = residual_g_ratios
        .iter()
        .chain(&residual_energy_ratios)
        .all(|&r| within(r, e.residual_ratio))
        && hg <= e.homogeneous_residual
        && he <= e.homogeneous_residual;
    Ok(MmsReport {
        spatial,
        temporal,
        residuals,
        residual_g_ratios,
        residual_energy_ratios,
        homogeneous_residual_g: hg,
        homogeneous_residual_energy: he,
        unforced_summary: summary,
        spatial_ok,
        temporal_ok,
        residuals_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m() -> Manufactured {
        Manufactured {
            d: 1.0,
            alpha: 1.0,
            chi: 1.0,
            lambda: 1.0,
        }
    }

    /// Centered finite differences of the exact solution as an independent
    /// check of the hand-derived sources.
    #[test]
    fn sources_match_finite_difference_residual() {
        let m = m();
        let grid = Grid::new_1d(20, 1.0).unwrap();
        let t = 0.3;
        let src = m.sources(grid, t);
        let gamma = |v: f64| (-m.chi * v).exp();
        let (e, k) = (1e-4, 1e-5);
        for (i, [x, _]) in grid.centers().enumerate() {
            let at = |t: f64, x: f64| m.exact(t, x);
            let ut = (at(t + k, x).0 - at(t - k, x).0) / (2.0 * k);
            let q = |x: f64| {
                let (u, v, _) = at(t, x);
                gamma(v) * u
            };
            let lap_q = (q(x + e) - 2.0 * q(x) + q(x - e)) / (e * e);
            let (u, v, w) = at(t, x);
            let fw = w * w / (w * w + m.lambda);
            let su = ut - lap_q - m.alpha * u * fw;
            let vxx = (at(t, x + e).1 - 2.0 * v + at(t, x - e).1) / (e * e);
            let vt = (at(t + k, x).1 - at(t - k, x).1) / (2.0 * k);
            let sv = vt - m.d * vxx - u + v;
            let wt = (at(t + k, x).2 - at(t - k, x).2) / (2.0 * k);
            let sw = wt + u * fw;
            assert!((src.u.values()[i] - su).abs() < 1e-5, "{i}");
            assert!((src.v.values()[i] - sv).abs() < 1e-5, "{i}");
            assert!((src.w.values()[i] - sw).abs() < 1e-8, "{i}");
        }
    }

    #[test]
    fn exact_solution_obeys_neumann_condition() {
        let m = m();
        let d = 1e-6;
        for t in [0.0, 0.7] {
            assert!((m.exact(t, d).0 - m.exact(t, 0.0).0).abs() < 1e-10);
            assert!((m.exact(t, 1.0 - d).0 - m.exact(t, 1.0).0).abs() < 1e-10);
        }
    }

    #[test]
    fn forced_run_tracks_the_exact_solution() {
        let m = m();
        let num = m.solve(32, 2e-4, 0.2, 0.9).unwrap();
        let exact = m.exact_state(*num.grid(), 0.2);
        assert!(Errors::between(&num, &exact).max() < 2e-3);
    }
}
