//! Run configurations, the built-in scenario catalogue, and the pipeline that
//! runs a scenario and writes its time series, snapshots, plots and report.

pub mod config;
pub mod mms;
pub mod output;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::diagnostics::{Monitor, MonitorSummary, compute_g};
use crate::kinetics::{DEFAULT_RANGE, validate_assumptions};
use crate::stepper::{Observer, State, StepInfo, run};

pub use config::{ConfigError, RunConfig, load_config, parse_config};
pub use mms::{MmsConfig, parse_mms_config};
pub use output::OutputError;
pub use report::{CERTIFICATES, CONSERVATION_RTOL, Outcome, ScenarioReport, Status};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "DSM_OUTPUT_ROOT";

const CATALOGUE: [(&str, &str); 5] = [
    (
        "boundedness-power",
        include_str!("../../scenarios/boundedness-power.toml"),
    ),
    (
        "boundedness-exp",
        include_str!("../../scenarios/boundedness-exp.toml"),
    ),
    (
        "equilibrium-largeD",
        include_str!("../../scenarios/equilibrium-largeD.toml"),
    ),
    (
        "dsm-original",
        include_str!("../../scenarios/dsm-original.toml"),
    ),
    (
        "mms-convergence",
        include_str!("../../scenarios/mms-convergence.toml"),
    ),
];

/// A built-in or user scenario.
#[derive(Clone, Debug)]
pub enum Scenario {
    Run(Box<RunConfig>),
    Mms(Box<MmsConfig>),
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Self::Run(c) => &c.name,
            Self::Mms(c) => &c.name,
        }
    }
}

pub fn builtin_names() -> Vec<&'static str> {
    CATALOGUE.iter().map(|(n, _)| *n).collect()
}

/// The TOML source of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    CATALOGUE.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    let text = builtin_source(name)?;
    Some(if name == "mms-convergence" {
        Scenario::Mms(Box::new(
            parse_mms_config(text).expect("built-in MMS config is valid"),
        ))
    } else {
        Scenario::Run(Box::new(
            parse_config(text).expect("built-in config is valid"),
        ))
    })
}

/// `$DSM_OUTPUT_ROOT`, or `out`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// `output.dir` if set, else `<root>/<name>`.
pub fn output_dir(cfg: &RunConfig, root: &Path) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .unwrap_or_else(|| root.join(&cfg.name))
}

/// Monitor plus field dumps at the record cadence.
struct Recorder<'a> {
    monitor: Monitor,
    cfg: &'a RunConfig,
    dir: &'a Path,
    records: usize,
    artifacts: Vec<PathBuf>,
    io_error: Option<String>,
}

impl Recorder<'_> {
    fn dump(&mut self, s: &State, tag: &str) {
        for name in &self.cfg.output.fields {
            let field = match name.as_str() {
                "u" => s.u.clone(),
                "v" => s.v.clone(),
                "w" => s.w.clone(),
                _ => match compute_g(s, self.cfg.physics.d) {
                    Ok(g) => g,
                    Err(e) => {
                        self.io_error.get_or_insert(e.to_string());
                        continue;
                    }
                },
            };
            match output::emit_snapshot(&self.dir.join("snapshots"), name, tag, s.t, &field) {
                Ok(p) => self.artifacts.push(p),
                Err(e) => {
                    self.io_error.get_or_insert(e.to_string());
                }
            }
        }
    }
}

impl Observer for Recorder<'_> {
    fn on_start(&mut self, s0: &State) {
        self.monitor.on_start(s0);
        self.dump(s0, "initial");
    }

    fn on_step(&mut self, prev: &State, next: &State, info: &StepInfo) {
        self.monitor.on_step(prev, next, info);
    }

    fn on_snapshot(&mut self, prev: &State, next: &State, info: &StepInfo) {
        self.monitor.on_snapshot(prev, next, info);
        self.records += 1;
        if let Some(k) = self.cfg.output.dump_every
            && self.records.is_multiple_of(k) {
                self.dump(next, &format!("{:05}", self.records));
            }
    }
}

/// Fills the certificates of a simulation report from the monitor summary.
pub fn evaluate(
    report: &mut ScenarioReport,
    cfg: &RunConfig,
    sm: &MonitorSummary,
    final_state: Option<&State>,
) {
    report.set(
        "conservation",
        Outcome::from_bool(sm.max_drift <= CONSERVATION_RTOL),
        format!(
            "max relative drift {:.3e} (clamped mass {:.3e} removed) over {} steps",
            sm.max_drift, sm.clamped_mass, sm.steps
        ),
    );
    report.set(
        "mass_monotone",
        Outcome::from_bool(sm.mass_decreases == 0),
        format!(
            "{} steps with a decrease of ∫u beyond rounding; largest relative decrease {:.3e}",
            sm.mass_decreases, sm.worst_mass_decrease
        ),
    );
    report.set(
        "w_max_principle",
        Outcome::from_bool(sm.w_max_violations == 0),
        format!(
            "max w - max w0 peaked at {:.3e} over {} snapshots",
            sm.worst_w_excess, sm.snapshots
        ),
    );
    report.set(
        "v_positivity",
        Outcome::from_bool(sm.v_nonpositive == 0 && sm.v_floor > 0.0),
        format!("min v over the run {:.6e}", sm.v_floor),
    );
    match cfg.expect.v_floor_ratio {
        Some(r) => report.set(
            "v_floor",
            Outcome::from_bool(sm.v_floor >= r * sm.initial_min_v),
            format!(
                "min v / min v0 = {:.6e} (required >= {r:e})",
                sm.v_floor / sm.initial_min_v
            ),
        ),
        None => report.set("v_floor", Outcome::NotApplicable, "no floor ratio expected"),
    }
    match sm.certificate_failures {
        Some(n) => report.set(
            "v_upper_bound",
            Outcome::from_bool(n == 0),
            format!(
                "{n} failing snapshots; worst slack / max v = {:.6e} (tolerance -1e-6)",
                sm.worst_cert_ratio
            ),
        ),
        None => report.set(
            "v_upper_bound",
            Outcome::NotApplicable,
            sm.certificate_note.clone().unwrap_or_default(),
        ),
    }
    report.set(
        "identity_residuals",
        Outcome::NotApplicable,
        format!(
            "max residuals {:.3e} and {:.3e}; convergence is checked by dt refinement in mms-convergence",
            sm.max_residual_g, sm.max_residual_energy
        ),
    );
    match cfg.expect.plateau {
        Some(tol) => {
            let [_, _, q3, q4] = sm.quarter_max_u;
            let growth = (q4 - q3) / q3;
            report.set(
                "u_plateau",
                Outcome::from_bool(growth < tol),
                format!("max ‖u‖∞ third quarter {q3:.6e}, last quarter {q4:.6e}, growth {growth:.3e} (< {tol})"),
            );
        }
        None => report.set(
            "u_plateau",
            Outcome::NotApplicable,
            "boundedness monitored, not certified",
        ),
    }
    match (cfg.expect.equilibrium, final_state) {
        (Some(eq), Some(_)) => {
            let (du, dw) = (
                report.headline.eq_du.unwrap_or(f64::NAN),
                report.headline.eq_dw.unwrap_or(f64::NAN),
            );
            report.set(
                "equilibrium",
                Outcome::from_bool(du <= eq.u && dw <= eq.w),
                format!(
                    "‖u - u*‖∞ = {du:.3e} (<= {:e}), ‖w‖∞ = {dw:.3e} (<= {:e}), u* = {:.12}",
                    eq.u, eq.w, sm.u_star
                ),
            );
        }
        (Some(_), None) => report.set("equilibrium", Outcome::Fail, "run did not reach t_end"),
        (None, _) => report.set(
            "equilibrium",
            Outcome::NotApplicable,
            "no equilibrium expected",
        ),
    }
    report.set(
        "mms_order",
        Outcome::NotApplicable,
        "manufactured-solution study only",
    );
}

/// Runs a configuration and writes everything under `dir`. Solver aborts are
/// recorded in the report; only output failures are returned as errors.
pub fn run_scenario(cfg: &RunConfig, dir: &Path) -> Result<ScenarioReport, OutputError> {
    let start = Instant::now();
    let mut report = ScenarioReport::new(&cfg.name);
    report.config = Some(cfg.clone());
    let finish = |mut report: ScenarioReport| -> Result<ScenarioReport, OutputError> {
        report.wall_seconds = start.elapsed().as_secs_f64();
        report.write(dir)?;
        Ok(report)
    };

    report.assumptions =
        validate_assumptions(&cfg.physics.gamma, &cfg.physics.intake, DEFAULT_RANGE).ok();
    let s0 = match cfg.initial_state() {
        Ok(s) => s,
        Err(e) => {
            report.abort(e.to_string());
            return finish(report);
        }
    };
    let sc = cfg.solver_config();
    let monitor = match Monitor::new(&s0, &sc) {
        Ok(m) => m,
        Err(e) => {
            report.abort(e.to_string());
            return finish(report);
        }
    };
    report.certificate_params = monitor.certificate().copied();
    let mut rec = Recorder {
        monitor,
        cfg,
        dir,
        records: 0,
        artifacts: Vec::new(),
        io_error: None,
    };
    let outcome = run(&s0, &sc, &mut rec);
    let final_state = match outcome {
        Ok(out) => {
            report.set(
                "completed",
                Outcome::Pass,
                format!("reached t = {} in {} steps", out.state.t, out.steps),
            );
            report.headline.steps = Some(out.steps);
            report.headline.min_dt = Some(out.min_dt).filter(|x| x.is_finite());
            report.headline.max_dt = Some(out.max_dt);
            rec.dump(&out.state, "final");
            Some(out.state)
        }
        Err(e) => {
            if let Some(last) = e.dump() {
                rec.dump(last, "abort");
            }
            report.abort(e.to_string());
            None
        }
    };
    if let Some(e) = rec.monitor.error()
        && report.status == Status::Completed {
            report.abort(format!("diagnostics: {e}"));
        }
    report.certificate_params = rec
        .monitor
        .certificate()
        .copied()
        .or(report.certificate_params);
    let Recorder {
        monitor,
        artifacts,
        io_error,
        ..
    } = rec;
    if let Some(e) = io_error {
        report.artifacts = artifacts;
        return Err(OutputError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::other(e),
        });
    }
    report.artifacts = artifacts;
    let (records, summary) = monitor.into_parts();

    let h = &mut report.headline;
    if let Some(last) = records.last() {
        h.final_t = Some(last.t);
        h.final_u_linf = Some(last.u_linf);
        h.eq_du = Some(last.eq_du);
        h.eq_dv = Some(last.eq_dv);
        h.eq_dw = Some(last.eq_dw);
    }
    h.u_star = Some(summary.u_star);
    h.max_certificate_violation = summary
        .certificate_failures
        .map(|_| records.iter().map(|r| -r.cert_slack).fold(0.0, f64::max));
    h.conservation_drift = Some(summary.max_drift);
    h.clamped_mass = Some(summary.clamped_mass);
    h.v_floor = Some(summary.v_floor);
    evaluate(&mut report, cfg, &summary, final_state.as_ref());

    let csv = dir.join("timeseries.csv");
    output::emit_timeseries_csv(&csv, &records)?;
    report.artifacts.push(csv);
    if cfg.output.plots {
        let plot = output::Plot {
            title: cfg.name.clone(),
            x_label: "t".into(),
            y_label: "diagnostics".into(),
            log_y: cfg.output.log_y,
            series: cfg
                .output
                .series
                .iter()
                .filter_map(|s| output::Series::from_records(&records, s))
                .collect(),
        };
        let path = dir.join("diagnostics.svg");
        output::emit_svg_plot(&path, &plot)?;
        report.artifacts.push(path);
    }
    report.summary = Some(summary);
    finish(report)
}

/// Runs the manufactured-solution study and writes its report under `dir`.
pub fn run_mms(cfg: &MmsConfig, dir: &Path) -> Result<ScenarioReport, OutputError> {
    let start = Instant::now();
    let mut report = ScenarioReport::new(&cfg.name);
    report.mms_config = Some(cfg.clone());
    match mms::run_study(cfg) {
        Ok(m) => {
            report.set(
                "completed",
                Outcome::Pass,
                "all refinement runs reached their end time",
            );
            let orders = |v: Vec<Option<f64>>| {
                v.into_iter()
                    .flatten()
                    .map(|o| format!("{o:.3}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            report.set(
                "mms_order",
                Outcome::from_bool(m.spatial_ok && m.temporal_ok),
                format!(
                    "spatial orders [{}] (range {:?}), temporal orders [{}] (range {:?})",
                    orders(m.spatial.iter().map(|r| r.order).collect()),
                    cfg.expect.spatial_order,
                    orders(m.temporal.iter().map(|r| r.order).collect()),
                    cfg.expect.temporal_order
                ),
            );
            report.set(
                "identity_residuals",
                Outcome::from_bool(m.residuals_ok),
                format!(
                    "halving ratios {:?} and {:?} (range {:?}); homogeneous {:.1e}, {:.1e}",
                    m.residual_g_ratios,
                    m.residual_energy_ratios,
                    cfg.expect.residual_ratio,
                    m.homogeneous_residual_g,
                    m.homogeneous_residual_energy
                ),
            );
            if let Some(sm) = &m.unforced_summary {
                report.set(
                    "conservation",
                    Outcome::from_bool(sm.max_drift <= CONSERVATION_RTOL),
                    format!(
                        "unforced residual run: max relative drift {:.3e}",
                        sm.max_drift
                    ),
                );
                report.set(
                    "mass_monotone",
                    Outcome::from_bool(sm.mass_decreases == 0),
                    format!(
                        "unforced residual run: {} decreasing steps",
                        sm.mass_decreases
                    ),
                );
                report.set(
                    "w_max_principle",
                    Outcome::from_bool(sm.w_max_violations == 0),
                    format!(
                        "unforced residual run: max w - max w0 peaked at {:.3e}",
                        sm.worst_w_excess
                    ),
                );
                report.set(
                    "v_positivity",
                    Outcome::from_bool(sm.v_nonpositive == 0 && sm.v_floor > 0.0),
                    format!("unforced residual run: min v {:.6e}", sm.v_floor),
                );
                if let Some(n) = sm.certificate_failures {
                    report.set(
                        "v_upper_bound",
                        Outcome::from_bool(n == 0),
                        format!(
                            "unforced residual run: worst slack / max v {:.6e}",
                            sm.worst_cert_ratio
                        ),
                    );
                }
            }
            report.mms = Some(m);
        }
        Err(e) => report.abort(e),
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    report.write(dir)?;
    Ok(report)
}

/// Runs any scenario into `dir`.
pub fn run_any(s: &Scenario, dir: &Path) -> Result<ScenarioReport, OutputError> {
    match s {
        Scenario::Run(c) => run_scenario(c, dir),
        Scenario::Mms(c) => run_mms(c, dir),
    }
}

/// Independent runs on parallel threads, each into its own directory.
pub fn sweep(jobs: &[(Scenario, PathBuf)]) -> Vec<Result<ScenarioReport, OutputError>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(s, dir)| scope.spawn(move || run_any(s, dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}
