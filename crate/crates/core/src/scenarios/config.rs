//! Run configuration: a strict TOML document with `grid`, `physics`,
//! `initial`, `stepper`, `helmholtz`, `output` and `expect` tables.
//!
//! ```toml
//! name = "example"
//!
//! [grid]
//! dim = 1
//! n = 64
//!
//! [physics]
//! D = 1.0
//! alpha = 1.0
//! gamma = { family = "power", c0 = 1.0, k = 1.0 }
//! intake = { family = "hill", lambda = 1.0 }
//!
//! [stepper]
//! t_end = 1.0
//! ```

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError, Snapshot};
use crate::helmholtz::HelmholtzSettings;
use crate::kinetics::{IntakeSpec, MotilitySpec};
use crate::stepper::{
    DEFAULT_CFL_SAFETY, DEFAULT_OVERFLOW_GUARD, Profile, SolverConfig, State, StepError, init_state,
};

pub const DEFAULT_U0: &str = "1 + 0.1*cos(pi*x/Lx)*cos(pi*y/Ly)";

/// Snapshots per run when `output.snapshot_every` is not given.
pub const DEFAULT_SNAPSHOTS: f64 = 200.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("initial data: {0}")]
    Initial(#[from] StepError),
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

/// A scalar or one value per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> PerAxis<T> {
    pub fn resolve(&self, dim: usize, key: &str) -> Result<Vec<T>, ConfigError> {
        match self {
            Self::One(x) => Ok(vec![*x; dim]),
            Self::Many(xs) if xs.len() == dim => Ok(xs.clone()),
            Self::Many(xs) => Err(invalid(
                key,
                format!("expected {dim} entries, got {}", xs.len()),
            )),
        }
    }
}

fn unit_length() -> PerAxis<f64> {
    PerAxis::One(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub dim: usize,
    pub n: PerAxis<usize>,
    /// Domain extent per axis; the unit interval or square by default.
    #[serde(rename = "L", default = "unit_length")]
    pub l: PerAxis<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsBlock {
    #[serde(rename = "D")]
    pub d: f64,
    pub alpha: f64,
    pub gamma: MotilitySpec,
    pub intake: IntakeSpec,
}

/// An initial profile: a number, an expression, or a snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Number(f64),
    Expression(String),
    File { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    /// Each selected field is multiplied by `1 + amplitude·ξ`, `ξ ~ U(-1, 1)`.
    pub amplitude: f64,
    #[serde(default = "noise_fields")]
    pub fields: Vec<String>,
}

fn noise_fields() -> Vec<String> {
    vec!["u".into()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default = "default_u0")]
    pub u0: ProfileSpec,
    #[serde(default = "one")]
    pub v0: ProfileSpec,
    #[serde(default = "one")]
    pub w0: ProfileSpec,
    #[serde(default)]
    pub noise: Option<NoiseBlock>,
}

fn default_u0() -> ProfileSpec {
    ProfileSpec::Expression(DEFAULT_U0.into())
}

fn one() -> ProfileSpec {
    ProfileSpec::Number(1.0)
}

impl Default for InitialBlock {
    fn default() -> Self {
        Self {
            u0: default_u0(),
            v0: one(),
            w0: one(),
            noise: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperBlock {
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Unbounded when absent.
    #[serde(default)]
    pub dt_max: Option<f64>,
    pub t_end: f64,
    #[serde(default = "default_guard")]
    pub overflow_guard: f64,
}

fn default_cfl() -> f64 {
    DEFAULT_CFL_SAFETY
}

fn default_guard() -> f64 {
    DEFAULT_OVERFLOW_GUARD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Output directory; `<root>/<name>` when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Time between records; `t_end / 200` when absent.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    /// Fields written as snapshot files (`u`, `v`, `w`, `g`).
    #[serde(default = "dump_fields")]
    pub fields: Vec<String>,
    /// Also dump fields at every k-th record; only initial and final otherwise.
    #[serde(default)]
    pub dump_every: Option<usize>,
    #[serde(default = "yes")]
    pub plots: bool,
    #[serde(default = "plot_series")]
    pub series: Vec<String>,
    #[serde(default = "yes")]
    pub log_y: bool,
}

fn dump_fields() -> Vec<String> {
    ["u", "v", "w"].map(String::from).to_vec()
}

fn plot_series() -> Vec<String> {
    ["u_linf", "max_v", "max_w", "min_v"]
        .map(String::from)
        .to_vec()
}

fn yes() -> bool {
    true
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_every: None,
            fields: dump_fields(),
            dump_every: None,
            plots: true,
            series: plot_series(),
            log_y: true,
        }
    }
}

/// Thresholds for the scenario-specific checks. Absent entries are reported
/// as not applicable.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectBlock {
    /// Max growth of the running `‖u‖∞` from the third to the last quarter.
    #[serde(default)]
    pub plateau: Option<f64>,
    /// Required `min v` over the run relative to `min v₀`.
    #[serde(default)]
    pub v_floor_ratio: Option<f64>,
    #[serde(default)]
    pub equilibrium: Option<EquilibriumExpect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumExpect {
    /// Bound on `‖u(T) - u*‖∞`.
    pub u: f64,
    /// Bound on `‖w(T)‖∞`.
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Seed for the optional noise perturbation.
    #[serde(default)]
    pub seed: u64,
    pub grid: GridBlock,
    pub physics: PhysicsBlock,
    #[serde(default)]
    pub initial: InitialBlock,
    pub stepper: StepperBlock,
    #[serde(default)]
    pub helmholtz: HelmholtzSettings,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub expect: ExpectBlock,
    /// Directory that relative `file` profiles are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file; relative snapshot paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf);
    Ok(cfg)
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {x}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        self.grid()?;
        if !(self.physics.d > 0.0 && self.physics.d.is_finite()) {
            return Err(invalid(
                "physics.D",
                format!("D must be > 0, got {}", self.physics.d),
            ));
        }
        if !(self.physics.alpha > 0.0 && self.physics.alpha.is_finite()) {
            return Err(invalid(
                "physics.alpha",
                format!("alpha must be > 0, got {}", self.physics.alpha),
            ));
        }
        self.physics
            .gamma
            .validate()
            .map_err(|e| invalid("physics.gamma", e.to_string()))?;
        self.physics
            .intake
            .validate()
            .map_err(|e| invalid("physics.intake", e.to_string()))?;
        let st = &self.stepper;
        if !(st.cfl_safety > 0.0 && st.cfl_safety < 1.0) {
            return Err(invalid(
                "stepper.cfl_safety",
                format!("must lie in (0, 1), got {}", st.cfl_safety),
            ));
        }
        if !(st.t_end >= 0.0 && st.t_end.is_finite()) {
            return Err(invalid(
                "stepper.t_end",
                format!("must be finite and >= 0, got {}", st.t_end),
            ));
        }
        if let Some(dt) = st.dt_max {
            positive("stepper.dt_max", dt)?;
        }
        positive("stepper.overflow_guard", st.overflow_guard)?;
        if !(self.helmholtz.tol > 0.0 && self.helmholtz.tol < 1.0) {
            return Err(invalid(
                "helmholtz.tol",
                format!("must lie in (0, 1), got {}", self.helmholtz.tol),
            ));
        }
        if let Some(dt) = self.output.snapshot_every {
            positive("output.snapshot_every", dt)?;
        }
        if self.output.dump_every == Some(0) {
            return Err(invalid("output.dump_every", "must be >= 1"));
        }
        for f in &self.output.fields {
            if !["u", "v", "w", "g"].contains(&f.as_str()) {
                return Err(invalid(
                    "output.fields",
                    format!("unknown field '{f}' (u, v, w, g)"),
                ));
            }
        }
        for s in &self.output.series {
            if !crate::diagnostics::DiagnosticsRecord::COLUMNS.contains(&s.as_str()) {
                return Err(invalid("output.series", format!("unknown column '{s}'")));
            }
        }
        if let Some(n) = &self.initial.noise {
            if !(n.amplitude >= 0.0 && n.amplitude < 1.0) {
                return Err(invalid(
                    "initial.noise.amplitude",
                    format!("must lie in [0, 1), got {}", n.amplitude),
                ));
            }
            for f in &n.fields {
                if !["u", "v", "w"].contains(&f.as_str()) {
                    return Err(invalid(
                        "initial.noise.fields",
                        format!("unknown field '{f}' (u, v, w)"),
                    ));
                }
            }
        }
        self.solver_config()
            .validate()
            .map_err(|e| invalid("stepper", e.to_string()))
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let dim = self.grid.dim;
        if !(dim == 1 || dim == 2) {
            return Err(invalid("grid.dim", format!("must be 1 or 2, got {dim}")));
        }
        let n = self.grid.n.resolve(dim, "grid.n")?;
        let l = self.grid.l.resolve(dim, "grid.L")?;
        Grid::new(dim, &n, &l).map_err(|e: GridError| invalid("grid", e.to_string()))
    }

    pub fn snapshot_every(&self) -> f64 {
        self.output
            .snapshot_every
            .unwrap_or(if self.stepper.t_end > 0.0 {
                self.stepper.t_end / DEFAULT_SNAPSHOTS
            } else {
                1.0
            })
    }

    pub fn solver_config(&self) -> SolverConfig {
        let p = &self.physics;
        let mut c = SolverConfig::new(
            p.d,
            p.alpha,
            p.gamma.clone(),
            p.intake.clone(),
            self.stepper.t_end,
        );
        c.cfl_safety = self.stepper.cfl_safety;
        c.dt_max = self.stepper.dt_max.unwrap_or(f64::INFINITY);
        c.overflow_guard = self.stepper.overflow_guard;
        c.helmholtz = self.helmholtz;
        c.snapshot_every = self.snapshot_every();
        c
    }

    fn profile(&self, spec: &ProfileSpec, grid: Grid, key: &str) -> Result<Profile, ConfigError> {
        Ok(match spec {
            ProfileSpec::Number(c) => Profile::Constant(*c),
            ProfileSpec::Expression(e) => Profile::Expression(e.clone()),
            ProfileSpec::File { file } => {
                let path = match &self.base_dir {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let snap = Snapshot::parse(&text)
                    .map_err(|e| invalid(key, format!("{}: {e}", path.display())))?;
                if *snap.field.grid() != grid {
                    return Err(invalid(
                        key,
                        format!("{}: snapshot grid differs from [grid]", path.display()),
                    ));
                }
                Profile::Values(snap.field)
            }
        })
    }

    /// Samples the initial profiles, applies the seeded noise, and checks the state.
    pub fn initial_state(&self) -> Result<State, ConfigError> {
        let grid = self.grid()?;
        let init = &self.initial;
        let mut fields = [
            self.profile(&init.u0, grid, "initial.u0")?.sample(grid)?,
            self.profile(&init.v0, grid, "initial.v0")?.sample(grid)?,
            self.profile(&init.w0, grid, "initial.w0")?.sample(grid)?,
        ];
        if let Some(noise) = &init.noise {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for (k, name) in ["u", "v", "w"].iter().enumerate() {
                if noise.fields.iter().any(|f| f == name) {
                    for x in fields[k].values_mut() {
                        *x *= 1.0 + noise.amplitude * rng.random_range(-1.0..1.0);
                    }
                }
            }
        }
        let [u, v, w] = fields.map(Profile::Values);
        Ok(init_state(grid, &u, &v, &w)?)
    }

    /// Same mesh extents with `n` cells on every axis.
    pub fn with_resolution(mut self, n: usize) -> Self {
        self.grid.n = PerAxis::One(n);
        self
    }

    /// New end time; an explicit snapshot cadence is rescaled to keep the record count.
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        if let Some(dt) = self.output.snapshot_every.as_mut()
            && self.stepper.t_end > 0.0 {
                *dt *= t_end / self.stepper.t_end;
            }
        self.stepper.t_end = t_end;
        self
    }

    /// The configuration with every default filled in, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
