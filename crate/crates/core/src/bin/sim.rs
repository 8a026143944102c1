use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsm::kinetics::{DEFAULT_RANGE, validate_assumptions};
use dsm::scenarios::{
    OUTPUT_ROOT_ENV, OutputError, Scenario, ScenarioReport, builtin, builtin_names, load_config,
    output_dir, output_root, run_any, sweep,
};

#[derive(Parser)]
#[command(name = "sim", version, about = "Density-suppressed motility simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run built-in scenarios or configuration files.
    Run {
        /// Scenario names or paths to TOML configurations.
        #[arg(required = true)]
        targets: Vec<String>,
        /// Output root; each run writes to <root>/<name>.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        out: Option<PathBuf>,
        /// Override the end time.
        #[arg(long)]
        t_end: Option<f64>,
        /// Override the cells per axis.
        #[arg(long)]
        grid: Option<usize>,
        /// Run the targets on parallel threads.
        #[arg(long)]
        sweep: bool,
    },
    /// Check a configuration and print it with defaults filled in.
    Validate { config: String },
    /// Run the manufactured-solution convergence study.
    Mms {
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
}

fn resolve(target: &str) -> Result<Scenario, String> {
    if let Some(s) = builtin(target) {
        return Ok(s);
    }
    let path = Path::new(target);
    if path.exists() {
        return load_config(path)
            .map(|c| Scenario::Run(Box::new(c)))
            .map_err(|e| e.to_string());
    }
    Err(format!(
        "'{target}' is neither a built-in scenario ({}) nor a file",
        builtin_names().join(", ")
    ))
}

fn apply_overrides(
    s: Scenario,
    t_end: Option<f64>,
    grid: Option<usize>,
) -> Result<Scenario, String> {
    match s {
        Scenario::Run(mut c) => {
            if let Some(t) = t_end {
                *c = c.with_t_end(t);
            }
            if let Some(n) = grid {
                *c = c.with_resolution(n);
            }
            c.validate().map_err(|e| e.to_string())?;
            Ok(Scenario::Run(c))
        }
        Scenario::Mms(_) if t_end.is_some() || grid.is_some() => {
            Err("--t-end and --grid do not apply to the manufactured-solution study".into())
        }
        other => Ok(other),
    }
}

fn target_dir(s: &Scenario, root: &Path) -> PathBuf {
    match s {
        Scenario::Run(c) => output_dir(c, root),
        Scenario::Mms(c) => root.join(&c.name),
    }
}

fn print_report(r: &ScenarioReport, dir: &Path) {
    println!(
        "{} ({:.1} s) -> {}",
        r.scenario,
        r.wall_seconds,
        dir.display()
    );
    if let Some(reason) = &r.abort_reason {
        println!("  aborted: {reason}");
    }
    for c in &r.certificates {
        let tag = match c.outcome {
            dsm::scenarios::Outcome::Pass => "pass",
            dsm::scenarios::Outcome::Fail => "FAIL",
            dsm::scenarios::Outcome::NotApplicable => "n/a ",
        };
        println!("  {tag}  {:<20} {}", c.name, c.detail);
    }
}

fn finish(results: Vec<(PathBuf, Result<ScenarioReport, OutputError>)>) -> ExitCode {
    let mut code = 0;
    for (dir, r) in results {
        match r {
            Ok(r) => {
                print_report(&r, &dir);
                code = code.max(r.exit_code());
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = 2;
            }
        }
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for name in builtin_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match resolve(&config) {
            Ok(Scenario::Run(c)) => {
                print!("{}", c.to_toml());
                match validate_assumptions(&c.physics.gamma, &c.physics.intake, DEFAULT_RANGE) {
                    Ok(a) => {
                        for chk in &a.checks {
                            println!(
                                "# {} {}: {}",
                                if chk.passed { "pass" } else { "FAIL" },
                                chk.name,
                                chk.detail
                            );
                        }
                        println!("# uniform-bound condition holds: {}", a.uniform_bound.holds);
                        ExitCode::from(u8::from(!a.passed()))
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(2)
                    }
                }
            }
            Ok(Scenario::Mms(c)) => {
                println!("{}", toml::to_string(&c).expect("serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Mms { out } => {
            let root = out.unwrap_or_else(output_root);
            let s = builtin("mms-convergence").expect("built in");
            let dir = target_dir(&s, &root);
            finish(vec![(dir.clone(), run_any(&s, &dir))])
        }
        Command::Run {
            targets,
            out,
            t_end,
            grid,
            sweep: parallel,
        } => {
            let root = out.unwrap_or_else(output_root);
            let mut jobs = Vec::new();
            for t in &targets {
                match resolve(t).and_then(|s| apply_overrides(s, t_end, grid)) {
                    Ok(s) => {
                        let dir = target_dir(&s, &root);
                        jobs.push((s, dir));
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            let results = if parallel {
                sweep(&jobs)
            } else {
                jobs.iter().map(|(s, dir)| run_any(s, dir)).collect()
            };
            finish(jobs.into_iter().map(|(_, d)| d).zip(results).collect())
        }
    }
}
