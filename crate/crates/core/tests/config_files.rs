use dsm::grid::{Field, Grid};
use dsm::scenarios::output::emit_snapshot;
use dsm::scenarios::{Scenario, builtin, builtin_names, load_config, parse_config, run_scenario};

#[test]
fn builtins_round_trip_through_toml() {
    for name in builtin_names() {
        if let Some(Scenario::Run(cfg)) = builtin(name) {
            let again = parse_config(&cfg.to_toml()).unwrap();
            assert_eq!(again.to_toml(), cfg.to_toml(), "{name}");
            again.validate().unwrap();
        }
    }
}

#[test]
fn final_snapshot_restarts_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "first"
[grid]
dim = 2
n = [8, 6]
L = [1.0, 0.75]
[physics]
D = 1.0
alpha = 1.0
gamma = { family = "exponential", chi = 1.0 }
intake = { family = "linear", slope = 1.0 }
[initial]
u0 = "1 + 0.2*cos(pi*x/Lx)"
v0 = 1.0
w0 = 1.0
[stepper]
t_end = 0.05
"#;
    let first = parse_config(text).unwrap();
    let out_dir = dir.path().join("first");
    run_scenario(&first, &out_dir).unwrap();
    let snaps = out_dir.join("snapshots");
    for f in ["u", "v", "w"] {
        assert!(snaps.join(format!("{f}_final.txt")).exists());
    }
    let second = text
        .replace("name = \"first\"", "name = \"second\"")
        .replace(
            "u0 = \"1 + 0.2*cos(pi*x/Lx)\"",
            "u0 = { file = \"first/snapshots/u_final.txt\" }",
        )
        .replace(
            "v0 = 1.0",
            "v0 = { file = \"first/snapshots/v_final.txt\" }",
        )
        .replace(
            "w0 = 1.0",
            "w0 = { file = \"first/snapshots/w_final.txt\" }",
        );
    let path = dir.path().join("second.toml");
    std::fs::write(&path, second).unwrap();
    let cfg = load_config(&path).unwrap();
    let s0 = cfg.initial_state().unwrap();
    let text_u = std::fs::read_to_string(snaps.join("u_final.txt")).unwrap();
    let u = dsm::grid::Snapshot::parse(&text_u).unwrap().field;
    assert_eq!(s0.u, u);
}

#[test]
fn snapshot_on_wrong_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let f = Field::constant(Grid::new_1d(7, 1.0).unwrap(), 1.0);
    emit_snapshot(dir.path(), "u", "x", 0.0, &f).unwrap();
    let text = r#"
name = "wrong-grid"
[grid]
dim = 1
n = 8
[physics]
D = 1.0
alpha = 1.0
gamma = { family = "power", c0 = 1.0, k = 1.0 }
intake = { family = "hill", lambda = 1.0 }
[initial]
u0 = { file = "u_x.txt" }
[stepper]
t_end = 1.0
"#;
    let path = dir.path().join("c.toml");
    std::fs::write(&path, text).unwrap();
    let cfg = load_config(&path).unwrap();
    assert!(cfg.initial_state().is_err());
}

#[test]
fn noise_is_seeded() {
    let text = |seed: u64| {
        format!(
            r#"
name = "noisy"
seed = {seed}
[grid]
dim = 1
n = 32
[physics]
D = 1.0
alpha = 1.0
gamma = {{ family = "power", c0 = 1.0, k = 1.0 }}
intake = {{ family = "hill", lambda = 1.0 }}
[initial]
u0 = 1.0
noise = {{ amplitude = 0.01, fields = ["u"] }}
[stepper]
t_end = 1.0
"#
        )
    };
    let a = parse_config(&text(1)).unwrap().initial_state().unwrap();
    let b = parse_config(&text(1)).unwrap().initial_state().unwrap();
    let c = parse_config(&text(2)).unwrap().initial_state().unwrap();
    assert_eq!(a.u, b.u);
    assert_ne!(a.u, c.u);
    assert!(a.u.max_diff(&Field::constant(*a.u.grid(), 1.0)) <= 0.01 + 1e-15);
}
