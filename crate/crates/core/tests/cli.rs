use std::path::Path;
use std::process::Command;

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sim"))
}

const TINY: &str = r#"
name = "tiny"
[grid]
dim = 1
n = 16
[physics]
D = 1.0
alpha = 1.0
gamma = { family = "power", c0 = 1.0, k = 1.0 }
intake = { family = "hill", lambda = 1.0 }
[initial]
u0 = "1 + 0.1*cos(pi*x)"
v0 = 1.0
w0 = 1.0
[stepper]
t_end = 0.05
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn list_prints_every_builtin() {
    let out = sim().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in dsm::scenarios::builtin_names() {
        assert!(
            text.lines().any(|l| l == name),
            "{name} missing from {text}"
        );
    }
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = sim()
        .args(["run", &cfg, "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let run = dir.path().join("tiny");
    for f in ["report.json", "timeseries.csv", "diagnostics.svg"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "completed");
}

#[test]
fn overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = sim()
        .args(["run", &cfg, "--grid", "8", "--t-end", "0.01", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("tiny/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["config"]["grid"]["n"], 8);
    assert_eq!(report["headline"]["final_t"], 0.01);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let root = dir.path().join("env-root");
    let out = sim()
        .args(["run", &cfg])
        .env("DSM_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(root.join("tiny/report.json").exists());
}

#[test]
fn invalid_config_exits_two_with_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &TINY.replace("D = 1.0", "D = 0.0"));
    let out = sim()
        .args(["run", &cfg, "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("physics.D"));

    let out = sim().args(["validate", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "typo.toml",
        &TINY.replace("[stepper]", "[stepper]\ncfl = 0.5"),
    );
    let out = sim().args(["validate", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cfl"));
}

#[test]
fn unknown_target_exits_two() {
    let out = sim().args(["run", "no-such-scenario"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blow_up_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY
        .replace("u0 = \"1 + 0.1*cos(pi*x)\"", "u0 = \"1 + 0.5*cos(pi*x)\"")
        .replace("[stepper]", "[stepper]\noverflow_guard = 1.2");
    let cfg = write(dir.path(), "boom.toml", &text);
    let out = sim()
        .args(["run", &cfg, "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("tiny/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["status"], "aborted");
    assert!(report["abort_reason"].as_str().unwrap().contains("blow-up"));
}

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = sim().args(["validate", &cfg]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("cfl_safety = 0.4"), "{text}");
}
