//! End-to-end smoke tests of the `cascade` binary: exit codes, artifact
//! layout, and round-tripping of saved runs.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cascade"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("out");
    let cfg = serde_json::json!({
        "model": { "alpha": 0.0, "sigma": 1.0, "exposure_c": 0.1, "horizon": 0.05 },
        "initial": { "kind": "uniform", "a": 0.5, "b": 1.5, "gap": 0.25 },
        "simulation": { "n_banks": 2000, "dt": 1e-3, "seed": 5 },
        "output_dir": out,
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_artifacts_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let status = bin().args(["simulate", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let run_dir = tmp.path().join("out/simulate");
    assert!(run_dir.join("manifest.json").is_file());
    assert!(run_dir.join("series.csv").is_file());
    let sim = cascade_core::io::load_simulation(&run_dir).unwrap();
    assert_eq!(sim.n_banks, 2000);
    assert_eq!(sim.times.len(), 51);
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, b"{\"model\": {}}").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"exit_code\":2"), "stderr: {err}");
}

#[test]
fn pde_rejects_simulation_only_law_exits_2() {
    // a plain uniform law is admissible for simulation but not for the PDE
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = bin().args(["pde", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cstar_prints_value() {
    let out = bin().args(["cstar", "--sigma", "1.0"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let c = v["c_star"].as_f64().unwrap();
    assert!(c > 46.0 && c < 50.0);
}

#[test]
fn seed_env_override_changes_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let run = |seed: &str| {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .env("CASCADE_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        cascade_core::io::load_simulation(&tmp.path().join("out/simulate")).unwrap()
    };
    let a = run("11");
    let b = run("12");
    let c = run("11");
    assert_eq!(a.survivor_fraction, c.survivor_fraction);
    assert_ne!(a.survivor_fraction, b.survivor_fraction);
}
