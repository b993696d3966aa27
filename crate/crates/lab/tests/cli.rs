use std::path::{Path, PathBuf};
use std::process::Command;

use degroot_lab::audit_cli::{audit_trajectory, AuditParams};
use degroot_lab::io::{read_result, write_result, TrajectoryFile};
use degroot_lab::{run_scenario, validate_text, ExperimentConfig};

fn presets() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
}

fn lab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_degroot-lab"))
}

const SMALL_AUDIT: &str = r#"
scenario = "lyapunov-audit"
seed = 9
replications = 2
horizon = 3000
graph = { kind = "random_regular", n = 40, degree = 3, seed = 9 }
rule = { kind = "eps_degroot", eps = 0.05 }
gamma = 0.04
init = { mu = 0.5, noise = { kind = "uniform", half_width = 0.5 } }
probes = [0, 20]
trajectory = "csv"
"#;

#[test]
fn every_preset_validates() {
    let paths = presets();
    assert!(paths.len() >= 10);
    for path in paths {
        let diags = validate_text(&std::fs::read_to_string(&path).unwrap());
        assert!(diags.is_empty(), "{}: {diags:?}", path.display());
    }
}

#[test]
fn reruns_give_identical_metric_tables() {
    let cfg = ExperimentConfig::from_toml(SMALL_AUDIT).unwrap();
    let (a, b) = (run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert!(a.pass);
    assert_eq!(a.provenance.config, cfg);
    assert_eq!(a.provenance.config_sha256.len(), 64);
}

#[test]
fn recorded_trajectory_audits_offline() {
    let cfg = ExperimentConfig::from_toml(SMALL_AUDIT).unwrap();
    let result = run_scenario(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_result(&result, dir.path()).unwrap();
    assert_eq!(read_result(&dir.path().join("result.json")).unwrap().metrics, result.metrics);

    let traj = TrajectoryFile::load(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.layers.len(), 3001);
    let params: AuditParams = toml::from_str("eps = 0.05\ngamma = 0.04\ncenters = [0, 20]\n").unwrap();
    let audit = audit_trajectory(&traj, &params).unwrap();
    assert!(audit.pass, "{audit:?}");
    assert_eq!(audit.variation.len(), 2);

    // a tampered trajectory breaks the robustness audit
    let mut bad = traj.clone();
    bad.layers[150][3] += 0.3;
    assert!(!audit_trajectory(&bad, &params).unwrap().pass);
}

#[test]
fn cli_exit_codes_follow_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SMALL_AUDIT).unwrap();
    let out = dir.path().join("out");

    let status = lab().arg("validate").arg(&good).status().unwrap();
    assert!(status.success());
    let status = lab().arg("run").arg(&good).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    for file in ["result.json", "metrics.csv", "trajectory.csv", "lyapunov.svg", "lyapunov.csv"] {
        assert!(out.join(file).exists(), "{file}");
    }

    let params = dir.path().join("params.toml");
    std::fs::write(&params, "eps = 0.05\ngamma = 0.04\n").unwrap();
    let output = lab()
        .arg("audit")
        .arg(out.join("trajectory.csv"))
        .arg("--params")
        .arg(&params)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["pass"], true);

    let replot = dir.path().join("replot");
    let status = lab()
        .arg("plot")
        .arg(out.join("result.json"))
        .arg("--out")
        .arg(&replot)
        .status()
        .unwrap();
    assert!(status.success() && replot.join("lyapunov.svg").exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, SMALL_AUDIT.replace("gamma = 0.04", "gamma = 0.2")).unwrap();
    let output = lab().arg("validate").arg(&bad).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).contains("γ≤ε required"));
    let status = lab().arg("run").arg(&bad).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn failing_verdict_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.toml");
    // 50 steps cannot bring a path of 51 to consensus
    std::fs::write(
        &cfg,
        r#"
scenario = "fragility-bot"
seed = 1
horizon = 50
graph = { kind = "path", n = 51 }
rule = { kind = "degroot" }
bots = [{ node = 0, value = 1.0 }]
init = { mu = 0.0, noise = { kind = "degenerate" } }
"#,
    )
    .unwrap();
    let status = lab().arg("run").arg(&cfg).arg("--out").arg(dir.path()).arg("--no-plots").status().unwrap();
    assert_eq!(status.code(), Some(1));
}
