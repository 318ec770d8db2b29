use std::path::PathBuf;
use std::process::Command;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn dgmlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dgmlab")).args(args).output().expect("binary runs")
}

#[test]
fn residual_decay_writes_summary_and_csvs() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("residual_decay.toml");
    let res = dgmlab(&["residual-decay", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--quick"]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["study"], "residual-decay");
    assert_eq!(summary["provenance"]["quick"], true);
    for table in summary["tables"].as_array().unwrap() {
        assert!(out.path().join(table.as_str().unwrap()).exists());
    }
    // exit status mirrors the verdicts
    assert_eq!(res.status.success(), summary["passed"].as_bool().unwrap(), "{stdout}");
    assert!(stdout.contains("[spectral-decay]"));
}

#[test]
fn trivial_configuration_passes_every_subcommand() {
    let cfg = configs().join("trivial.toml");
    for sub in ["wide-limit", "deviation", "residual-decay"] {
        let out = tempfile::tempdir().unwrap();
        let res = dgmlab(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
        assert!(res.status.success(), "{sub}: {}", String::from_utf8_lossy(&res.stdout));
        assert!(out.path().join("summary.json").exists());
    }
}

#[test]
fn seed_override_is_recorded() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("trivial.toml");
    let res = dgmlab(&[
        "deviation",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--seed-override",
        "40",
    ]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["provenance"]["seeds"], serde_json::json!([40, 41, 42]));
}

#[test]
fn invalid_configuration_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[domain]\nkind = \"interval\"\nlower = 1.0\nupper = 0.0\n").unwrap();
    let res = dgmlab(&["pinn", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
    let missing = dgmlab(&["pinn", "--config", "/nonexistent.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unsolvable_problem_reports_not_applicable() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("unsolvable.toml");
    let res = dgmlab(&["residual-decay", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    let verdicts = summary["verdicts"].as_array().unwrap();
    let null = verdicts.iter().find(|v| v["check"] == "null fraction of r0").unwrap();
    assert!(null["measured"].as_f64().unwrap() > 0.99);
    assert!(verdicts.iter().any(|v| v["criterion"] == "convergence-to-solution" && v["status"] == "not_applicable"));
}

#[test]
fn single_width_is_rejected_by_the_wide_limit_study() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("residual_decay.toml");
    let res = dgmlab(&["wide-limit", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
