use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use streetrank_core::pipeline::ExperimentConfig;

fn streetrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_streetrank")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn quick(dir: &Path) -> PathBuf {
    let path = dir.join("quick.toml");
    std::fs::copy(configs_dir().join("quick.toml"), &path).unwrap();
    path
}

fn stage(stage: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![stage, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    streetrank(&args)
}

#[test]
fn shipped_configs_parse_and_validate() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn stages_run_in_order_and_report_prints_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();

    // nothing to evaluate yet
    assert_eq!(stage("evaluate", &cfg, &["--out", o]).status.code(), Some(2));
    for s in ["synth", "featurize"] {
        let r = stage(s, &cfg, &["--out", o]);
        assert!(r.status.success(), "{s}: {}", String::from_utf8_lossy(&r.stderr));
    }
    let r = stage("train", &cfg, &["--out", o, "--stop-after", "3"]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("stopped after 3"));
    assert_eq!(stage("evaluate", &cfg, &["--out", o]).status.code(), Some(2));
    let r = stage("train", &cfg, &["--out", o]);
    assert!(String::from_utf8_lossy(&r.stdout).contains("skipped 3"));
    assert!(stage("evaluate", &cfg, &["--out", o]).status.success());
    let r = stage("report", &cfg, &["--out", o]);
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("rf-n15-d4"), "{text}");
    assert!(out.join("reports/summary.csv").is_file());
    assert!(out.join("reports/evaluation.json").is_file());

    // a different seed is a different experiment; the finished models do not match it
    assert_eq!(stage("train", &cfg, &["--out", o, "--seed", "7"]).status.code(), Some(2));
}

#[test]
fn bad_inputs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stage("synth", &dir.path().join("missing.toml"), &[]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nno_such_key = true\n").unwrap();
    assert_eq!(stage("synth", &bad, &[]).status.code(), Some(2));

    std::fs::write(&bad, "k_ladder = [100, 50]\n").unwrap();
    assert_eq!(stage("synth", &bad, &[]).status.code(), Some(2));

    assert_eq!(streetrank(&["synth"]).status.code(), Some(2));
    assert_eq!(streetrank(&["frobnicate", "--config", "x"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = blocker.join("run");
    assert_eq!(stage("synth", &cfg, &["--out", out.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn serve_rejects_a_bad_port_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path());
    let r = Command::new(env!("CARGO_BIN_EXE_streetrank"))
        .args(["serve", "--config", cfg.to_str().unwrap()])
        .env("STREETRANK_PORT", "not-a-port")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("STREETRANK_PORT"));
}
