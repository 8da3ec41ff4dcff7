use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn glocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glocal")).args(args).output().expect("binary runs")
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    glocal(&args)
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn lsv_half_passes_all_checks() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&config("lsv_a05.cfg"), out.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(out.path());
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["eqY", "eqJ", "eqK", "glocal"]);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert_eq!(r["metadata"]["family"], "lsv");
    let summary = fs::read_to_string(out.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("# glocal "));
    assert!(summary.contains("# result: PASS"));
    assert!(summary.contains("operator=auto ("));
    assert!(out.path().join("eqY_tail_p0.csv").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("files to"));
}

#[test]
fn empty_observable_list_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    fs::write(&cfg, "checks = [\"glocal\"]\n[map]\nfamily = \"lsv\"\nalpha = 0.5\n").unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&dir.path().join("out"));
    assert_eq!(r["checks"][0]["notes"][0], "no observables configured");
}

#[test]
fn invalid_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[map]\nfamily = \"lsv\"\nalpha = 1.5\n").unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("map.alpha"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&config("qbranch_linear.cfg"), dir.path(), &["--check", "eqY,eqX"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eqX"));
    let o = run(&dir.path().join("missing.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(glocal(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn list_families_prints_every_family() {
    let o = glocal(&["list-families"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().next().unwrap().starts_with("family"));
    for name in ["lsv ", "lsv2", "qbranch ", "qbranch_linear", "pm_mod1", "farey", "two_sided", "thaler_d", "custom"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("qbranch_linear.cfg");
    assert_eq!(run(&cfg, a.path(), &["--threads", "1"]).status.code(), Some(0));
    assert_eq!(run(&cfg, b.path(), &["--threads", "3"]).status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n.to_string_lossy().ends_with(".csv")));
    for name in names {
        let (x, y) = (fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap());
        assert!(x == y, "{name:?} differs between runs");
    }
}

#[test]
fn failing_tolerance_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.cfg");
    let text = fs::read_to_string(config("qbranch_linear.cfg")).unwrap().replace("[depths]", "[tolerances]\nglocal = 1e-30\n\n[depths]");
    fs::write(&cfg, text).unwrap();
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("# result: FAIL"));
}
