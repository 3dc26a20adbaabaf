use std::path::Path;
use std::process::{Command, Output};

fn scrl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scrl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("SCRL_THREADS", "1")
        .output()
        .expect("run scrl")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_identity_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = scrl(&["analyze", "--system", "identity", "--domain", "circle", "--grid", "32"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["metadata.json", "scr.json", "cr.json", "pairs.json", "lyapunov_combined.csv", "verify_report.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let report = json(&dir.path().join("verify_report.json"));
    assert_eq!(report["monotonicity_violations"].as_array().unwrap().len(), 0);
}

#[test]
fn later_stage_without_cache_names_the_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let out = scrl(&["verify", "--system", "circle", "--grid", "64"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("scr.json") && err.contains("`scr`"), "{err}");
}

#[test]
fn scr_sets_grow_with_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = scrl(&["scr", "--system", "square", "--grid", "16", "--epsilon", "0.05", "--epsilon", "0.2"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = json(&dir.path().join("scr.json"));
    let runs = runs["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let members = |r: &serde_json::Value| -> Vec<u64> {
        r["members"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect()
    };
    let (small, large) = (members(&runs[0]), members(&runs[1]));
    assert!(small.iter().all(|u| large.contains(u)));
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scrl"))
        .args(["oracle-check", "--seeds", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("oracle_report.json"))["passed"], true);
}

#[test]
fn reruns_are_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["analyze", "--system", "circle", "--grid", "64"];
    assert_eq!(scrl(&args, a.path()).status.code(), Some(0));
    assert_eq!(scrl(&args, b.path()).status.code(), Some(0));
    for name in ["scr.json", "pairs.json", "lyapunov_combined.csv", "verify_report.json"] {
        let read = |d: &Path| std::fs::read(d.join(name)).unwrap();
        assert!(read(a.path()) == read(b.path()), "{name} differs");
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = scrl(&["scr", "--system", "circle", "--epsilon=-1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
