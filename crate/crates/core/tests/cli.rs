use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bidomain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidomain")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let out = bidomain(&["synth", "--subdivisions", "2", "--out", path(dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_of_the_truth_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let out = bidomain(&[
        "eval",
        "--truth",
        path(&data),
        "--p1",
        path(&data),
        "--out",
        path(&tmp.path().join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.000 mV"), "{text}");
    let report = std::fs::read_to_string(tmp.path().join("eval/report.txt")).unwrap();
    assert_eq!(report, text);
}

#[test]
fn protocol_2_is_deterministic_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        let out = bidomain(&[
            "reconstruct-p2",
            "--data",
            path(&data),
            "--noise",
            "0.01",
            "--seed",
            "7",
            "--out",
            path(&dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.join("v.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let replay = tmp.path().join("c");
    let out = bidomain(&[
        "replay",
        path(&tmp.path().join("a/manifest.json")),
        "--out",
        path(&replay),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(a, std::fs::read(replay.join("v.csv")).unwrap());
}

#[test]
fn exit_codes_separate_bad_input_from_failed_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = bidomain(&["reconstruct-p1", "--data", path(&tmp.path().join("nothing"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing file"));
    assert_eq!(bidomain(&["synth", "--subdivisions", "9"]).status.code(), Some(2));
    assert_eq!(bidomain(&["synth", "--sigma-li", "abc"]).status.code(), Some(2));
    assert_eq!(bidomain(&["frobnicate"]).status.code(), Some(2));
    let coarse = bidomain(&["green-check", "--subdivisions", "0", "--out", path(tmp.path())]);
    assert_eq!(coarse.status.code(), Some(3));
    let fine = bidomain(&["green-check", "--subdivisions", "1", "--out", path(tmp.path())]);
    assert_eq!(fine.status.code(), Some(0));
}

#[test]
fn malformed_input_fails_fast() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    std::fs::write(data.join("u_e.csv"), "node,value\n0,oops\n").unwrap();
    let start = Instant::now();
    let out = bidomain(&["reconstruct-p1", "--data", path(&data), "--out", path(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(start.elapsed() < Duration::from_millis(100), "{:?}", start.elapsed());
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "subdivisions = 1\nsigma_li = 10\nseed = 3\n").unwrap();
    let out = tmp.path().join("s");
    let run = bidomain(&["synth", "--config", path(&cfg), "--sigma-li", "11", "--out", path(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let config = &manifest["config"];
    assert_eq!(config["sigma_li"], 11.0);
    assert_eq!(config["subdivisions"], 1);
    assert_eq!(config["seed"], 3);
    assert_eq!(manifest["command"], "synth");
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data);
    let run = |threads: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_bidomain"))
            .env("BIDOMAIN_THREADS", threads)
            .args(["reconstruct-p1", "--data", path(&data), "--out", path(&dir)])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(dir.join("v.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}
