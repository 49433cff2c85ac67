use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use aemr::io::{read_cates_csv, read_dataset, read_groups_jsonl, read_importance, read_trace_csv, read_weights, CsvOptions};

fn aemr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aemr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = aemr(args);
    assert!(
        out.status.success(),
        "aemr {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn simulate(dir: &Path) {
    ok(&["simulate", "--scenario", "irrelevant", "--n-t", "200", "--n-c", "200", "--seed", "4", "--out", &s(dir)]);
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_then_match_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim);
    let out = tmp.path().join("run");
    let stdout = ok(&[
        "match", "--input", &s(&sim.join("data.csv")), "--drop-cols", "true_cate", "--holdout",
        &s(&sim.join("holdout.csv")), "--shuffles", "5", "--early-stop-auto", "--out", &s(&out),
    ]);
    assert!(stdout.contains("ATT estimate"), "{stdout}");

    let opts = CsvOptions { drop_cols: vec!["true_cate".into()], ..CsvOptions::new("T", "Y") };
    let d = read_dataset(sim.join("data.csv"), &opts).unwrap();
    assert_eq!((d.n_treated(), d.n_control(), d.p()), (200, 200, 15));
    read_dataset(sim.join("holdout.csv"), &opts).unwrap();

    let groups = read_groups_jsonl(fs::File::open(out.join("groups.jsonl")).unwrap()).unwrap();
    assert!(!groups.is_empty());
    for g in &groups {
        assert_eq!(g.members.len(), g.n_treated + g.n_control);
        assert_eq!(g.key_values.len(), g.retained.len());
    }
    let cates = read_cates_csv(fs::File::open(out.join("cates.csv")).unwrap()).unwrap();
    assert!(cates.iter().all(|c| groups.iter().any(|g| g.id == c.group_id)));
    let trace = read_trace_csv(fs::File::open(out.join("trace.csv")).unwrap()).unwrap();
    assert!(!trace.is_empty());
    let w = read_weights(fs::File::open(out.join("weights.csv")).unwrap(), &d).unwrap();
    assert_eq!(w.len(), 15);
    let m = manifest(&out);
    assert_eq!(m["command"], "match");
    assert!(out.join("timing.json").exists());
}

#[test]
fn importance_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let out = tmp.path().join("imp.csv");
    ok(&[
        "importance", "--holdout", &s(&tmp.path().join("holdout.csv")), "--drop-cols", "true_cate", "--shuffles",
        "10", "--out", &s(&out),
    ]);
    let rows = read_importance(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 15);
    let top: Vec<&str> = rows[10..].iter().map(|r| r.covariate.as_str()).collect();
    for name in ["x0", "x1", "x2", "x3", "x4"] {
        assert!(top.contains(&name), "{top:?}");
    }
}

#[test]
fn missing_column_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let out = aemr(&["match", "--input", &s(&tmp.path().join("data.csv")), "--treatment", "treated", "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("treated"));
}

#[test]
fn unreadable_input_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = aemr(&["match", "--input", "/nonexistent/data.csv", "--out", &s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(aemr(&["match", "--frobnicate"]).status.code(), Some(2));
}

#[test]
fn bundled_fixture_agrees() {
    let stdout = ok(&["oracle-check"]);
    assert!(stdout.contains("agreement: 100%"), "{stdout}");
}

#[test]
fn random_sweep_agrees() {
    let stdout = ok(&["oracle-check", "--trials", "50", "--seed", "3"]);
    assert!(stdout.contains("trials: 50/50 agreements"), "{stdout}");
}

#[test]
fn injected_fault_is_detected() {
    let out = aemr(&["oracle-check", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("agreement: 100%"));
}

#[test]
fn config_file_fills_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let cfg = tmp.path().join("aemr.toml");
    fs::write(
        &cfg,
        "[match]\ndrop-cols = [\"true_cate\"]\nseed = 3\nmax-iterations = 2\n",
    )
    .unwrap();
    let out = tmp.path().join("run");
    ok(&[
        "match", "--config", &s(&cfg), "--input", &s(&tmp.path().join("data.csv")), "--max-iterations", "5",
        "--out", &s(&out),
    ]);
    let m = manifest(&out);
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["engine"]["stop"]["max_iterations"], 5);

    fs::write(&cfg, "[match]\nbogus = 1\n").unwrap();
    let bad = aemr(&["match", "--config", &s(&cfg), "--input", &s(&tmp.path().join("data.csv")), "--out", &s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn simulate_digests_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let a = ok(&["simulate", "--scenario", "noise", "--n-t", "50", "--n-c", "50", "--seed", "1", "--out", &s(&tmp.path().join("a"))]);
    let b = ok(&["simulate", "--scenario", "noise", "--n-t", "50", "--n-c", "50", "--seed", "1", "--out", &s(&tmp.path().join("b"))]);
    let strip = |t: &str| t.lines().map(|l| l.split_whitespace().next().unwrap_or("").to_string()).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn bench_writes_rows_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench.csv");
    ok(&["bench", "--grid", "200x6", "--out", &s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,p,method,seconds,matched_treated");
    let methods: Vec<&str> = lines.map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(methods, ["engine", "brute_enumerate", "brute_pairwise"]);
}
