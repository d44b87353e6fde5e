use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bckm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bckm")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn gen_small(dir: &Path) {
    let out = bckm(&["gen", "--k", "3", "--n", "15", "--d", "2", "--sigma", "0.2", "--seed", "4", "--out", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = bckm(&["gen", "--k", "10", "--n", "50", "--d", "512", "--sigma", "0.1", "--out", p(dir.path())]);
    assert!(out.status.success());
    assert_eq!(line_count(&dir.path().join("data.csv")), 500);
    assert_eq!(line_count(&dir.path().join("truth.csv")), 500);
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["config"]["d"], 512);
}

#[test]
fn single_cluster_has_all_zero_truth() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bckm(&["gen", "--k", "1", "--n", "3", "--d", "2", "--out", p(dir.path())]).status.success());
    assert_eq!(line_count(&dir.path().join("data.csv")), 3);
    let truth = std::fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert!(truth.lines().all(|l| l == "0"));
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_small(a.path());
    gen_small(b.path());
    for f in ["data.csv", "truth.csv", "constraints.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn fit_bckm_succeeds_on_a_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let fit_dir = dir.path().join("fit");
    let mps = dir.path().join("lp.mps");
    let out = bckm(&[
        "fit", "--data", p(&dir.path().join("data.csv")),
        "--constraints", p(&dir.path().join("constraints.json")),
        "--dump-lp", p(&mps), "--out", p(&fit_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let result = read_json(&fit_dir.join("result.json"));
    assert_eq!(result["converged"], true);
    for family in ["size_violations", "must_link_violations", "cannot_link_violations"] {
        assert_eq!(result["violations"][family].as_array().map(Vec::len), Some(0), "{family}");
    }
    assert_eq!(line_count(&fit_dir.join("labels.csv")), 45);
    assert!(std::fs::read_to_string(&mps).unwrap().starts_with("NAME"));
    assert!(fit_dir.join("manifest.json").exists());
}

#[test]
fn contradictory_links_exit_with_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cs = dir.path().join("bad.json");
    std::fs::write(&cs, r#"{"lower": [0, 0, 0], "must_link": [[0, 1]], "cannot_link": [[0, 1]]}"#).unwrap();
    let out = bckm(&["fit", "--data", p(&dir.path().join("data.csv")), "--constraints", p(&cs), "--out", p(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn lloyd_reports_violations_it_ignores() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let cs = dir.path().join("skewed.json");
    // bounds that nearest-centroid labels cannot meet
    std::fs::write(&cs, r#"{"lower": [40, 0, 0], "upper": [45, 45, 45]}"#).unwrap();
    let fit_dir = dir.path().join("f");
    let out = bckm(&["fit", "--algo", "lloyd", "--data", p(&dir.path().join("data.csv")), "--constraints", p(&cs), "--out", p(&fit_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let result = read_json(&fit_dir.join("result.json"));
    assert!(!result["violations"]["size_violations"].as_array().unwrap().is_empty());
}

#[test]
fn unconverged_fit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let out = bckm(&[
        "fit", "--data", p(&dir.path().join("data.csv")),
        "--constraints", p(&dir.path().join("constraints.json")),
        "--lambda", "1", "--max-iter", "1", "--out", p(&dir.path().join("f")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    std::fs::write(&cfg, r#"{"k": 4, "n": 6, "d": 3, "link-fraction": 0.0}"#).unwrap();
    let out_dir = dir.path().join("g");
    assert!(bckm(&["gen", "--config", p(&cfg), "--k", "2", "--out", p(&out_dir)]).status.success());
    assert_eq!(line_count(&out_dir.join("data.csv")), 12);
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["config"]["k"], 2);
    assert_eq!(manifest["config"]["d"], 3);
    assert_eq!(manifest["config"]["sigma"], 0.1);
}

#[test]
fn bench_rows_match_eval_on_persisted_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = bckm(&["bench", "--k-list", "2,5,10", "--algos", "bckm,lloyd", "--n", "8", "--seeds", "1", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("k,algo,seed,nmi,seconds,feasible"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert!(row[4].parse::<f64>().unwrap() > 0.0);
        let cell = dir.path().join("cells").join(format!("k{}-{}-seed{}", row[0], row[1], row[2]));
        let eval_dir = dir.path().join("eval");
        let out = bckm(&[
            "eval", "--labels", p(&cell.join("labels.csv")),
            "--truth", p(&cell.join("truth.csv")), "--k", row[0], "--out", p(&eval_dir),
        ]);
        assert!(out.status.success());
        let report = read_json(&eval_dir.join("eval.json"));
        let nmi: f64 = row[3].parse().unwrap();
        assert!((report["nmi"].as_f64().unwrap() - nmi).abs() < 1e-12);
    }
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let fit_dir = dir.path().join("fit");
    let out = bckm(&[
        "fit", "--data", p(&dir.path().join("data.csv")),
        "--constraints", p(&dir.path().join("constraints.json")), "--out", p(&fit_dir),
    ]);
    assert!(out.status.success());
    let again = dir.path().join("again");
    let out = bckm(&["replay", p(&fit_dir.join("manifest.json")), "--out", p(&again)]);
    assert!(out.status.success());
    for f in ["labels.csv", "centroids.csv"] {
        assert_eq!(std::fs::read(fit_dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
    }
}

#[test]
fn eval_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    gen_small(dir.path());
    let out = bckm(&[
        "eval", "--labels", p(&dir.path().join("truth.csv")), "--truth", p(&dir.path().join("truth.csv")),
        "--data", p(&dir.path().join("data.csv")), "--constraints", p(&dir.path().join("constraints.json")),
        "--out", p(&dir.path().join("e")),
    ]);
    assert!(out.status.success());
    let report = read_json(&dir.path().join("e/eval.json"));
    assert_eq!(report["nmi"], 1.0);
    assert_eq!(report["feasible"], true);
    assert_eq!(line_count(&dir.path().join("e/eval.csv")), 2);
}
