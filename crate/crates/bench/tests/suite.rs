use std::fs;
use std::process::Command;

use orthtrp_bench::config::OneOrMany;
use orthtrp_bench::suite::SUMMARY_HEADER;
use orthtrp_bench::{recheck, run_suite, BenchConfig, TrialRecord, TrialStatus};

fn config(waypoints: Vec<usize>, seeds: Vec<u64>) -> BenchConfig {
    BenchConfig { n_waypoints: OneOrMany::Many(waypoints), seed: OneOrMany::Many(seeds), ..BenchConfig::default() }
}

fn rows(path: &std::path::Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_suite(&config(vec![], vec![0]), dir.path(), |_| {}).unwrap();
    assert_eq!(summary.trials, 0);
    let mut reader = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), SUMMARY_HEADER);
    assert_eq!(reader.records().count(), 0);
}

#[test]
fn two_seeds_give_two_rows_and_consistent_files() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_suite(&config(vec![11], vec![0, 1]), dir.path(), |_| {}).unwrap();
    assert_eq!(summary.trials, 2);
    assert_eq!(rows(&dir.path().join("summary.csv")).len(), 2);

    let mut improvements = Vec::new();
    for seed in [0, 1] {
        let text = fs::read_to_string(dir.path().join(format!("trials/n11_seed{seed}.json"))).unwrap();
        let record: TrialRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(record.result.status, TrialStatus::Passed);
        assert_eq!(record.result.decision_variables, 84);
        assert_eq!(record.y.flatten().len(), 84);
        let check = recheck(&record).unwrap();
        assert!((check.kkt - record.result.kkt).abs() <= 1e-9 * record.result.kkt.max(1.0));
        assert_eq!(check.violations, 0);
        assert!(check.max_block_norm <= 1.0 + 1e-9);
        improvements.push(record.result.improvement);
        assert_eq!(rows(&dir.path().join(format!("trajectories/n11_seed{seed}.csv"))).len(), 101);
    }
    let mean = improvements.iter().sum::<f64>() / improvements.len() as f64;
    assert!((mean - summary.mean_improvement).abs() < 1e-15);
}

#[test]
fn rows_are_deterministic_apart_from_timing() {
    let strip = |dir: &std::path::Path| -> Vec<Vec<String>> {
        rows(&dir.join("summary.csv"))
            .iter()
            .map(|r| [0, 1, 5, 6, 7, 8].iter().map(|&i| r[i].to_string()).collect())
            .collect()
    };
    let cfg = config(vec![12], vec![3]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_suite(&cfg, a.path(), |_| {}).unwrap();
    run_suite(&cfg, b.path(), |_| {}).unwrap();
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn cli_runs_and_validates_a_trial() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_bench");
    let out = dir.path().join("run");
    let status = Command::new(exe)
        .args(["run", "--out", out.to_str().unwrap(), "--seeds", "2", "--waypoints", "11"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let trial = out.join("trials/n11_seed2.json");
    let validate = Command::new(exe).args(["validate", trial.to_str().unwrap()]).output().unwrap();
    assert!(validate.status.success(), "{}", String::from_utf8_lossy(&validate.stdout));

    // A tampered solution must be rejected.
    let mut record: TrialRecord = serde_json::from_str(&fs::read_to_string(&trial).unwrap()).unwrap();
    record.y.blocks[5][0] += 0.5;
    let bad = dir.path().join("bad.json");
    fs::write(&bad, serde_json::to_string(&record).unwrap()).unwrap();
    let validate = Command::new(exe).args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(validate.status.code(), Some(1));

    let scenario = dir.path().join("scenario.json");
    let gen = Command::new(exe)
        .args(["gen-env", "--seed", "4", "--waypoints", "13", "--out", scenario.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let single = Command::new(exe).args(["single", "--scenario", scenario.to_str().unwrap()]).output().unwrap();
    assert!(single.status.success(), "{}", String::from_utf8_lossy(&single.stderr));
}
