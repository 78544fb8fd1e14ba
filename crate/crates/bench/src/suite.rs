//! Sweeps over waypoint counts and seeds, writing per-trial and aggregate files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::trial::{run_trial, BenchScenario, TrialRecord, TrialResult, TrialStatus};

pub const SUMMARY_HEADER: [&str; 9] =
    ["n_waypoints", "seed", "total_s", "factorize_s", "sweep_s", "sweeps", "kkt", "improvement", "status"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub trials: usize,
    pub passed: usize,
    pub pass_rate: f64,
    /// Mean improvement over passing trials.
    pub mean_improvement: f64,
    /// Median solver time (factorize + sweeps) of passing trials per waypoint count.
    pub median_total_s: BTreeMap<usize, f64>,
    pub median_setup_s: BTreeMap<usize, f64>,
    pub results: Vec<TrialResult>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

impl SuiteSummary {
    pub fn from_results(results: Vec<TrialResult>) -> Self {
        let passing: Vec<&TrialResult> = results.iter().filter(|r| r.status == TrialStatus::Passed).collect();
        let passed = passing.len();
        let mean_improvement = if passed > 0 {
            passing.iter().map(|r| r.improvement).sum::<f64>() / passed as f64
        } else {
            f64::NAN
        };
        let mut totals: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut setups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &passing {
            totals.entry(r.n_waypoints).or_default().push(r.total_s);
            setups.entry(r.n_waypoints).or_default().push(r.setup_s);
        }
        let medians = |m: BTreeMap<usize, Vec<f64>>| m.into_iter().map(|(k, mut v)| (k, median(&mut v))).collect();
        Self {
            trials: results.len(),
            passed,
            pass_rate: if results.is_empty() { f64::NAN } else { passed as f64 / results.len() as f64 },
            mean_improvement,
            median_total_s: medians(totals),
            median_setup_s: medians(setups),
            results,
        }
    }
}

pub fn trial_stem(n_waypoints: usize, seed: u64) -> String {
    format!("n{n_waypoints:02}_seed{seed}")
}

pub fn write_summary_csv(path: &Path, results: &[TrialResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(SUMMARY_HEADER)?;
    for r in results {
        w.write_record([
            r.n_waypoints.to_string(),
            r.seed.to_string(),
            r.total_s.to_string(),
            r.factorize_s.to_string(),
            r.sweep_s.to_string(),
            r.sweeps.to_string(),
            r.kkt.to_string(),
            r.improvement.to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, record: &TrialRecord) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["eps", "t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az"])?;
    for s in &record.trajectory {
        let row: Vec<String> = [s.eps, s.t]
            .iter()
            .chain(&s.q)
            .chain(&s.velocity)
            .chain(&s.acceleration)
            .map(|x| x.to_string())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Output locations for one suite run.
pub struct SuiteLayout {
    pub root: PathBuf,
}

impl SuiteLayout {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        for sub in ["trials", "trajectories"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("cannot create {}", root.join(sub).display()))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn summary_csv(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn suite_json(&self) -> PathBuf {
        self.root.join("suite.json")
    }

    pub fn trial_json(&self, n: usize, seed: u64) -> PathBuf {
        self.root.join("trials").join(format!("{}.json", trial_stem(n, seed)))
    }

    pub fn trajectory_csv(&self, n: usize, seed: u64) -> PathBuf {
        self.root.join("trajectories").join(format!("{}.csv", trial_stem(n, seed)))
    }
}

/// Runs every (waypoint count, seed) pair of the config sequentially.
/// `progress` is called after each trial.
pub fn run_suite(
    cfg: &BenchConfig,
    out: &Path,
    mut progress: impl FnMut(&TrialResult),
) -> anyhow::Result<SuiteSummary> {
    let layout = SuiteLayout::create(out)?;
    let mut results = Vec::new();
    for n in cfg.n_waypoints.to_vec() {
        for seed in cfg.seed.to_vec() {
            let outcome = match BenchScenario::from_config(cfg, n, seed) {
                Ok(scenario) => run_trial(&scenario),
                Err(e) => anyhow::bail!("invalid scenario for n_waypoints = {n}, seed = {seed}: {e:#}"),
            };
            let json = match &outcome.record {
                Some(record) => {
                    write_trajectory_csv(&layout.trajectory_csv(n, seed), record)?;
                    serde_json::to_string_pretty(record)?
                }
                None => serde_json::to_string_pretty(&serde_json::json!({ "result": outcome.result }))?,
            };
            fs::write(layout.trial_json(n, seed), json)?;
            progress(&outcome.result);
            results.push(outcome.result);
        }
    }
    write_summary_csv(&layout.summary_csv(), &results)?;
    let summary = SuiteSummary::from_results(results);
    fs::write(layout.suite_json(), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
