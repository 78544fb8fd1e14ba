use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use orthtrp::BlockMode;
use orthtrp_bench::config::{parse_list, parse_waypoints, OneOrMany};
use orthtrp_bench::suite::{write_summary_csv, write_trajectory_csv, SuiteLayout};
use orthtrp_bench::{recheck, run_suite, run_trial, BenchConfig, BenchScenario, TrialRecord, TrialResult};

#[derive(Parser)]
#[command(name = "bench", about = "Grid-of-rooms corridor trajectory benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Single,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep waypoint counts and seeds from a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds, overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        /// `a..b` (inclusive) or a comma list, overriding the config.
        #[arg(long)]
        waypoints: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Generate one scenario (environment plus room sequence) as JSON.
    GenEnv {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 11)]
        waypoints: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario written by `gen-env`.
    Single {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for the trial JSON and trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check containment and KKT residual of a stored trial.
    Validate { trial: PathBuf },
}

fn load_config(path: Option<&PathBuf>) -> anyhow::Result<BenchConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            BenchConfig::from_json(&text).with_context(|| format!("invalid config {}", p.display()))
        }
        None => Ok(BenchConfig::default()),
    }
}

fn print_result(r: &TrialResult) {
    println!(
        "n={:>2} seed={:<4} {:<22} sweeps={:<6} kkt={:.2e} solve={:.4}s (factorize {:.2e}s, sweeps {:.2e}s, ratio {:.3}, per sweep {:.2}) setup={:.3}s improvement={:.4}{}",
        r.n_waypoints,
        r.seed,
        r.status.as_str(),
        r.sweeps,
        r.kkt,
        r.total_s,
        r.factorize_s,
        r.sweep_s,
        r.time_split_ratio(),
        r.factorize_per_sweep_ratio(),
        r.setup_s,
        r.improvement,
        r.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
    );
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, out, seeds, waypoints, mode } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(s) = seeds {
                cfg.seed = OneOrMany::Many(parse_list(&s).map_err(anyhow::Error::msg)?);
            }
            if let Some(w) = waypoints {
                cfg.n_waypoints = OneOrMany::Many(parse_waypoints(&w).map_err(anyhow::Error::msg)?);
            }
            if let Some(m) = mode {
                cfg.solver.block_mode = match m {
                    Mode::Single => BlockMode::SingleDualStep,
                    Mode::Exact => BlockMode::ExactBlockSolve,
                };
            }
            let summary = run_suite(&cfg, &out, print_result)?;
            println!(
                "{} trials, {} passed ({:.1}%), mean improvement {:.4}",
                summary.trials,
                summary.passed,
                100.0 * summary.pass_rate,
                summary.mean_improvement
            );
            for (n, t) in &summary.median_total_s {
                println!("  n={n:>2}: median solve {t:.4}s, median setup {:.3}s", summary.median_setup_s[n]);
            }
            Ok(true)
        }
        Command::GenEnv { config, seed, waypoints, out } => {
            let cfg = load_config(config.as_ref())?;
            let scenario = BenchScenario::from_config(&cfg, waypoints, seed)?;
            fs::write(&out, serde_json::to_string_pretty(&scenario)?)?;
            println!(
                "wrote {} ({} walls, {} collision points, rooms {:?})",
                out.display(),
                scenario.grid.walls.len(),
                scenario.grid.collision_points.len(),
                scenario.room_sequence
            );
            Ok(true)
        }
        Command::Single { scenario, out } => {
            let text = fs::read_to_string(&scenario).with_context(|| format!("cannot read {}", scenario.display()))?;
            let s: BenchScenario = serde_json::from_str(&text).context("invalid scenario")?;
            let outcome = run_trial(&s);
            print_result(&outcome.result);
            if let Some(dir) = out {
                let layout = SuiteLayout::create(&dir)?;
                if let Some(record) = &outcome.record {
                    fs::write(layout.trial_json(s.n_waypoints, s.seed), serde_json::to_string_pretty(record)?)?;
                    write_trajectory_csv(&layout.trajectory_csv(s.n_waypoints, s.seed), record)?;
                }
                write_summary_csv(&layout.summary_csv(), std::slice::from_ref(&outcome.result))?;
            }
            Ok(outcome.result.status == orthtrp_bench::TrialStatus::Passed)
        }
        Command::Validate { trial } => {
            let text = fs::read_to_string(&trial).with_context(|| format!("cannot read {}", trial.display()))?;
            let record: TrialRecord = serde_json::from_str(&text).context("not a trial record")?;
            let check = recheck(&record)?;
            let stored = record.result.kkt;
            let kkt_ok = (check.kkt - stored).abs() <= 1e-9 * stored.abs().max(1e-12);
            let feasible = check.max_block_norm <= 1.0 + 1e-9;
            println!(
                "kkt {:.3e} (stored {:.3e}) {}; max block norm {:.12}; containment violations {} (min margin {:.3e})",
                check.kkt,
                stored,
                if kkt_ok { "ok" } else { "MISMATCH" },
                check.max_block_norm,
                check.violations,
                check.min_margin
            );
            Ok(kkt_ok && feasible && check.violations == 0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
