//! One benchmark trial: corridor construction, assembly, solve and metrics.

use std::time::Instant;

use anyhow::{ensure, Context};
use nalgebra::DVector;
use orthtrp::corridor::VALIDATION_GRID;
use orthtrp::{
    average_acceleration, contains, fit_ellipsoid, fit_reference, kkt_residual, solve, traj_eval, ConvergenceStatus,
    CorridorSpec, CostSpec, Knot, LiftConfig, LiftedMap, ParamPoint, QuadraticModel, SampledCost, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, HorizonPolicy};
use crate::env::{generate_environment, RoomGrid};
use crate::waypoints::{initial_waypoints, random_room_sequence, resample, rooms_for_waypoints};

/// Control points of the reference Bézier curve.
pub const REFERENCE_CTRL: usize = 15;
/// Dense polyline samples the reference curve is fitted to.
pub const REFERENCE_FIT_SAMPLES: usize = 200;
/// Collision points farther than this many room diagonals are ignored per knot.
pub const CUTOFF_ROOM_DIAGONALS: f64 = 2.0;
pub const U_MIN: f64 = 1e-6;
/// Largest control-point count tried for the semi-axis curve.
pub const AXES_CTRL: usize = 10;
pub const CONTAINMENT_SAMPLES: usize = 200;
pub const CONTAINMENT_TOL: f64 = 1e-9;
pub const TRAJECTORY_SAMPLES: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchScenario {
    pub grid: RoomGrid,
    pub room_sequence: Vec<usize>,
    pub n_waypoints: usize,
    pub lift: LiftConfig,
    pub samples: usize,
    pub horizon_policy: HorizonPolicy,
    /// Relative regularization, see [`BenchConfig::rho`].
    pub rho: f64,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl BenchScenario {
    /// Environment and room walk both derive from `seed` (separate streams).
    pub fn from_config(cfg: &BenchConfig, n_waypoints: usize, seed: u64) -> anyhow::Result<Self> {
        ensure!(n_waypoints >= 2, "n_waypoints must be at least 2, got {n_waypoints}");
        let grid = generate_environment(cfg.grid_shape, cfg.room_size, cfg.door_size, cfg.points_per_wall, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let room_sequence = random_room_sequence(&grid, rooms_for_waypoints(n_waypoints), &mut rng);
        Ok(Self {
            grid,
            room_sequence,
            n_waypoints,
            lift: LiftConfig::new(3, cfg.ny, cfg.nj)?,
            samples: cfg.samples,
            horizon_policy: cfg.horizon_policy,
            rho: cfg.rho,
            solver: cfg.solver.solver_config(),
            seed,
        })
    }

    pub fn room_diagonal(&self) -> f64 {
        self.grid.room_size.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Blocks pinned to zero: the first two and the last two.
    pub fn fixed_blocks(&self) -> Vec<usize> {
        let nj = self.lift.nj;
        let mut blocks: Vec<usize> = [0, 1, nj.saturating_sub(2), nj.saturating_sub(1)]
            .into_iter()
            .filter(|&b| b < nj)
            .collect();
        blocks.sort_unstable();
        blocks.dedup();
        blocks
    }
}

#[derive(Debug, Clone)]
pub struct CorridorBuild {
    pub waypoints: Vec<DVector<f64>>,
    pub spec: CorridorSpec,
    /// Common factor applied to the semi-axes to restore exclusion.
    pub shrink: f64,
    /// Smallest membership value of any knot's own collision points.
    pub min_knot_exclusion: f64,
}

pub fn build_corridor(s: &BenchScenario) -> anyhow::Result<CorridorBuild> {
    let waypoints = initial_waypoints(&s.grid, &s.room_sequence, s.n_waypoints)?;
    let dense = resample(&waypoints, REFERENCE_FIT_SAMPLES);
    let reference = fit_reference(&dense, REFERENCE_CTRL, true)?.curve;

    let points = s.grid.points();
    let cutoff = CUTOFF_ROOM_DIAGONALS * s.room_diagonal();
    // Radii are capped at one room length: below the cutoff, so far points
    // can never be enclosed, and short enough for a smooth axis curve to follow.
    let cap = s.grid.room_size.iter().copied().fold(0.0, f64::max);
    let u_min = U_MIN.max(1.0 / (cap * cap));
    let n = waypoints.len();
    let mut knots = Vec::with_capacity(n);
    let mut min_knot_exclusion = f64::INFINITY;
    for k in 0..n {
        let eps = k as f64 / (n - 1) as f64;
        let center = reference.eval(eps, 0)?;
        let near: Vec<DVector<f64>> = points.iter().filter(|p| (*p - &center).norm() <= cutoff).cloned().collect();
        let e = fit_ellipsoid(&center, &near, u_min).with_context(|| format!("ellipsoid at knot {k}"))?;
        for p in &near {
            min_knot_exclusion = min_knot_exclusion.min(e.membership(p));
        }
        knots.push(Knot::new(eps, e));
    }
    // Fewer control points smooth more; keep the count that needs the least shrink.
    let mut best: Option<(CorridorSpec, f64)> = None;
    for ctrl in 4.min(n)..=AXES_CTRL.min(n) {
        let mut spec = CorridorSpec::from_knots(reference.clone(), knots.clone(), ctrl)?;
        let shrink = spec.shrink_to_exclude(&points, VALIDATION_GRID)?;
        if best.as_ref().is_none_or(|(_, b)| shrink > *b) {
            best = Some((spec, shrink));
        }
    }
    let (spec, shrink) = best.expect("at least one candidate");
    Ok(CorridorBuild { waypoints, spec, shrink, min_knot_exclusion })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Passed,
    NotConverged,
    ContainmentViolation,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Passed => "passed",
            TrialStatus::NotConverged => "not_converged",
            TrialStatus::ContainmentViolation => "containment_violation",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub n_waypoints: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub error: Option<String>,
    /// Corridor construction and quadratic assembly; not solver time.
    pub setup_s: f64,
    pub factorize_s: f64,
    pub sweep_s: f64,
    pub total_s: f64,
    pub sweeps: usize,
    #[serde(deserialize_with = "nan_if_null")]
    pub kkt: f64,
    pub convergence: Option<ConvergenceStatus>,
    pub decision_variables: usize,
    #[serde(deserialize_with = "nan_if_null")]
    pub horizon_s: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub avg_accel_reference: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub avg_accel_solution: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub improvement: f64,
    pub containment_violations: usize,
    #[serde(deserialize_with = "nan_if_null")]
    pub min_containment_margin: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub corridor_shrink: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub min_knot_exclusion: f64,
}

impl TrialResult {
    fn failed(s: &BenchScenario, setup_s: f64, err: anyhow::Error) -> Self {
        Self {
            n_waypoints: s.n_waypoints,
            seed: s.seed,
            status: TrialStatus::Failed,
            error: Some(format!("{err:#}")),
            setup_s,
            factorize_s: 0.0,
            sweep_s: 0.0,
            total_s: 0.0,
            sweeps: 0,
            kkt: f64::NAN,
            convergence: None,
            decision_variables: s.lift.param_dim(),
            horizon_s: f64::NAN,
            avg_accel_reference: f64::NAN,
            avg_accel_solution: f64::NAN,
            improvement: f64::NAN,
            containment_violations: 0,
            min_containment_margin: f64::NAN,
            corridor_shrink: f64::NAN,
            min_knot_exclusion: f64::NAN,
        }
    }

    /// Factorization time over total sweep time.
    pub fn time_split_ratio(&self) -> f64 {
        self.factorize_s / self.sweep_s
    }

    /// Factorization time over the mean time of one sweep.
    pub fn factorize_per_sweep_ratio(&self) -> f64 {
        self.factorize_s * self.sweeps as f64 / self.sweep_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub eps: f64,
    pub t: f64,
    pub q: [f64; 3],
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
}

/// Everything needed to re-check a solution offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub result: TrialResult,
    pub room_sequence: Vec<usize>,
    #[serde(with = "dvec_list")]
    pub waypoints: Vec<DVector<f64>>,
    pub corridor: CorridorSpec,
    pub lift: LiftConfig,
    /// Sampled acceleration cost with `rho = 0`.
    pub cost: CostSpec,
    /// The cost is multiplied by this before solving.
    pub cost_scale: f64,
    /// Regularization added to the scaled cost.
    pub rho: f64,
    pub fixed_blocks: Vec<usize>,
    pub y: ParamPoint,
    pub lambda: Vec<Option<f64>>,
    pub trajectory: Vec<TrajectorySample>,
}

/// Failed trials carry NaN metrics, which JSON stores as `null`.
fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

mod dvec_list {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(DVector::from_vec).collect())
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub record: Option<TrialRecord>,
}

/// Builds the scaled, regularized problem with the fixed blocks pinned to zero.
pub fn assemble_problem(
    map: &LiftedMap,
    cost: &CostSpec,
    rho: f64,
    fixed: &[usize],
) -> anyhow::Result<(QuadraticModel, f64)> {
    let sampled = SampledCost::assemble(map, cost)?;
    let mean = sampled.mean_diagonal();
    ensure!(mean > 0.0, "sampled cost has a zero diagonal");
    let scale = 1.0 / mean;
    let mut model = sampled.scaled(scale).regularize(rho)?;
    for &b in fixed {
        model.problem = model.problem.with_fixed_block(b, DVector::zeros(map.config.ny))?;
    }
    Ok((model, scale))
}

fn to3(v: &DVector<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// A scenario up to the point of solving: corridor, map and assembled problem.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub build: CorridorBuild,
    pub map: LiftedMap,
    pub cost: CostSpec,
    pub model: QuadraticModel,
    pub cost_scale: f64,
    pub fixed: Vec<usize>,
}

pub fn prepare(s: &BenchScenario) -> anyhow::Result<PreparedTrial> {
    let build = build_corridor(s)?;
    let map = LiftedMap::new(s.lift, build.spec.clone())?;
    let horizon = s.horizon_policy.horizon(map.corridor.center_curve().arc_length(1000));
    let cost = CostSpec::uniform(2, s.samples, horizon, 0.0)?;
    let fixed = s.fixed_blocks();
    let (model, cost_scale) = assemble_problem(&map, &cost, s.rho, &fixed)?;
    Ok(PreparedTrial { build, map, cost, model, cost_scale, fixed })
}

/// Runs one trial. Failures are reported through the status, never raised.
pub fn run_trial(s: &BenchScenario) -> TrialOutcome {
    let t0 = Instant::now();
    let outcome = prepare(s).and_then(|p| finish_trial(s, p, t0.elapsed().as_secs_f64()));
    outcome.unwrap_or_else(|e| TrialOutcome {
        result: TrialResult::failed(s, t0.elapsed().as_secs_f64(), e),
        record: None,
    })
}

fn finish_trial(s: &BenchScenario, p: PreparedTrial, setup_s: f64) -> anyhow::Result<TrialOutcome> {
    let (state, report) = solve(&p.model.problem, &s.solver)?;
    let y = ParamPoint::new(state.y_blocks.clone());
    let horizon = p.cost.horizon;

    let zero = ParamPoint::zeros(&s.lift);
    let a_ref = average_acceleration(&p.map, &p.cost, &zero)?;
    let a_sol = average_acceleration(&p.map, &p.cost, &y)?;
    let (violations, min_margin) = containment(&p.map, &y, CONTAINMENT_SAMPLES)?;

    let status = if !report.status.converged() {
        TrialStatus::NotConverged
    } else if violations > 0 {
        TrialStatus::ContainmentViolation
    } else {
        TrialStatus::Passed
    };
    let result = TrialResult {
        n_waypoints: s.n_waypoints,
        seed: s.seed,
        status,
        error: None,
        setup_s,
        factorize_s: report.factorize_s,
        sweep_s: report.sweep_s,
        total_s: report.factorize_s + report.sweep_s,
        sweeps: report.sweeps,
        kkt: report.kkt_residual,
        convergence: Some(report.status),
        decision_variables: s.lift.param_dim(),
        horizon_s: horizon,
        avg_accel_reference: a_ref,
        avg_accel_solution: a_sol,
        improvement: (a_ref - a_sol) / a_ref,
        containment_violations: violations,
        min_containment_margin: min_margin,
        corridor_shrink: p.build.shrink,
        min_knot_exclusion: p.build.min_knot_exclusion,
    };
    let trajectory = trajectory_samples(&p.map, &y, horizon, TRAJECTORY_SAMPLES)?;
    let record = TrialRecord {
        result: result.clone(),
        room_sequence: s.room_sequence.clone(),
        waypoints: p.build.waypoints,
        corridor: p.build.spec,
        lift: s.lift,
        cost: p.cost,
        cost_scale: p.cost_scale,
        rho: s.rho,
        fixed_blocks: p.fixed,
        y,
        lambda: state.lambda_blocks,
        trajectory,
    };
    Ok(TrialOutcome { result, record: Some(record) })
}

/// Violations and the smallest margin over a uniform ε grid.
pub fn containment(map: &LiftedMap, y: &ParamPoint, n: usize) -> anyhow::Result<(usize, f64)> {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for k in 0..n {
        let eps = k as f64 / (n - 1) as f64;
        let q = traj_eval(map, y, eps, 0)?;
        let (_, margin) = contains(&map.corridor, eps, &q)?;
        if margin < -CONTAINMENT_TOL {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Ok((violations, worst))
}

pub fn trajectory_samples(
    map: &LiftedMap,
    y: &ParamPoint,
    horizon: f64,
    n: usize,
) -> anyhow::Result<Vec<TrajectorySample>> {
    (0..n)
        .map(|k| {
            let eps = k as f64 / (n - 1) as f64;
            Ok(TrajectorySample {
                eps,
                t: eps * horizon,
                q: to3(&traj_eval(map, y, eps, 0)?),
                velocity: to3(&(traj_eval(map, y, eps, 1)? / horizon)),
                acceleration: to3(&(traj_eval(map, y, eps, 2)? / (horizon * horizon))),
            })
        })
        .collect()
}

/// Rebuilds the problem stored in a record and reports the KKT residual and
/// containment of the stored solution.
pub fn recheck(record: &TrialRecord) -> anyhow::Result<Recheck> {
    let map = LiftedMap::new(record.lift, record.corridor.clone())?;
    let sampled = SampledCost::assemble(&map, &record.cost)?;
    let mut model = sampled.scaled(record.cost_scale).regularize(record.rho)?;
    for &b in &record.fixed_blocks {
        model.problem = model.problem.with_fixed_block(b, DVector::zeros(record.lift.ny))?;
    }
    let kkt = kkt_residual(&model.problem, &record.y.blocks, &record.lambda);
    let (violations, min_margin) = containment(&map, &record.y, CONTAINMENT_SAMPLES)?;
    Ok(Recheck { kkt, violations, min_margin, max_block_norm: record.y.max_block_norm() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recheck {
    pub kkt: f64,
    pub violations: usize,
    pub min_margin: f64,
    pub max_block_norm: f64,
}
