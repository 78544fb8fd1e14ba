//! Invariants checked on randomly generated instances.

use nalgebra::{DMatrix, DVector};
use orthtrp::lifting::LiftConfig;
use orthtrp::orth::update_block;
use orthtrp::{
    bernstein, build_quadratic, contains, eig_decompose, fit_ellipsoid, kkt_residual, lifted_map, objective_value,
    precompute_factorizations, proj_matrix, solve, traj_eval, trp_solve, trp_step, BezierCurve, CorridorSpec,
    CostSpec, Ellipsoid, Knot, LiftedMap, OrthTrpProblem, OrthTrpState, ParamPoint, SolverConfig, TrpProblem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller keeps the dependency list short.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * normal(rng))
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift;
    (&m + m.transpose()) * 0.5
}

fn in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    let d = random_vec(rng, n, 1.0);
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    let scale = r / d.norm();
    d * scale
}

fn coupled_problem(rng: &mut ChaCha8Rng, nb: usize, d: usize) -> OrthTrpProblem {
    let q = random_pd(rng, nb * d, 0.2);
    let g = random_vec(rng, nb * d, 2.0);
    OrthTrpProblem::from_dense(&q, &g, d).unwrap()
}

fn random_corridor(rng: &mut ChaCha8Rng, nq: usize) -> CorridorSpec {
    let center: Vec<DVector<f64>> = (0..5).map(|_| random_vec(rng, nq, 1.0)).collect();
    let axes: Vec<DVector<f64>> =
        (0..4).map(|_| DVector::from_fn(nq, |_, _| rng.gen_range(0.3..2.0))).collect();
    let center = BezierCurve::new(center).unwrap();
    let axes = BezierCurve::new(axes).unwrap();
    let knot = |eps: f64| {
        let s = axes.eval(eps, 0).unwrap();
        Knot::new(eps, Ellipsoid::new(center.eval(eps, 0).unwrap(), s.map(|x| 1.0 / (x * x))).unwrap())
    };
    let knots = vec![knot(0.0), knot(1.0)];
    CorridorSpec::new(knots, center, axes).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, cfg: &LiftConfig) -> ParamPoint {
    ParamPoint::new((0..cfg.nj).map(|_| in_ball(rng, cfg.ny, 1.0)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trp_solution_satisfies_kkt_and_beats_samples(seed in any::<u64>(), n in 2usize..9, radius in 0.05f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_pd(&mut rng, n, 0.1);
        let g = random_vec(&mut rng, n, 1.0);
        let p = TrpProblem::new(q.clone(), g.clone(), radius).unwrap();
        let s = trp_solve(&p, 1e-12).unwrap();
        let stationarity = (&q * &s.x + &g + &s.x * s.lambda).norm();
        prop_assert!(stationarity < 1e-9);
        prop_assert!(s.x.norm() <= radius * (1.0 + 1e-10));
        prop_assert!(s.lambda >= 0.0);
        prop_assert!((s.lambda * (s.x.norm() - radius)).abs() < 1e-9);
        let best = p.objective(&s.x);
        for _ in 0..200 {
            let x = in_ball(&mut rng, n, radius);
            prop_assert!(best <= p.objective(&x) + 1e-12);
        }
    }

    #[test]
    fn single_dual_step_stays_feasible(seed in any::<u64>(), n in 1usize..8, prev in proptest::option::of(0.0f64..50.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = eig_decompose(&random_pd(&mut rng, n, 0.05)).unwrap();
        let c = random_vec(&mut rng, n, 5.0);
        let (y, lambda) = trp_step(&f, &c, prev).unwrap();
        prop_assert!(y.norm() <= 1.0 + 1e-12);
        prop_assert!(lambda >= 0.0);
    }

    #[test]
    fn block_updates_never_increase_the_objective(seed in any::<u64>(), nb in 2usize..5, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = coupled_problem(&mut rng, nb, d);
        let factors = precompute_factorizations(&p).unwrap();
        let config = SolverConfig::exact();
        let mut state = OrthTrpState::initial(&p);
        let mut previous = p.objective(&state.y_blocks);
        for _ in 0..20 {
            for i in 0..nb {
                update_block(&p, &mut state, &factors, i, &config).unwrap();
                let value = p.objective(&state.y_blocks);
                prop_assert!(value <= previous + 1e-12 * previous.abs().max(1.0));
                prop_assert!(state.y_blocks[i].norm() <= 1.0 + 1e-12);
                previous = value;
            }
        }
    }

    #[test]
    fn solver_iterates_are_feasible_and_converge(seed in any::<u64>(), nb in 2usize..5, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = coupled_problem(&mut rng, nb, d);
        // Stagnation can stop strongly coupled instances early; only the KKT test counts here.
        let config = SolverConfig { max_sweeps: 50_000, kkt_tol: 1e-9, objective_tol: f64::MIN_POSITIVE, ..SolverConfig::default() };
        let (state, report) = solve(&p, &config).unwrap();
        prop_assert!(state.y_blocks.iter().all(|b| b.norm() <= 1.0 + 1e-12));
        prop_assert_eq!(report.status, orthtrp::ConvergenceStatus::KktMet);
        prop_assert!(kkt_residual(&p, &state.y_blocks, &state.lambda_blocks) <= 1e-7);
        prop_assert!(report.objective <= 0.0);
    }

    #[test]
    fn decoupled_blocks_solve_independently(seed in any::<u64>(), nb in 1usize..5, d in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<DMatrix<f64>> = (0..nb).map(|_| random_pd(&mut rng, d, 0.1)).collect();
        let gs: Vec<DVector<f64>> = (0..nb).map(|_| random_vec(&mut rng, d, 2.0)).collect();
        let q = (0..nb)
            .map(|i| (0..nb).map(|j| if i == j { blocks[i].clone() } else { DMatrix::zeros(d, d) }).collect())
            .collect();
        let p = OrthTrpProblem::new(q, gs.clone(), Default::default()).unwrap();
        let factors = precompute_factorizations(&p).unwrap();
        let next = orthtrp::sweep(&p, &OrthTrpState::initial(&p), &factors, &SolverConfig::exact()).unwrap();
        for i in 0..nb {
            let own = trp_solve(&TrpProblem::new(blocks[i].clone(), gs[i].clone(), 1.0).unwrap(), 1e-12).unwrap();
            prop_assert!((&next.y_blocks[i] - own.x).norm() < 1e-8);
        }
    }

    #[test]
    fn bernstein_partition_of_unity(degree in 0usize..20, t in 0.0f64..=1.0) {
        let b = bernstein(degree, t);
        prop_assert!(b.iter().all(|&x| x >= 0.0));
        prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_rows_are_orthonormal(nq in 1usize..4, ratio in 1usize..4, eps in 0.0f64..=1.0) {
        let cfg = LiftConfig::new(nq, nq * ratio, 1).unwrap();
        let p = proj_matrix(&cfg, eps, 0).unwrap();
        prop_assert!((&p * p.transpose() - DMatrix::identity(nq, nq)).amax() < 1e-12);
    }

    #[test]
    fn feasible_parameters_stay_in_the_corridor(
        seed in any::<u64>(), nq in 1usize..4, ratio in 1usize..3, nj in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LiftConfig::new(nq, nq * ratio, nj).unwrap();
        let map = LiftedMap::new(cfg, random_corridor(&mut rng, nq)).unwrap();
        let y = random_point(&mut rng, &cfg);
        for k in 0..50 {
            let eps = k as f64 / 49.0;
            let q = traj_eval(&map, &y, eps, 0).unwrap();
            let (inside, margin) = contains(&map.corridor, eps, &q).unwrap();
            prop_assert!(inside, "margin {margin} at eps {eps}");
        }
    }

    #[test]
    fn single_square_block_inverts_the_axes(seed in any::<u64>(), nq in 1usize..4, eps in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LiftConfig::new(nq, nq, 1).unwrap();
        let map = LiftedMap::new(cfg, random_corridor(&mut rng, nq)).unwrap();
        let y = random_point(&mut rng, &cfg);
        let q = traj_eval(&map, &y, eps, 0).unwrap();
        let s = map.corridor.axes_curve().eval(eps, 0).unwrap();
        let p = proj_matrix(&cfg, eps, 0).unwrap();
        let expected = s.component_mul(&(p * y.flatten())) + map.corridor.center_curve().eval(eps, 0).unwrap();
        prop_assert!((q - expected).amax() < 1e-12);
    }

    #[test]
    fn quadratic_model_matches_direct_cost(seed in any::<u64>(), nj in 1usize..5, order in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LiftConfig::new(3, 6, nj).unwrap();
        let map = LiftedMap::new(cfg, random_corridor(&mut rng, 3)).unwrap();
        let spec = CostSpec::uniform(order, 32, rng.gen_range(0.5..5.0), 1e-3).unwrap();
        let model = build_quadratic(&map, &spec).unwrap();
        let y = random_point(&mut rng, &cfg);
        let direct = objective_value(&map, &spec, &y).unwrap();
        prop_assert!((model.value(&y) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn horizon_rescales_cost_without_moving_the_minimizer(seed in any::<u64>(), horizon in 0.2f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LiftConfig::new(2, 4, 3).unwrap();
        let map = LiftedMap::new(cfg, random_corridor(&mut rng, 2)).unwrap();
        let base = CostSpec::uniform(2, 32, 1.0, 1e-3).unwrap();
        // Scaling ρ with T⁻⁴ keeps the whole objective proportional.
        let scaled = CostSpec { horizon, rho: 1e-3 * horizon.powi(-4), ..base.clone() };
        let config = SolverConfig { max_sweeps: 100_000, kkt_tol: 1e-10, ..SolverConfig::exact() };
        let a = solve(&build_quadratic(&map, &base).unwrap().problem, &config).unwrap().0.flatten();
        let b = solve(&build_quadratic(&map, &scaled).unwrap().problem, &config).unwrap().0.flatten();
        prop_assert!((a - b).amax() < 1e-5);
    }

    #[test]
    fn fitted_ellipsoid_excludes_every_point(seed in any::<u64>(), dim in 1usize..4, count in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = random_vec(&mut rng, dim, 1.0);
        let points: Vec<DVector<f64>> = (0..count).map(|_| &center + random_vec(&mut rng, dim, 2.0)).collect();
        let e = fit_ellipsoid(&center, &points, 1e-6).unwrap();
        prop_assert!(e.inv_radii_sq.iter().all(|&u| u >= 1e-6));
        for p in &points {
            prop_assert!(e.membership(p) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn lifted_map_derivatives_match_finite_differences(seed in any::<u64>(), eps in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LiftConfig::new(3, 6, 4).unwrap();
        let map = LiftedMap::new(cfg, random_corridor(&mut rng, 3)).unwrap();
        let h = 1e-5;
        for n in 1..=2 {
            let exact = lifted_map(&map, eps, n).unwrap();
            let fd = (lifted_map(&map, eps + h, n - 1).unwrap() - lifted_map(&map, eps - h, n - 1).unwrap()) / (2.0 * h);
            prop_assert!((&fd - &exact).norm() <= 1e-5 * exact.norm().max(1.0));
        }
    }
}
