//! Lifted parameterization of corridor trajectories.
//!
//! A point `y = (y_1, …, y_{N_J})` of a product of unit balls in `ℝ^{N_y}` maps
//! to a configuration through
//!
//! ```text
//! q(ε, y) = C_ε⁻¹ · L^proj_ε · Σ_j B_j(ε) y_j + q̃_ε,   L^proj_ε = I_{N_q} ⊗ B̄_εᵀ
//! ```
//!
//! where `B̄_ε` is a normalized Bernstein basis (so `L^proj_ε` has orthonormal
//! rows) and `B_j` are convex Bernstein weights. Every feasible `y` therefore
//! stays inside the corridor for all ε.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bezier::{bernstein, bernstein_derivative};
use crate::corridor::{interpolate_corridor, CorridorSpec};
use crate::{Error, Result};

pub const MAX_DERIVATIVE: usize = 2;

fn check_order(n: usize) -> Result<()> {
    if n > MAX_DERIVATIVE {
        return Err(Error::DerivativeOrder { order: n, max: MAX_DERIVATIVE });
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::ParameterOutOfRange(eps));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftConfig {
    pub nq: usize,
    pub ny: usize,
    pub nj: usize,
}

impl LiftConfig {
    pub fn new(nq: usize, ny: usize, nj: usize) -> Result<Self> {
        if nq == 0 || ny < nq || !ny.is_multiple_of(nq) {
            return Err(Error::InvalidArgument(format!("N_y = {ny} must be a positive multiple of N_q = {nq}")));
        }
        if nj == 0 {
            return Err(Error::InvalidArgument("N_J must be at least 1".into()));
        }
        Ok(Self { nq, ny, nj })
    }

    /// Length of `B̄`, i.e. `N_y / N_q`.
    pub fn ratio(&self) -> usize {
        self.ny / self.nq
    }

    pub fn proj_degree(&self) -> usize {
        self.ratio() - 1
    }

    pub fn block_degree(&self) -> usize {
        self.nj - 1
    }

    /// Length of a flattened parameter point, `N_J · N_y`.
    pub fn param_dim(&self) -> usize {
        self.nj * self.ny
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedMap {
    pub config: LiftConfig,
    pub corridor: CorridorSpec,
}

impl LiftedMap {
    pub fn new(config: LiftConfig, corridor: CorridorSpec) -> Result<Self> {
        if corridor.dim() != config.nq {
            return Err(Error::Dimension(format!(
                "corridor is {}-dimensional but N_q = {}",
                corridor.dim(),
                config.nq
            )));
        }
        Ok(Self { config, corridor })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(with = "crate::serde_vec::list")]
    pub blocks: Vec<DVector<f64>>,
}

impl ParamPoint {
    pub fn new(blocks: Vec<DVector<f64>>) -> Self {
        Self { blocks }
    }

    pub fn zeros(cfg: &LiftConfig) -> Self {
        Self { blocks: vec![DVector::zeros(cfg.ny); cfg.nj] }
    }

    /// Splits a block-major vector `[y_1; y_2; …]`.
    pub fn from_flat(cfg: &LiftConfig, y: &DVector<f64>) -> Result<Self> {
        if y.len() != cfg.param_dim() {
            return Err(Error::Dimension(format!("expected {} entries, got {}", cfg.param_dim(), y.len())));
        }
        Ok(Self { blocks: (0..cfg.nj).map(|j| y.rows(j * cfg.ny, cfg.ny).into_owned()).collect() })
    }

    pub fn flatten(&self) -> DVector<f64> {
        let n: usize = self.blocks.iter().map(|b| b.len()).sum();
        DVector::from_iterator(n, self.blocks.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_block_norm() <= 1.0 + tol
    }

    fn check(&self, cfg: &LiftConfig) -> Result<()> {
        if self.blocks.len() != cfg.nj || self.blocks.iter().any(|b| b.len() != cfg.ny) {
            return Err(Error::Dimension(format!("parameter point must have {} blocks of length {}", cfg.nj, cfg.ny)));
        }
        Ok(())
    }
}

/// `n`-th derivative of `B̄(ε) = b(ε)/‖b(ε)‖` for the Bernstein basis `b` of
/// degree `N_y/N_q − 1`.
pub fn proj_basis(cfg: &LiftConfig, eps: f64, n: usize) -> Result<DVector<f64>> {
    check_order(n)?;
    check_eps(eps)?;
    let deg = cfg.proj_degree();
    let b = DVector::from_vec(bernstein(deg, eps));
    let r = b.norm();
    let unit = &b / r;
    if n == 0 {
        return Ok(unit);
    }
    let b1 = DVector::from_vec(bernstein_derivative(deg, eps, 1));
    let r1 = unit.dot(&b1);
    let d1 = (&b1 - &unit * r1) / r;
    if n == 1 {
        return Ok(d1);
    }
    let b2 = DVector::from_vec(bernstein_derivative(deg, eps, 2));
    let r2 = d1.dot(&b1) + unit.dot(&b2);
    Ok((b2 - &unit * r2 - &d1 * (2.0 * r1)) / r)
}

/// `I_{N_q} ⊗ B̄⁽ⁿ⁾(ε)ᵀ`: row `d` carries the basis in columns `[d·m, (d+1)·m)`.
pub fn proj_matrix(cfg: &LiftConfig, eps: f64, n: usize) -> Result<DMatrix<f64>> {
    let basis = proj_basis(cfg, eps, n)?;
    Ok(kron_rows(cfg, &basis))
}

fn kron_rows(cfg: &LiftConfig, basis: &DVector<f64>) -> DMatrix<f64> {
    let m = cfg.ratio();
    let mut p = DMatrix::zeros(cfg.nq, cfg.ny);
    for d in 0..cfg.nq {
        for k in 0..m {
            p[(d, d * m + k)] = basis[k];
        }
    }
    p
}

/// Block weights: the Bernstein basis of degree `N_J − 1` (or its derivative).
pub fn block_basis(cfg: &LiftConfig, eps: f64, n: usize) -> Result<DVector<f64>> {
    check_order(n)?;
    check_eps(eps)?;
    Ok(DVector::from_vec(bernstein_derivative(cfg.block_degree(), eps, n)))
}

fn multinomial(n: usize, a: usize, b: usize, c: usize) -> f64 {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    fact(n) / (fact(a) * fact(b) * fact(c))
}

/// `n`-th ε-derivative of `L^y_ε = C_ε⁻¹ L^proj_ε B_ε` as an
/// `N_q × (N_J·N_y)` matrix acting on block-major parameter vectors. The three
/// factors are differentiated with the multinomial Leibniz rule.
pub fn lifted_map(map: &LiftedMap, eps: f64, n: usize) -> Result<DMatrix<f64>> {
    check_order(n)?;
    check_eps(eps)?;
    let cfg = &map.config;
    let mut inv_axes = Vec::with_capacity(n + 1);
    let mut proj = Vec::with_capacity(n + 1);
    let mut blocks = Vec::with_capacity(n + 1);
    for k in 0..=n {
        inv_axes.push(interpolate_corridor(&map.corridor, eps, k)?.inv_axes);
        proj.push(proj_matrix(cfg, eps, k)?);
        blocks.push(block_basis(cfg, eps, k)?);
    }

    let mut out = DMatrix::zeros(cfg.nq, cfg.param_dim());
    for a in 0..=n {
        for b in 0..=(n - a) {
            let c = n - a - b;
            let mut scaled = proj[b].clone();
            for (d, mut row) in scaled.row_iter_mut().enumerate() {
                row *= inv_axes[a][d];
            }
            let coef = multinomial(n, a, b, c);
            for j in 0..cfg.nj {
                let w = coef * blocks[c][j];
                if w != 0.0 {
                    let mut view = out.columns_mut(j * cfg.ny, cfg.ny);
                    view += &scaled * w;
                }
            }
        }
    }
    Ok(out)
}

/// `q⁽ⁿ⁾(ε) = L⁽ⁿ⁾_ε y + q̃⁽ⁿ⁾_ε`.
pub fn traj_eval(map: &LiftedMap, y: &ParamPoint, eps: f64, n: usize) -> Result<DVector<f64>> {
    y.check(&map.config)?;
    let l = lifted_map(map, eps, n)?;
    Ok(l * y.flatten() + map.corridor.center_curve().eval(eps, n)?)
}

/// Radius of the ball of parameters in the kernel of `L_ε` that all map to
/// `q`: `√(1 − ‖L_ε† (q − q̃_ε)‖²)`. Defined for a single block only.
pub fn feasible_radius(map: &LiftedMap, eps: f64, q: &DVector<f64>) -> Result<f64> {
    if map.config.nj != 1 {
        return Err(Error::InvalidArgument("feasible_radius needs N_J = 1".into()));
    }
    if q.len() != map.config.nq {
        return Err(Error::Dimension(format!("q has length {}, expected {}", q.len(), map.config.nq)));
    }
    let l = lifted_map(map, eps, 0)?;
    let offset = q - map.corridor.center_curve().eval(eps, 0)?;
    let pinv = l.pseudo_inverse(1e-14).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let norm_sq = (pinv * offset).norm_squared();
    if norm_sq > (1.0 + 1e-9) * (1.0 + 1e-9) {
        return Err(Error::InfeasibleConfiguration { norm: norm_sq.sqrt() });
    }
    let slack = 1.0 - norm_sq;
    Ok(if slack <= 1e-12 { 0.0 } else { slack.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::BezierCurve;
    use crate::corridor::{contains, Knot};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn corridor(nq: usize, radii: &[[f64; 2]]) -> CorridorSpec {
        let n = radii.len();
        let knots = radii
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let u = DVector::from_iterator(nq, (0..nq).map(|d| 1.0 / r[d % 2].powi(2)));
                Knot { eps: k as f64 / (n - 1) as f64, center: DVector::zeros(nq), u }
            })
            .collect();
        let center = BezierCurve::new(vec![
            DVector::zeros(nq),
            DVector::from_fn(nq, |d, _| d as f64 + 1.0),
            DVector::from_fn(nq, |d, _| 3.0 - d as f64),
            DVector::from_element(nq, 2.0),
        ])
        .unwrap();
        CorridorSpec::from_knots(center, knots, n).unwrap()
    }

    fn unit_corridor(nq: usize) -> CorridorSpec {
        let knots = (0..2)
            .map(|k| Knot { eps: k as f64, center: DVector::zeros(nq), u: DVector::from_element(nq, 1.0) })
            .collect();
        let center = BezierCurve::new(vec![DVector::zeros(nq), DVector::zeros(nq)]).unwrap();
        CorridorSpec::from_knots(center, knots, 2).unwrap()
    }

    fn sample_map(nq: usize, ny: usize, nj: usize) -> LiftedMap {
        let spec = corridor(nq, &[[1.0, 0.5], [0.6, 1.2], [1.5, 0.8], [0.9, 0.7]]);
        LiftedMap::new(LiftConfig::new(nq, ny, nj).unwrap(), spec).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(LiftConfig::new(3, 6, 14).is_ok());
        assert!(LiftConfig::new(3, 7, 1).is_err());
        assert!(LiftConfig::new(3, 0, 1).is_err());
        assert!(LiftConfig::new(3, 6, 0).is_err());
        assert_eq!(LiftConfig::new(3, 6, 14).unwrap().param_dim(), 84);
    }

    #[test]
    fn degree_one_basis_values() {
        let cfg = LiftConfig::new(3, 6, 1).unwrap();
        assert_eq!(proj_basis(&cfg, 0.0, 0).unwrap(), v(&[1.0, 0.0]));
        let mid = proj_basis(&cfg, 0.5, 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((mid - v(&[h, h])).amax() < 1e-15);
    }

    #[test]
    fn basis_derivatives_match_finite_differences() {
        let h = 1e-5;
        for ratio in [2, 3, 4] {
            let cfg = LiftConfig::new(2, 2 * ratio, 1).unwrap();
            for k in 1..10 {
                let eps = k as f64 / 10.0;
                for n in 1..=2 {
                    let fd = (proj_basis(&cfg, eps + h, n - 1).unwrap() - proj_basis(&cfg, eps - h, n - 1).unwrap())
                        / (2.0 * h);
                    let exact = proj_basis(&cfg, eps, n).unwrap();
                    assert!((fd - &exact).amax() < 1e-7 * exact.amax().max(1.0), "ratio {ratio} n {n} eps {eps}");
                }
            }
        }
    }

    #[test]
    fn projection_selects_and_has_orthonormal_rows() {
        let cfg = LiftConfig::new(3, 6, 1).unwrap();
        let p = proj_matrix(&cfg, 0.0, 0).unwrap();
        let y = v(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(&p * y, v(&[1.0, 3.0, 5.0]));
        for k in 0..=20 {
            let p = proj_matrix(&cfg, k as f64 / 20.0, 0).unwrap();
            assert!((&p * p.transpose() - DMatrix::identity(3, 3)).amax() < 1e-12);
        }
    }

    #[test]
    fn trivial_ratio_has_constant_basis() {
        let cfg = LiftConfig::new(2, 2, 1).unwrap();
        assert_eq!(proj_basis(&cfg, 0.3, 0).unwrap(), v(&[1.0]));
        assert_eq!(proj_basis(&cfg, 0.3, 1).unwrap(), v(&[0.0]));
        assert_eq!(proj_basis(&cfg, 0.3, 2).unwrap(), v(&[0.0]));
    }

    #[test]
    fn block_basis_endpoints() {
        let cfg = LiftConfig::new(3, 6, 5).unwrap();
        assert_eq!(block_basis(&cfg, 0.0, 0).unwrap(), v(&[1.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(block_basis(&cfg, 1.0, 0).unwrap(), v(&[0.0, 0.0, 0.0, 0.0, 1.0]));
        assert!((block_basis(&cfg, 0.37, 0).unwrap().sum() - 1.0).abs() < 1e-12);
        assert!(block_basis(&cfg, 0.5, 3).is_err());
        assert!(block_basis(&cfg, 1.5, 0).is_err());
    }

    #[test]
    fn trivial_composition_selects_first_block() {
        let map = LiftedMap::new(LiftConfig::new(3, 6, 2).unwrap(), unit_corridor(3)).unwrap();
        let l = lifted_map(&map, 0.0, 0).unwrap();
        let mut expected = DMatrix::zeros(3, 12);
        for d in 0..3 {
            expected[(d, 2 * d)] = 1.0;
        }
        assert!((l - expected).amax() < 1e-12);
    }

    #[test]
    fn lifted_map_derivatives_match_finite_differences() {
        let map = sample_map(3, 6, 4);
        let h = 1e-5;
        for k in 1..20 {
            let eps = k as f64 / 20.0;
            for n in 1..=2 {
                let fd = (lifted_map(&map, eps + h, n - 1).unwrap() - lifted_map(&map, eps - h, n - 1).unwrap())
                    / (2.0 * h);
                let exact = lifted_map(&map, eps, n).unwrap();
                let err = (fd - &exact).norm() / exact.norm().max(1.0);
                assert!(err < 1e-5, "n = {n}, eps = {eps}, err = {err}");
            }
        }
    }

    #[test]
    fn zero_parameters_follow_the_centerline() {
        let map = sample_map(3, 6, 3);
        let y = ParamPoint::zeros(&map.config);
        for n in 0..=2 {
            let q = traj_eval(&map, &y, 0.4, n).unwrap();
            assert_eq!(q, map.corridor.center_curve().eval(0.4, n).unwrap());
        }
    }

    #[test]
    fn unit_blocks_stay_inside() {
        let map = sample_map(3, 6, 4);
        let blocks = (0..4).map(|j| DVector::from_fn(6, |i, _| ((i + 2 * j) as f64).sin()).normalize()).collect();
        let y = ParamPoint::new(blocks);
        for k in 0..=200 {
            let eps = k as f64 / 200.0;
            let q = traj_eval(&map, &y, eps, 0).unwrap();
            let (inside, margin) = contains(&map.corridor, eps, &q).unwrap();
            assert!(inside, "eps {eps} margin {margin}");
        }
    }

    #[test]
    fn zero_leading_blocks_pin_the_start() {
        let map = sample_map(2, 4, 5);
        let mut y = ParamPoint::zeros(&map.config);
        for j in 2..5 {
            y.blocks[j] = DVector::from_element(4, 0.5);
        }
        let c = map.corridor.center_curve();
        assert!((traj_eval(&map, &y, 0.0, 0).unwrap() - c.eval(0.0, 0).unwrap()).amax() < 1e-14);
        assert!((traj_eval(&map, &y, 0.0, 1).unwrap() - c.eval(0.0, 1).unwrap()).amax() < 1e-12);
    }

    #[test]
    fn flatten_roundtrip_is_block_major() {
        let cfg = LiftConfig::new(1, 2, 3).unwrap();
        let y = ParamPoint::new(vec![v(&[1.0, 2.0]), v(&[3.0, 4.0]), v(&[5.0, 6.0])]);
        let flat = y.flatten();
        assert_eq!(flat, v(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        assert_eq!(ParamPoint::from_flat(&cfg, &flat).unwrap(), y);
        assert!(ParamPoint::from_flat(&cfg, &v(&[1.0])).is_err());
    }

    #[test]
    fn feasible_radius_cases() {
        let map = sample_map(2, 4, 1);
        let eps = 0.3;
        let sample = interpolate_corridor(&map.corridor, eps, 0).unwrap();
        assert!((feasible_radius(&map, eps, &sample.center).unwrap() - 1.0).abs() < 1e-12);

        let boundary = &sample.center + v(&[sample.inv_axes[0], 0.0]);
        assert!(feasible_radius(&map, eps, &boundary).unwrap() < 1e-5);

        let inner = &sample.center + v(&[0.6 * sample.inv_axes[0], 0.0]);
        assert!((feasible_radius(&map, eps, &inner).unwrap() - 0.8).abs() < 1e-10);

        let outside = &sample.center + v(&[0.0, 1.5 * sample.inv_axes[1]]);
        assert!(matches!(feasible_radius(&map, eps, &outside), Err(Error::InfeasibleConfiguration { .. })));
        assert!(feasible_radius(&sample_map(2, 4, 2), eps, &sample.center).is_err());
    }
}
