//! Time-varying axis-aligned ellipsoidal corridors.
//!
//! A cross-section at ε is `{q : Σ_d u_d(ε) (q − q̃(ε))_d² ≤ 1}`, i.e.
//! `‖C_ε (q − q̃_ε)‖² ≤ 1` with `C_ε = diag(√u)`. The centerline `q̃` is a
//! Bézier curve; the semi-axes `s_d = u_d^{-1/2}` (the diagonal of `C_ε⁻¹`) are
//! a second Bézier curve fitted through per-knot ellipsoids, so `C_ε⁻¹` and its
//! ε-derivatives are plain Bézier derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bezier::{bernstein, BezierCurve};
use crate::simplex::{LinearProgram, Relation};
use crate::{Error, Result};

/// Points of the ε grid used to validate axis positivity and exclusion.
pub const VALIDATION_GRID: usize = 1000;
pub const MAX_DERIVATIVE: usize = 2;
const INSIDE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    #[serde(with = "crate::serde_vec")]
    pub center: DVector<f64>,
    /// `u_d = 1 / r_d²`.
    #[serde(rename = "u", with = "crate::serde_vec")]
    pub inv_radii_sq: DVector<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, inv_radii_sq: DVector<f64>) -> Result<Self> {
        if center.len() != inv_radii_sq.len() || center.is_empty() {
            return Err(Error::Dimension("center and u must have the same nonzero length".into()));
        }
        if !inv_radii_sq.iter().all(|&u| u > 0.0 && u.is_finite()) {
            return Err(Error::InvalidArgument("inverse squared radii must be positive and finite".into()));
        }
        Ok(Self { center, inv_radii_sq })
    }

    /// `Σ_d u_d (q − center)_d²`; at most 1 inside.
    pub fn membership(&self, q: &DVector<f64>) -> f64 {
        weighted_sq(&self.inv_radii_sq, q, &self.center)
    }

    pub fn radii(&self) -> DVector<f64> {
        self.inv_radii_sq.map(|u| 1.0 / u.sqrt())
    }
}

fn weighted_sq(u: &DVector<f64>, q: &DVector<f64>, c: &DVector<f64>) -> f64 {
    u.iter().zip(q.iter().zip(c.iter())).map(|(u, (q, c))| u * (q - c) * (q - c)).sum()
}

/// Largest axis-aligned ellipsoid around `center` (in the sense of smallest
/// `Σ_d u_d`) whose interior holds none of the collision points:
///
/// ```text
/// minimize Σ_d u_d  s.t.  Σ_d u_d (p − center)_d² ≥ 1 for every point p,  u_d ≥ u_min
/// ```
///
/// With `v = u − u_min` the program has as many variables as dimensions but one
/// row per point, so the simplex runs on its dual (one row per dimension) and
/// reads `v` back from the dual's multipliers.
pub fn fit_ellipsoid(center: &DVector<f64>, collision_points: &[DVector<f64>], u_min: f64) -> Result<Ellipsoid> {
    if !(u_min > 0.0 && u_min.is_finite()) {
        return Err(Error::InvalidArgument(format!("u_min must be positive, got {u_min}")));
    }
    let dim = center.len();
    if dim == 0 {
        return Err(Error::Dimension("empty center".into()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(collision_points.len());
    for p in collision_points {
        if p.len() != dim {
            return Err(Error::Dimension(format!("collision point has length {}, expected {dim}", p.len())));
        }
        let a: Vec<f64> = p.iter().zip(center.iter()).map(|(p, c)| (p - c) * (p - c)).collect();
        if a.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateCollisionPoint);
        }
        rows.push(a);
    }

    // Only points that the floor alone does not already exclude enter the dual.
    let active: Vec<(Vec<f64>, f64)> = rows
        .iter()
        .filter_map(|a| {
            let b = 1.0 - u_min * a.iter().sum::<f64>();
            (b > 0.0).then(|| (a.clone(), b))
        })
        .collect();

    let mut u = DVector::from_element(dim, u_min);
    if !active.is_empty() {
        let mut dual = LinearProgram::new(active.iter().map(|(_, b)| -b).collect());
        for d in 0..dim {
            dual.constrain(active.iter().map(|(a, _)| a[d]).collect(), Relation::Le, 1.0);
        }
        let sol = dual.solve()?;
        for d in 0..dim {
            u[d] += (-sol.duals[d]).max(0.0);
        }
    }

    // Rounding repair: scale up until every point is on or outside the boundary.
    let worst = rows
        .iter()
        .map(|a| a.iter().zip(u.iter()).map(|(a, u)| a * u).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if worst < 1.0 {
        u /= worst;
    }
    Ellipsoid::new(center.clone(), u)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub eps: f64,
    #[serde(with = "crate::serde_vec")]
    pub center: DVector<f64>,
    #[serde(with = "crate::serde_vec")]
    pub u: DVector<f64>,
}

impl Knot {
    pub fn new(eps: f64, ellipsoid: Ellipsoid) -> Self {
        Self { eps, center: ellipsoid.center, u: ellipsoid.inv_radii_sq }
    }

    pub fn ellipsoid(&self) -> Ellipsoid {
        Ellipsoid { center: self.center.clone(), inv_radii_sq: self.u.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorridorSpecJson", into = "CorridorSpecJson")]
pub struct CorridorSpec {
    knots: Vec<Knot>,
    center_curve: BezierCurve,
    /// Bézier over the semi-axes `s_d = u_d^{-1/2}`.
    axes_curve: BezierCurve,
}

#[derive(Serialize, Deserialize)]
struct CorridorSpecJson {
    knots: Vec<Knot>,
    center_ctrl: Vec<Vec<f64>>,
    axes_ctrl: Vec<Vec<f64>>,
}

impl TryFrom<CorridorSpecJson> for CorridorSpec {
    type Error = Error;

    fn try_from(raw: CorridorSpecJson) -> Result<Self> {
        let to_curve = |pts: Vec<Vec<f64>>| BezierCurve::new(pts.into_iter().map(DVector::from_vec).collect());
        CorridorSpec::new(raw.knots, to_curve(raw.center_ctrl)?, to_curve(raw.axes_ctrl)?)
    }
}

impl From<CorridorSpec> for CorridorSpecJson {
    fn from(spec: CorridorSpec) -> Self {
        let to_rows = |c: &BezierCurve| c.control_points().iter().map(|p| p.as_slice().to_vec()).collect();
        Self { center_ctrl: to_rows(&spec.center_curve), axes_ctrl: to_rows(&spec.axes_curve), knots: spec.knots }
    }
}

/// Derivative of the corridor geometry at one ε: the centerline, the diagonal
/// of `C_ε` and the diagonal of `C_ε⁻¹`, each differentiated `n` times.
#[derive(Debug, Clone, PartialEq)]
pub struct CorridorSample {
    pub center: DVector<f64>,
    pub axes: DVector<f64>,
    pub inv_axes: DVector<f64>,
}

impl CorridorSpec {
    pub fn new(knots: Vec<Knot>, center_curve: BezierCurve, axes_curve: BezierCurve) -> Result<Self> {
        let dim = center_curve.dim();
        if axes_curve.dim() != dim {
            return Err(Error::Dimension(format!(
                "axes curve has dimension {}, centerline has {dim}",
                axes_curve.dim()
            )));
        }
        if knots.len() < 2 {
            return Err(Error::InvalidArgument("a corridor needs at least two knots".into()));
        }
        for k in &knots {
            if k.center.len() != dim || k.u.len() != dim {
                return Err(Error::Dimension("knot dimension differs from the centerline".into()));
            }
            if !k.u.iter().all(|&u| u > 0.0 && u.is_finite()) {
                return Err(Error::InvalidArgument(format!("knot at eps = {} has non-positive u", k.eps)));
            }
        }
        if knots.windows(2).any(|w| !(w[1].eps > w[0].eps)) {
            return Err(Error::InvalidArgument("knots must be strictly increasing in eps".into()));
        }
        let (first, last) = (knots[0].eps, knots[knots.len() - 1].eps);
        if first.abs() > 1e-12 || (last - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("knots must cover [0, 1], got [{first}, {last}]")));
        }
        let spec = Self { knots, center_curve, axes_curve };
        for k in 0..VALIDATION_GRID {
            let eps = k as f64 / (VALIDATION_GRID - 1) as f64;
            let s = spec.axes_curve.eval(eps, 0)?;
            if let Some((axis, &value)) = s.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(Error::NonPositiveAxis { axis, eps, value });
            }
        }
        Ok(spec)
    }

    /// Fits the semi-axis curve by least squares through the knot values
    /// `s_d = u_d^{-1/2}` using `axes_ctrl` control points (at most one per
    /// knot). Control points are floored at a small fraction of the smallest
    /// knot semi-axis so the curve stays strictly positive.
    pub fn from_knots(center_curve: BezierCurve, knots: Vec<Knot>, axes_ctrl: usize) -> Result<Self> {
        let dim = center_curve.dim();
        if axes_ctrl < 2 || axes_ctrl > knots.len() {
            return Err(Error::InvalidArgument(format!(
                "axes_ctrl must lie in [2, {}], got {axes_ctrl}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| k.u.len() != dim || !k.u.iter().all(|&u| u > 0.0)) {
            return Err(Error::InvalidArgument("knots must carry positive u of the centerline dimension".into()));
        }
        let degree = axes_ctrl - 1;
        let m = knots.len();
        let mut design = DMatrix::zeros(m, axes_ctrl);
        let mut rhs = DMatrix::zeros(m, dim);
        let mut smallest = f64::INFINITY;
        for (row, k) in knots.iter().enumerate() {
            let b = bernstein(degree, k.eps.clamp(0.0, 1.0));
            for (col, w) in b.iter().enumerate() {
                design[(row, col)] = *w;
            }
            for d in 0..dim {
                let s = 1.0 / k.u[d].sqrt();
                rhs[(row, d)] = s;
                smallest = smallest.min(s);
            }
        }
        let solution = design
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let floor = 0.05 * smallest;
        let ctrl = (0..axes_ctrl)
            .map(|j| DVector::from_iterator(dim, (0..dim).map(|d| solution[(j, d)].max(floor))))
            .collect();
        Self::new(knots, center_curve, BezierCurve::new(ctrl)?)
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn center_curve(&self) -> &BezierCurve {
        &self.center_curve
    }

    pub fn axes_curve(&self) -> &BezierCurve {
        &self.axes_curve
    }

    pub fn dim(&self) -> usize {
        self.center_curve.dim()
    }

    /// Smallest membership value of any point over a uniform ε grid.
    pub fn min_exclusion(&self, points: &[DVector<f64>], grid: usize) -> Result<f64> {
        let mut worst = f64::INFINITY;
        let grid = grid.max(2);
        for k in 0..grid {
            let eps = k as f64 / (grid - 1) as f64;
            let c = self.center_curve.eval(eps, 0)?;
            let u = self.axes_curve.eval(eps, 0)?.map(|s| 1.0 / (s * s));
            for p in points {
                worst = worst.min(weighted_sq(&u, p, &c));
            }
        }
        Ok(worst)
    }

    /// Scales every semi-axis by the largest common factor `κ ≤ 1` that keeps
    /// all points on or outside the corridor on the ε grid. Returns `κ`.
    pub fn shrink_to_exclude(&mut self, points: &[DVector<f64>], grid: usize) -> Result<f64> {
        let worst = self.min_exclusion(points, grid)?;
        if worst >= 1.0 {
            return Ok(1.0);
        }
        let factor = worst.sqrt() * (1.0 - 1e-12);
        if !(factor > 0.0) {
            return Err(Error::NonPositiveAxis { axis: 0, eps: f64::NAN, value: factor });
        }
        let ctrl = self.axes_curve.control_points().iter().map(|p| p * factor).collect();
        self.axes_curve = BezierCurve::new(ctrl)?;
        Ok(factor)
    }
}

/// Centerline, `C_ε` and `C_ε⁻¹` differentiated `n ≤ 2` times at ε.
pub fn interpolate_corridor(spec: &CorridorSpec, eps: f64, n: usize) -> Result<CorridorSample> {
    if n > MAX_DERIVATIVE {
        return Err(Error::DerivativeOrder { order: n, max: MAX_DERIVATIVE });
    }
    let center = spec.center_curve.eval(eps, n)?;
    let s = spec.axes_curve.eval(eps, 0)?;
    let inv_axes = spec.axes_curve.eval(eps, n)?;
    let axes = match n {
        0 => s.map(|s| 1.0 / s),
        1 => inv_axes.zip_map(&s, |ds, s| -ds / (s * s)),
        _ => {
            let ds = spec.axes_curve.eval(eps, 1)?;
            DVector::from_iterator(
                s.len(),
                (0..s.len()).map(|d| 2.0 * ds[d] * ds[d] / s[d].powi(3) - inv_axes[d] / (s[d] * s[d])),
            )
        }
    };
    Ok(CorridorSample { center, axes, inv_axes })
}

/// Membership test at ε: `margin = 1 − Σ_d u_d(ε)(q − q̃_ε)_d²`, inside when
/// `margin ≥ −1e-9`.
pub fn contains(spec: &CorridorSpec, eps: f64, q: &DVector<f64>) -> Result<(bool, f64)> {
    if q.len() != spec.dim() {
        return Err(Error::Dimension(format!("q has length {}, corridor is {}-dimensional", q.len(), spec.dim())));
    }
    let c = spec.center_curve.eval(eps, 0)?;
    let u = spec.axes_curve.eval(eps, 0)?.map(|s| 1.0 / (s * s));
    let margin = 1.0 - weighted_sq(&u, q, &c);
    Ok((margin >= -INSIDE_TOL, margin))
}
