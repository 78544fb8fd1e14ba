//! Bernstein bases and Bézier curves over ε ∈ [0, 1].

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const RANK_TOL: f64 = 1e-10;

fn check_parameter(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::ParameterOutOfRange(t));
    }
    Ok(())
}

/// Bernstein basis of the given degree at `t`, built by the de Casteljau
/// recurrence so every weight stays nonnegative.
pub fn bernstein(degree: usize, t: f64) -> Vec<f64> {
    let mut b = vec![0.0; degree + 1];
    b[0] = 1.0;
    let s = 1.0 - t;
    for k in 1..=degree {
        for j in (1..=k).rev() {
            b[j] = s * b[j] + t * b[j - 1];
        }
        b[0] *= s;
    }
    b
}

/// `n`-th derivative of the Bernstein basis:
/// `B⁽ⁿ⁾_{i,d} = d!/(d−n)! Σ_k (−1)^{n−k} C(n,k) B_{i−k,d−n}`.
pub fn bernstein_derivative(degree: usize, t: f64, n: usize) -> Vec<f64> {
    if n == 0 {
        return bernstein(degree, t);
    }
    let mut out = vec![0.0; degree + 1];
    if n > degree {
        return out;
    }
    let lower = bernstein(degree - n, t);
    let falling: f64 = ((degree - n + 1)..=degree).map(|k| k as f64).product();
    let mut binom = 1.0;
    for k in 0..=n {
        let sign = if (n - k).is_multiple_of(2) { 1.0 } else { -1.0 };
        for (j, w) in lower.iter().enumerate() {
            out[j + k] += sign * binom * w;
        }
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    for v in &mut out {
        *v *= falling;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BezierCurve {
    control_points: Vec<DVector<f64>>,
}

impl BezierCurve {
    pub fn new(control_points: Vec<DVector<f64>>) -> Result<Self> {
        if control_points.len() < 2 {
            return Err(Error::InvalidArgument("a Bézier curve needs at least two control points".into()));
        }
        let dim = control_points[0].len();
        if dim == 0 || control_points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("control points must share one nonzero dimension".into()));
        }
        if control_points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite);
        }
        Ok(Self { control_points })
    }

    pub fn control_points(&self) -> &[DVector<f64>] {
        &self.control_points
    }

    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.control_points[0].len()
    }

    /// `n`-th derivative at `t`: the control polygon is differenced `n` times
    /// (with the degree-drop factors) and then evaluated by de Casteljau.
    pub fn eval(&self, t: f64, n: usize) -> Result<DVector<f64>> {
        check_parameter(t)?;
        let d = self.degree();
        if n > d {
            return Ok(DVector::zeros(self.dim()));
        }
        let mut pts = self.control_points.clone();
        for k in 0..n {
            let factor = (d - k) as f64;
            pts = pts.windows(2).map(|w| (&w[1] - &w[0]) * factor).collect();
        }
        let s = 1.0 - t;
        let m = pts.len();
        for level in 1..m {
            for j in 0..(m - level) {
                let next = &pts[j] * s + &pts[j + 1] * t;
                pts[j] = next;
            }
        }
        Ok(pts.swap_remove(0))
    }

    /// Arc length by summing chords over `segments` uniform pieces.
    pub fn arc_length(&self, segments: usize) -> f64 {
        let segments = segments.max(1);
        let pts: Vec<DVector<f64>> =
            (0..=segments).map(|k| self.eval(k as f64 / segments as f64, 0).expect("grid inside [0,1]")).collect();
        pts.windows(2).map(|w| (&w[1] - &w[0]).norm()).sum()
    }
}

/// Cumulative chord-length fractions of a polyline; uniform when it has zero length.
pub fn arc_length_fractions(points: &[DVector<f64>]) -> Vec<f64> {
    let mut cumulative = vec![0.0];
    for w in points.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (&w[1] - &w[0]).norm());
    }
    let total = *cumulative.last().unwrap();
    let m = points.len();
    if total > 0.0 {
        cumulative.iter().map(|c| c / total).collect()
    } else if m > 1 {
        (0..m).map(|k| k as f64 / (m - 1) as f64).collect()
    } else {
        vec![0.0]
    }
}

/// Point at arc-length fraction `s` along a polyline.
pub fn polyline_point(points: &[DVector<f64>], fractions: &[f64], s: f64) -> DVector<f64> {
    let s = s.clamp(0.0, 1.0);
    let k = fractions.partition_point(|&f| f <= s).clamp(1, points.len() - 1);
    let (f0, f1) = (fractions[k - 1], fractions[k]);
    let w = if f1 > f0 { (s - f0) / (f1 - f0) } else { 0.0 };
    &points[k - 1] * (1.0 - w) + &points[k] * w
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFit {
    pub curve: BezierCurve,
    /// Parameter assigned to each waypoint (its arc-length fraction).
    pub params: Vec<f64>,
    /// Set when the least-squares system was rank deficient and the control
    /// points were instead spread uniformly along the waypoint polyline.
    pub fallback: bool,
}

/// Least-squares Bézier fit with `n_ctrl` control points, each waypoint
/// matched at its arc-length fraction. With `clamp_ends` the first two and
/// last two control points are pinned to the end waypoints, which zeroes the
/// end velocities.
pub fn fit_reference(waypoints: &[DVector<f64>], n_ctrl: usize, clamp_ends: bool) -> Result<ReferenceFit> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidArgument("at least two waypoints are required".into()));
    }
    let dim = waypoints[0].len();
    if dim == 0 || waypoints.iter().any(|w| w.len() != dim) {
        return Err(Error::Dimension("waypoints must share one nonzero dimension".into()));
    }
    let min_ctrl = if clamp_ends { 4 } else { 2 };
    if n_ctrl < min_ctrl {
        return Err(Error::InvalidArgument(format!("need at least {min_ctrl} control points, got {n_ctrl}")));
    }
    let degree = n_ctrl - 1;
    let params = arc_length_fractions(waypoints);
    let first = waypoints[0].clone();
    let last = waypoints[waypoints.len() - 1].clone();

    let pinned: Vec<(usize, DVector<f64>)> = if clamp_ends {
        vec![(0, first.clone()), (1, first.clone()), (degree - 1, last.clone()), (degree, last.clone())]
    } else {
        Vec::new()
    };
    let free: Vec<usize> = (0..=degree).filter(|j| !pinned.iter().any(|(k, _)| k == j)).collect();

    let fallback_curve = || {
        let mut ctrl: Vec<DVector<f64>> =
            (0..=degree).map(|j| polyline_point(waypoints, &params, j as f64 / degree as f64)).collect();
        for (k, v) in &pinned {
            ctrl[*k] = v.clone();
        }
        BezierCurve::new(ctrl)
    };

    let mut ctrl: Vec<DVector<f64>> = vec![DVector::zeros(dim); degree + 1];
    for (k, v) in &pinned {
        ctrl[*k] = v.clone();
    }
    if free.is_empty() {
        return Ok(ReferenceFit { curve: BezierCurve::new(ctrl)?, params, fallback: false });
    }

    let m = waypoints.len();
    let mut design = DMatrix::zeros(m, free.len());
    let mut rhs = DMatrix::zeros(m, dim);
    for (row, (&t, w)) in params.iter().zip(waypoints).enumerate() {
        let basis = bernstein(degree, t);
        for (col, &j) in free.iter().enumerate() {
            design[(row, col)] = basis[j];
        }
        let mut target = w.clone();
        for (k, v) in &pinned {
            target.axpy(-basis[*k], v, 1.0);
        }
        rhs.set_row(row, &target.transpose());
    }

    if m < free.len() {
        return Ok(ReferenceFit { curve: fallback_curve()?, params, fallback: true });
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return Ok(ReferenceFit { curve: fallback_curve()?, params, fallback: true });
    }
    let solution = svd.solve(&rhs, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for (row, &j) in free.iter().enumerate() {
        ctrl[j] = solution.row(row).transpose();
    }
    Ok(ReferenceFit { curve: BezierCurve::new(ctrl)?, params, fallback: false })
}
