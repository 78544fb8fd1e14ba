//! The classical trust-region subproblem
//!
//! ```text
//! minimize ½ xᵀQx + gᵀx   subject to ‖x‖ ≤ Δ
//! ```
//!
//! for positive definite `Q`. Stationary points form the optimal curve
//! `x(λ) = −(Q + λI)⁻¹ g`, which runs from the unconstrained minimizer at
//! `λ = 0` to the origin as `λ → ∞`. With `Q = V diag(μ) Vᵀ` precomputed, every
//! evaluation along the curve is elementwise in the eigenbasis.
//!
//! The boundary multiplier is found from the reciprocal secular equation
//! `φ(λ) = 1/Δ − 1/‖x(λ)‖`, which is convex and decreasing on `λ ≥ 0`.
//! Newton steps from either side therefore land on the infeasible side of
//! the root, while the secant through a bracket lands on the feasible side.

use nalgebra::{DMatrix, DVector};

use crate::eigen::{check_symmetric, eig_decompose, EigenFactorization};
use crate::{Error, Result};

const MAX_SECULAR_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct TrpProblem {
    q: DMatrix<f64>,
    g: DVector<f64>,
    radius: f64,
}

impl TrpProblem {
    pub fn new(q: DMatrix<f64>, g: DVector<f64>, radius: f64) -> Result<Self> {
        check_symmetric(&q)?;
        if g.len() != q.nrows() {
            return Err(Error::Dimension(format!("g has length {}, Q is {}x{}", g.len(), q.nrows(), q.ncols())));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("trust radius must be positive, got {radius}")));
        }
        Ok(Self { q, g, radius })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.g.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrpSolution {
    pub x: DVector<f64>,
    pub lambda: f64,
    pub boundary_active: bool,
}

fn check_pole(f: &EigenFactorization, lambda: f64) -> Result<()> {
    let pole = -f.min_eigenvalue();
    if lambda <= pole || lambda.is_nan() {
        return Err(Error::Pole { lambda, pole });
    }
    Ok(())
}

/// Point on the optimal curve, `x(λ) = −V (diag(μ) + λI)⁻¹ Vᵀ g`.
pub fn curve_point(f: &EigenFactorization, g: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if g.len() != f.dim() {
        return Err(Error::Dimension(format!("g has length {}, factorization is {}", g.len(), f.dim())));
    }
    check_pole(f, lambda)?;
    let alpha = f.project(g);
    Ok(curve_point_in_basis(f, &alpha, lambda))
}

fn curve_point_in_basis(f: &EigenFactorization, alpha: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let scaled = DVector::from_iterator(
        alpha.len(),
        alpha.iter().zip(f.eigenvalues().iter()).map(|(a, mu)| -a / (mu + lambda)),
    );
    f.eigenvectors() * scaled
}

/// `‖x(λ)‖²` and its derivative in `λ`, given `α = Vᵀg`.
pub fn curve_norm_sq(f: &EigenFactorization, alpha: &DVector<f64>, lambda: f64) -> Result<(f64, f64)> {
    if alpha.len() != f.dim() {
        return Err(Error::Dimension(format!("alpha has length {}, factorization is {}", alpha.len(), f.dim())));
    }
    check_pole(f, lambda)?;
    Ok(norm_sq_unchecked(f, alpha, lambda))
}

fn norm_sq_unchecked(f: &EigenFactorization, alpha: &DVector<f64>, lambda: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut derivative = 0.0;
    for (a, mu) in alpha.iter().zip(f.eigenvalues().iter()) {
        let inv = 1.0 / (mu + lambda);
        let t = a * a * inv * inv;
        value += t;
        derivative -= 2.0 * t * inv;
    }
    (value, derivative)
}

/// Reciprocal secular function and its slope, plus the curve norm.
struct Secular<'a> {
    f: &'a EigenFactorization,
    alpha: DVector<f64>,
    radius: f64,
}

struct SecularEval {
    phi: f64,
    slope: f64,
    norm: f64,
}

impl Secular<'_> {
    fn eval(&self, lambda: f64) -> SecularEval {
        let (v, dv) = norm_sq_unchecked(self.f, &self.alpha, lambda);
        let norm = v.sqrt();
        SecularEval { phi: 1.0 / self.radius - 1.0 / norm, slope: 0.5 * dv / (v * norm), norm }
    }

    /// Upper end of the initial bracket, where `‖x(λ)‖ ≤ ‖g‖/(μ_min + λ) ≤ Δ`.
    fn upper_bound(&self) -> f64 {
        (self.alpha.norm() / self.radius - self.f.min_eigenvalue()).max(0.0)
    }

    fn newton(&self, lambda: f64, e: &SecularEval) -> f64 {
        lambda - e.phi / e.slope
    }
}

fn require_positive_definite(f: &EigenFactorization) -> Result<()> {
    let mu_min = f.min_eigenvalue();
    let scale = f.max_eigenvalue().abs().max(f64::MIN_POSITIVE);
    if !(mu_min > scale * f64::EPSILON * f.dim() as f64) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: mu_min });
    }
    Ok(())
}

/// Solves the trust-region subproblem for positive definite `Q`.
///
/// `tol` bounds the relative boundary residual `|‖x‖ − Δ| / Δ` of a boundary
/// solution; in practice the Newton iteration runs to rounding level.
pub fn trp_solve(p: &TrpProblem, tol: f64) -> Result<TrpSolution> {
    let f = eig_decompose(&p.q)?;
    trp_solve_factored(&f, &p.g, p.radius, tol)
}

/// [`trp_solve`] with a precomputed eigendecomposition of `Q`.
pub fn trp_solve_factored(f: &EigenFactorization, g: &DVector<f64>, radius: f64, tol: f64) -> Result<TrpSolution> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1e-2], got {tol}")));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("trust radius must be positive, got {radius}")));
    }
    if g.len() != f.dim() {
        return Err(Error::Dimension(format!("g has length {}, factorization is {}", g.len(), f.dim())));
    }
    require_positive_definite(f)?;

    let secular = Secular { f, alpha: f.project(g), radius };
    let (v0, _) = norm_sq_unchecked(f, &secular.alpha, 0.0);
    let norm0 = v0.sqrt();
    if norm0 <= radius {
        let x = curve_point_in_basis(f, &secular.alpha, 0.0);
        let boundary_active = (radius - norm0) <= tol * radius;
        return Ok(TrpSolution { x, lambda: 0.0, boundary_active });
    }

    let mut lo = 0.0;
    let mut hi = secular.upper_bound();
    let mut lambda = 0.0;
    let mut e = secular.eval(lambda);
    for _ in 0..MAX_SECULAR_ITERATIONS {
        if (e.norm - radius).abs() <= 1e-15 * radius {
            break;
        }
        if e.phi > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let mut next = secular.newton(lambda, &e);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= 4.0 * f64::EPSILON * lambda.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        lambda = next;
        e = secular.eval(lambda);
    }

    let residual = (e.norm - radius).abs() / radius;
    if residual > tol {
        return Err(Error::IterationLimit { lambda, residual });
    }
    let mut x = curve_point_in_basis(f, &secular.alpha, lambda);
    let norm = x.norm();
    if norm > radius {
        x *= radius / norm;
    }
    Ok(TrpSolution { x, lambda, boundary_active: true })
}

/// One inexact block update on the unit ball.
///
/// Performs at most one safeguarded Newton update of the multiplier starting
/// from `lambda_prev` (or from the bracket midpoint when there is no prior
/// estimate) and returns the matching point on the optimal curve. When the
/// Newton point overshoots the ball, the multiplier is moved to the secant
/// root between it and the feasible end of the bracket, which lies on the
/// feasible side because the secular function is convex.
pub fn trp_step(
    f: &EigenFactorization,
    c: &DVector<f64>,
    lambda_prev: Option<f64>,
) -> Result<(DVector<f64>, f64)> {
    if c.len() != f.dim() {
        return Err(Error::Dimension(format!("c has length {}, factorization is {}", c.len(), f.dim())));
    }
    require_positive_definite(f)?;

    let secular = Secular { f, alpha: f.project(c), radius: 1.0 };
    let (v0, _) = norm_sq_unchecked(f, &secular.alpha, 0.0);
    if v0.sqrt() <= 1.0 {
        return Ok((curve_point_in_basis(f, &secular.alpha, 0.0), 0.0));
    }

    let mut lo = 0.0;
    let mut hi = secular.upper_bound();
    let seed = match lambda_prev {
        Some(l) if l.is_finite() => l.clamp(lo, hi),
        _ => 0.5 * (lo + hi),
    };
    let e = secular.eval(seed);
    if e.phi == 0.0 {
        return Ok((curve_point_in_basis(f, &secular.alpha, seed), seed));
    }
    if e.phi > 0.0 {
        lo = seed;
    } else {
        hi = seed;
    }
    let mut lambda = secular.newton(seed, &e);
    if !(lambda >= lo && lambda <= hi) {
        lambda = 0.5 * (lo + hi);
    }

    let e_new = secular.eval(lambda);
    if e_new.norm > 1.0 {
        lo = lambda;
        let e_hi = secular.eval(hi);
        let denom = e_hi.phi - e_new.phi;
        let mut secant = if denom < 0.0 { lo - e_new.phi * (hi - lo) / denom } else { hi };
        if !(secant >= lo && secant <= hi) || secular.eval(secant).norm > 1.0 + 1e-12 {
            secant = hi;
        }
        lambda = secant;
    }
    Ok((curve_point_in_basis(f, &secular.alpha, lambda), lambda))
}
