//! Cyclic Jacobi eigendecomposition for small dense symmetric matrices.
//!
//! The blocks handled by the solver are tiny (6×6 in the benchmark), so the
//! plain cyclic-by-rows Jacobi method is both accurate and fast enough.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 30;
const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFactorization {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl EigenFactorization {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `V diag(μ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let scaled = v * DMatrix::from_diagonal(&self.eigenvalues);
        scaled * v.transpose()
    }

    /// Coordinates of `g` in the eigenbasis, `Vᵀ g`.
    pub fn project(&self, g: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(g)
    }
}

/// Largest absolute difference between `a[i, j]` and `a[j, i]`.
pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scale = a.amax().max(1.0);
    let asymmetry = max_asymmetry(a);
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(())
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Iterates until the off-diagonal Frobenius norm drops below `1e-12` times the
/// Frobenius norm of the input, for at most 30 sweeps. Eigenvalues come back in
/// ascending order.
pub fn eig_decompose(q: &DMatrix<f64>) -> Result<EigenFactorization> {
    check_symmetric(q)?;
    let n = q.nrows();
    // Work on the exactly symmetric part so tiny input asymmetry can't bias the rotations.
    let mut a = (q + q.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let threshold = OFF_DIAGONAL_TOL * a.norm();

    let mut converged = off_diagonal_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNotConverged { sweeps, off_norm: off_diagonal_norm(&a) });
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[(p, r)];
                if apr == 0.0 {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = c * akp - s * akr;
                    a[(k, r)] = s * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = c * apk - s * ark;
                    a[(r, k)] = s * apk + c * ark;
                }
                a[(p, r)] = 0.0;
                a[(r, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkr = v[(k, r)];
                    v[(k, p)] = c * vkp - s * vkr;
                    v[(k, r)] = s * vkp + c * vkr;
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &v.column(src));
    }
    Ok(EigenFactorization { eigenvalues, eigenvectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthogonality_error(v: &DMatrix<f64>) -> f64 {
        let n = v.nrows();
        (v * v.transpose() - DMatrix::<f64>::identity(n, n)).amax()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let f = eig_decompose(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.eigenvalues().as_slice(), &[1.0, 1.0, 1.0]);
        assert!(orthogonality_error(f.eigenvectors()) <= 1e-10);
    }

    #[test]
    fn diagonal_sorted_ascending_with_axis_vectors() {
        let q = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let f = eig_decompose(&q).unwrap();
        assert_eq!(f.eigenvalues().as_slice(), &[1.0, 4.0]);
        assert_eq!(f.eigenvectors()[(1, 0)].abs(), 1.0);
        assert_eq!(f.eigenvectors()[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = DMatrix::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
            let q = &m + m.transpose();
            let f = eig_decompose(&q).unwrap();
            let err = (f.reconstruct() - &q).norm() / q.norm();
            assert!(err < 1e-9, "reconstruction error {err}");
            assert!(orthogonality_error(f.eigenvectors()) <= 1e-10);
            let mu = f.eigenvalues();
            assert!(mu.as_slice().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_asymmetric_input() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eig_decompose(&q), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn rejects_non_finite_input() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert_eq!(eig_decompose(&q), Err(Error::NonFinite));
    }

    #[test]
    fn handles_repeated_and_zero_eigenvalues() {
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let f = eig_decompose(&q).unwrap();
        let mu = f.eigenvalues();
        assert!(mu[0].abs() < 1e-14);
        assert!((mu[1] - 2.0).abs() < 1e-14);
        assert!((mu[2] - 2.0).abs() < 1e-14);
    }
}
