//! Sampled derivative costs as block quadratics over the lifted parameters.
//!
//! For samples `ε_i` with weights `w_i`, `A_i = T⁻ⁿ L⁽ⁿ⁾(ε_i)` and
//! `b_i = T⁻ⁿ q̃⁽ⁿ⁾(ε_i)`, the cost
//! `Σ_i w_i ‖A_i y + b_i‖² + ρ‖y‖²` equals `½ yᵀQy + gᵀy + constant` with
//! `Q = 2Σ w_i A_iᵀA_i + 2ρI`, `g = 2Σ w_i A_iᵀb_i`, `constant = Σ w_i ‖b_i‖²`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::eig_decompose;
use crate::lifting::{lifted_map, traj_eval, LiftedMap, ParamPoint, MAX_DERIVATIVE};
use crate::orth::OrthTrpProblem;
use crate::{Error, Result};

/// Smallest eigenvalue accepted for a diagonal block after regularization.
pub const MIN_BLOCK_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub order: usize,
    pub samples: Vec<f64>,
    pub weights: Vec<f64>,
    pub horizon: f64,
    pub rho: f64,
}

impl CostSpec {
    /// `n_samples` uniform samples on `[0, 1]` with weights `1/n_samples`.
    pub fn uniform(order: usize, n_samples: usize, horizon: f64, rho: f64) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::InvalidArgument("at least two samples are needed".into()));
        }
        let samples = (0..n_samples).map(|k| k as f64 / (n_samples - 1) as f64).collect();
        let spec = Self { order, samples, weights: vec![1.0 / n_samples as f64; n_samples], horizon, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > MAX_DERIVATIVE {
            return Err(Error::DerivativeOrder { order: self.order, max: MAX_DERIVATIVE });
        }
        if self.samples.is_empty() || self.samples.len() != self.weights.len() {
            return Err(Error::Dimension("samples and weights must be non-empty and of equal length".into()));
        }
        if let Some(&eps) = self.samples.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::ParameterOutOfRange(eps));
        }
        if !self.weights.iter().all(|&w| w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {}", self.rho)));
        }
        Ok(())
    }

    fn time_scale(&self) -> f64 {
        self.horizon.powi(-(self.order as i32))
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }
}

/// The unregularized sampled cost: `2Σ wAᵀA`, `2Σ wAᵀb` and `Σ w‖b‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCost {
    pub gram: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub block_dim: usize,
}

impl SampledCost {
    pub fn assemble(map: &LiftedMap, spec: &CostSpec) -> Result<Self> {
        spec.validate()?;
        let dim = map.config.param_dim();
        let scale = spec.time_scale();
        let mut gram = DMatrix::zeros(dim, dim);
        let mut linear = DVector::zeros(dim);
        let mut constant = 0.0;
        for (&eps, &w) in spec.samples.iter().zip(&spec.weights) {
            let a = lifted_map(map, eps, spec.order)? * scale;
            let b = map.corridor.center_curve().eval(eps, spec.order)? * scale;
            gram.gemm_tr(2.0 * w, &a, &a, 1.0);
            linear.gemv_tr(2.0 * w, &a, &b, 1.0);
            constant += w * b.norm_squared();
        }
        // Exact symmetry, so Q_ij = Q_jiᵀ holds bitwise after blocking.
        gram.fill_upper_triangle_with_lower_triangle();
        Ok(Self { gram, linear, constant, block_dim: map.config.ny })
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.gram.diagonal().mean()
    }

    /// Multiplies the whole cost by `factor`; the minimizer is unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            gram: &self.gram * factor,
            linear: &self.linear * factor,
            constant: self.constant * factor,
            block_dim: self.block_dim,
        }
    }

    /// Adds `2ρI` and splits into blocks, checking every diagonal block.
    pub fn regularize(&self, rho: f64) -> Result<QuadraticModel> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be nonnegative, got {rho}")));
        }
        let d = self.block_dim;
        let nb = self.gram.nrows() / d;
        let mut q = self.gram.clone();
        for k in 0..q.nrows() {
            q[(k, k)] += 2.0 * rho;
        }
        for block in 0..nb {
            let diag = q.view((block * d, block * d), (d, d)).into_owned();
            let min_eigenvalue = eig_decompose(&diag)?.min_eigenvalue();
            if min_eigenvalue < MIN_BLOCK_EIGENVALUE {
                return Err(Error::InsufficientRegularization { block, min_eigenvalue });
            }
        }
        let q_blocks = (0..nb)
            .map(|i| (0..nb).map(|j| q.view((i * d, j * d), (d, d)).into_owned()).collect())
            .collect();
        let g_blocks = (0..nb).map(|i| self.linear.rows(i * d, d).into_owned()).collect();
        let problem = OrthTrpProblem::new(q_blocks, g_blocks, BTreeMap::new())?;
        Ok(QuadraticModel { problem, constant: self.constant })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub problem: OrthTrpProblem,
    pub constant: f64,
}

impl QuadraticModel {
    /// `½ yᵀQy + gᵀy + constant`.
    pub fn value(&self, y: &ParamPoint) -> f64 {
        self.problem.objective(&y.blocks) + self.constant
    }
}

pub fn build_quadratic(map: &LiftedMap, spec: &CostSpec) -> Result<QuadraticModel> {
    SampledCost::assemble(map, spec)?.regularize(spec.rho)
}

/// Direct evaluation of `Σ_i w_i ‖T⁻ⁿ q⁽ⁿ⁾(ε_i)‖² + ρ‖y‖²`.
pub fn objective_value(map: &LiftedMap, spec: &CostSpec, y: &ParamPoint) -> Result<f64> {
    spec.validate()?;
    let scale = spec.time_scale();
    let mut value = spec.rho * y.flatten().norm_squared();
    for (&eps, &w) in spec.samples.iter().zip(&spec.weights) {
        value += w * (traj_eval(map, y, eps, spec.order)? * scale).norm_squared();
    }
    Ok(value)
}

/// Mean over the samples of `‖q̈(t_i)‖`, with `q̈ = T⁻² d²q/dε²`.
pub fn average_acceleration(map: &LiftedMap, spec: &CostSpec, y: &ParamPoint) -> Result<f64> {
    spec.validate()?;
    let scale = spec.horizon.powi(-2);
    let mut total = 0.0;
    for &eps in &spec.samples {
        total += traj_eval(map, y, eps, 2)?.norm() * scale;
    }
    Ok(total / spec.samples.len() as f64)
}
