//! Quadratic programs over a Cartesian product of unit balls
//!
//! ```text
//! minimize ½ yᵀQy + gᵀy   subject to ‖y_j‖ ≤ 1 for every block j
//! ```
//!
//! solved by Gauss–Seidel block coordinate descent. With all other blocks
//! held fixed, block `i` is a classical trust-region subproblem with matrix
//! `Q_ii` and linear term `c_i = g_i + Σ_{j≠i} Q_ij y_j`. Only `c_i` changes
//! between sweeps, so each `Q_ii` is eigendecomposed once up front.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_decompose, EigenFactorization};
use crate::trp::{trp_solve_factored, trp_step};
use crate::{Error, Result};

const STAGNATION_SWEEPS: usize = 5;
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthTrpProblem {
    n_blocks: usize,
    block_dim: usize,
    /// Row-major `n_blocks × n_blocks` grid.
    q_blocks: Vec<DMatrix<f64>>,
    g_blocks: Vec<DVector<f64>>,
    fixed: BTreeMap<usize, DVector<f64>>,
}

impl OrthTrpProblem {
    /// Builds a problem from a block grid, checking `Q_ij = Q_jiᵀ`, positive
    /// definite diagonal blocks and feasible fixed values.
    pub fn new(
        q_blocks: Vec<Vec<DMatrix<f64>>>,
        g_blocks: Vec<DVector<f64>>,
        fixed: BTreeMap<usize, DVector<f64>>,
    ) -> Result<Self> {
        let n_blocks = g_blocks.len();
        if n_blocks == 0 {
            return Err(Error::InvalidArgument("at least one block is required".into()));
        }
        let block_dim = g_blocks[0].len();
        if block_dim == 0 {
            return Err(Error::InvalidArgument("blocks must be non-empty".into()));
        }
        if q_blocks.len() != n_blocks || q_blocks.iter().any(|row| row.len() != n_blocks) {
            return Err(Error::Dimension(format!("Q must be a {n_blocks}x{n_blocks} grid of blocks")));
        }
        if g_blocks.iter().any(|g| g.len() != block_dim) {
            return Err(Error::Dimension("all g blocks must share one dimension".into()));
        }
        let mut flat = Vec::with_capacity(n_blocks * n_blocks);
        let mut scale = 1.0_f64;
        for row in q_blocks {
            for block in row {
                if block.nrows() != block_dim || block.ncols() != block_dim {
                    return Err(Error::Dimension(format!(
                        "Q block is {}x{}, expected {block_dim}x{block_dim}",
                        block.nrows(),
                        block.ncols()
                    )));
                }
                if block.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                scale = scale.max(block.amax());
                flat.push(block);
            }
        }
        let mut asymmetry = 0.0_f64;
        for i in 0..n_blocks {
            for j in i..n_blocks {
                let d = (&flat[i * n_blocks + j] - flat[j * n_blocks + i].transpose()).amax();
                asymmetry = asymmetry.max(d);
            }
        }
        if asymmetry > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        for i in 0..n_blocks {
            if flat[i * n_blocks + i].clone().cholesky().is_none() {
                return Err(Error::BlockNotPositiveDefinite { block: i });
            }
        }
        let mut problem = Self { n_blocks, block_dim, q_blocks: flat, g_blocks, fixed: BTreeMap::new() };
        for (block, value) in fixed {
            problem = problem.with_fixed_block(block, value)?;
        }
        Ok(problem)
    }

    /// Splits a dense symmetric matrix into `block_dim`-sized blocks.
    pub fn from_dense(q: &DMatrix<f64>, g: &DVector<f64>, block_dim: usize) -> Result<Self> {
        let n = q.nrows();
        if block_dim == 0 || !n.is_multiple_of(block_dim) || q.ncols() != n || g.len() != n {
            return Err(Error::Dimension(format!(
                "dense system of size {n} does not split into blocks of {block_dim}"
            )));
        }
        let nb = n / block_dim;
        let q_blocks = (0..nb)
            .map(|i| (0..nb).map(|j| q.view((i * block_dim, j * block_dim), (block_dim, block_dim)).into_owned()).collect())
            .collect();
        let g_blocks = (0..nb).map(|i| g.rows(i * block_dim, block_dim).into_owned()).collect();
        Self::new(q_blocks, g_blocks, BTreeMap::new())
    }

    /// Pins block `block` to `value`; the block is then skipped by the solver.
    pub fn with_fixed_block(mut self, block: usize, value: DVector<f64>) -> Result<Self> {
        if block >= self.n_blocks {
            return Err(Error::InvalidArgument(format!("block {block} out of range ({} blocks)", self.n_blocks)));
        }
        if value.len() != self.block_dim {
            return Err(Error::Dimension(format!("fixed value has length {}, expected {}", value.len(), self.block_dim)));
        }
        let norm = value.norm();
        if !(norm <= 1.0 + FEASIBILITY_SLACK) {
            return Err(Error::FixedBlockInfeasible { block, norm });
        }
        self.fixed.insert(block, value);
        Ok(self)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.n_blocks * self.block_dim
    }

    pub fn q_block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.q_blocks[i * self.n_blocks + j]
    }

    pub fn g_block(&self, i: usize) -> &DVector<f64> {
        &self.g_blocks[i]
    }

    pub fn fixed_blocks(&self) -> &BTreeMap<usize, DVector<f64>> {
        &self.fixed
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed.contains_key(&i)
    }

    pub fn free_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_blocks).filter(move |i| !self.is_fixed(*i))
    }

    /// Full block matrix and linear term, without any condensation.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let d = self.block_dim;
        let mut q = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for i in 0..self.n_blocks {
            g.rows_mut(i * d, d).copy_from(&self.g_blocks[i]);
            for j in 0..self.n_blocks {
                q.view_mut((i * d, j * d), (d, d)).copy_from(self.q_block(i, j));
            }
        }
        (q, g)
    }

    /// `½ yᵀQy + gᵀy` evaluated block by block.
    pub fn objective(&self, y_blocks: &[DVector<f64>]) -> f64 {
        let mut value = 0.0;
        for i in 0..self.n_blocks {
            let mut qy = DVector::zeros(self.block_dim);
            for j in 0..self.n_blocks {
                qy.gemv(1.0, self.q_block(i, j), &y_blocks[j], 1.0);
            }
            value += 0.5 * y_blocks[i].dot(&qy) + self.g_blocks[i].dot(&y_blocks[i]);
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockMode {
    /// One dual update per block visit.
    #[default]
    SingleDualStep,
    /// Solve every block subproblem to optimality.
    ExactBlockSolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    pub kkt_tol: f64,
    pub block_mode: BlockMode,
    pub objective_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_sweeps: 500, kkt_tol: 1e-8, block_mode: BlockMode::SingleDualStep, objective_tol: 1e-12 }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self { block_mode: BlockMode::ExactBlockSolve, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        if !(self.kkt_tol > 0.0) || !(self.objective_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        Ok(())
    }

    fn block_tol(&self) -> f64 {
        self.kkt_tol.min(1e-10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthTrpState {
    pub y_blocks: Vec<DVector<f64>>,
    /// `None` until the block has been visited.
    pub lambda_blocks: Vec<Option<f64>>,
    pub sweep_count: usize,
    pub objective: f64,
    pub kkt_residual: f64,
}

impl OrthTrpState {
    /// `y = 0` with fixed blocks at their pinned values and no dual estimates.
    pub fn initial(p: &OrthTrpProblem) -> Self {
        let y_blocks: Vec<DVector<f64>> = (0..p.n_blocks)
            .map(|i| p.fixed.get(&i).cloned().unwrap_or_else(|| DVector::zeros(p.block_dim)))
            .collect();
        let lambda_blocks = vec![None; p.n_blocks];
        let objective = p.objective(&y_blocks);
        let kkt = kkt_residual(p, &y_blocks, &lambda_blocks);
        Self { y_blocks, lambda_blocks, sweep_count: 0, objective, kkt_residual: kkt }
    }

    /// Block-major concatenation of all blocks.
    pub fn flatten(&self) -> DVector<f64> {
        let d = self.y_blocks.first().map_or(0, |b| b.len());
        let mut out = DVector::zeros(d * self.y_blocks.len());
        for (i, b) in self.y_blocks.iter().enumerate() {
            out.rows_mut(i * d, d).copy_from(b);
        }
        out
    }
}

/// One factorization per free block, indexed by block.
#[derive(Debug, Clone)]
pub struct BlockFactors {
    factors: Vec<Option<EigenFactorization>>,
}

impl BlockFactors {
    pub fn get(&self, i: usize) -> Option<&EigenFactorization> {
        self.factors.get(i).and_then(|f| f.as_ref())
    }

    pub fn len(&self) -> usize {
        self.factors.iter().filter(|f| f.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Eigendecomposes every free diagonal block.
pub fn precompute_factorizations(p: &OrthTrpProblem) -> Result<BlockFactors> {
    let mut factors = Vec::with_capacity(p.n_blocks);
    for i in 0..p.n_blocks {
        if p.is_fixed(i) {
            factors.push(None);
            continue;
        }
        let f = eig_decompose(p.q_block(i, i))?;
        if !(f.min_eigenvalue() > 0.0) {
            return Err(Error::BlockNotPositiveDefinite { block: i });
        }
        factors.push(Some(f));
    }
    Ok(BlockFactors { factors })
}

/// `c_i = g_i + Σ_{j≠i} Q_ij y_j`.
pub fn block_offset(p: &OrthTrpProblem, y_blocks: &[DVector<f64>], i: usize) -> DVector<f64> {
    let mut c = p.g_blocks[i].clone();
    for (j, yj) in y_blocks.iter().enumerate() {
        if j != i {
            c.gemv(1.0, p.q_block(i, j), yj, 1.0);
        }
    }
    c
}

/// Updates block `i` in place from the current values of all other blocks.
/// The objective and KKT fields of `state` are left stale.
pub fn update_block(
    p: &OrthTrpProblem,
    state: &mut OrthTrpState,
    factors: &BlockFactors,
    i: usize,
    config: &SolverConfig,
) -> Result<()> {
    if p.is_fixed(i) {
        return Ok(());
    }
    let f = factors
        .get(i)
        .ok_or_else(|| Error::InvalidArgument(format!("no factorization for free block {i}")))?;
    let c = block_offset(p, &state.y_blocks, i);
    let (y, lambda) = match config.block_mode {
        BlockMode::SingleDualStep => trp_step(f, &c, state.lambda_blocks[i])?,
        BlockMode::ExactBlockSolve => {
            let s = trp_solve_factored(f, &c, 1.0, config.block_tol())?;
            (s.x, s.lambda)
        }
    };
    state.y_blocks[i] = y;
    state.lambda_blocks[i] = Some(lambda);
    Ok(())
}

/// One Gauss–Seidel pass over the free blocks in ascending order.
pub fn sweep(
    p: &OrthTrpProblem,
    state: &OrthTrpState,
    factors: &BlockFactors,
    config: &SolverConfig,
) -> Result<OrthTrpState> {
    let mut next = state.clone();
    for i in 0..p.n_blocks {
        update_block(p, &mut next, factors, i, config)?;
    }
    next.sweep_count += 1;
    next.objective = p.objective(&next.y_blocks);
    next.kkt_residual = kkt_residual(p, &next.y_blocks, &next.lambda_blocks);
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    KktMet,
    ObjectiveStagnated,
    MaxSweeps,
}

impl ConvergenceStatus {
    pub fn converged(self) -> bool {
        !matches!(self, ConvergenceStatus::MaxSweeps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: ConvergenceStatus,
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub factorize_s: f64,
    pub sweep_s: f64,
}

/// Runs sweeps from `y = 0` until the KKT residual reaches `kkt_tol`, the
/// relative objective change stays below `objective_tol` for five sweeps in a
/// row, or `max_sweeps` is hit. Running out of sweeps is reported, not raised.
pub fn solve(p: &OrthTrpProblem, config: &SolverConfig) -> Result<(OrthTrpState, ConvergenceReport)> {
    config.validate()?;
    let t0 = Instant::now();
    let factors = precompute_factorizations(p)?;
    let factorize_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut state = OrthTrpState::initial(p);
    let mut quiet = 0;
    let status = loop {
        let previous = state.objective;
        state = sweep(p, &state, &factors, config)?;
        if state.kkt_residual <= config.kkt_tol {
            break ConvergenceStatus::KktMet;
        }
        let scale = previous.abs().max(state.objective.abs()).max(f64::MIN_POSITIVE);
        if (state.objective - previous).abs() <= config.objective_tol * scale {
            quiet += 1;
            if quiet >= STAGNATION_SWEEPS {
                break ConvergenceStatus::ObjectiveStagnated;
            }
        } else {
            quiet = 0;
        }
        if state.sweep_count >= config.max_sweeps {
            break ConvergenceStatus::MaxSweeps;
        }
    };
    let sweep_s = t1.elapsed().as_secs_f64();

    let report = ConvergenceReport {
        status,
        sweeps: state.sweep_count,
        kkt_residual: state.kkt_residual,
        objective: state.objective,
        factorize_s,
        sweep_s,
    };
    Ok((state, report))
}

/// Worst blockwise violation of stationarity, feasibility and complementary
/// slackness over the free blocks. Unset multipliers count as zero.
pub fn kkt_residual(p: &OrthTrpProblem, y_blocks: &[DVector<f64>], lambda_blocks: &[Option<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for i in p.free_blocks() {
        let lambda = lambda_blocks.get(i).copied().flatten().unwrap_or(0.0);
        let y = &y_blocks[i];
        let mut r = block_offset(p, y_blocks, i);
        r.gemv(1.0, p.q_block(i, i), y, 1.0);
        r.axpy(lambda, y, 1.0);
        let norm = y.norm();
        worst = worst
            .max(r.norm())
            .max((norm - 1.0).max(0.0))
            .max((lambda * (norm - 1.0)).abs());
    }
    worst
}

/// The problem over the free blocks only, with fixed blocks folded into the
/// linear term and a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub q: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
    pub free_blocks: Vec<usize>,
    pub block_dim: usize,
}

impl DenseQp {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.q * z)) + self.g.dot(z) + self.constant
    }

    /// Reinserts fixed values to give a full block list.
    pub fn expand(&self, p: &OrthTrpProblem, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let d = self.block_dim;
        (0..p.n_blocks())
            .map(|i| match self.free_blocks.iter().position(|&b| b == i) {
                Some(k) => z.rows(k * d, d).into_owned(),
                None => p.fixed_blocks()[&i].clone(),
            })
            .collect()
    }
}

pub fn assemble_dense(p: &OrthTrpProblem) -> DenseQp {
    let d = p.block_dim;
    let free: Vec<usize> = p.free_blocks().collect();
    let n = free.len() * d;
    let mut q = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        let mut gi = p.g_blocks[i].clone();
        for (&k, v) in &p.fixed {
            gi.gemv(1.0, p.q_block(i, k), v, 1.0);
        }
        g.rows_mut(a * d, d).copy_from(&gi);
        for (b, &j) in free.iter().enumerate() {
            q.view_mut((a * d, b * d), (d, d)).copy_from(p.q_block(i, j));
        }
    }
    let mut constant = 0.0;
    for (&k, vk) in &p.fixed {
        constant += p.g_blocks[k].dot(vk);
        for (&l, vl) in &p.fixed {
            constant += 0.5 * vk.dot(&(p.q_block(k, l) * vl));
        }
    }
    DenseQp { q, g, constant, free_blocks: free, block_dim: d }
}
