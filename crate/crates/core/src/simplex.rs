//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Sized for the tiny programs that come up when fitting corridor
//! ellipsoids (a handful of variables, up to a few thousand constraints).

use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize cᵀx` subject to the constraints and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multiplier of each constraint, `y = c_Bᵀ B⁻¹`: the rate of change of
    /// the optimal objective with the constraint's right-hand side.
    pub duals: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, constraints: Vec::new() }
    }

    pub fn constrain(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coefficients, relation, rhs });
        self
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        if self.constraints.iter().any(|c| c.coefficients.len() != n) {
            return Err(Error::Dimension("constraint width differs from objective length".into()));
        }
        if self.objective.iter().chain(self.constraints.iter().flat_map(|c| c.coefficients.iter())).any(|x| !x.is_finite())
            || self.constraints.iter().any(|c| !c.rhs.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    artificial: Vec<bool>,
    /// Column that held the identity entry of each row at the start.
    initial_col: Vec<usize>,
    row_sign: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        let mut normalized = Vec::with_capacity(m);
        let mut row_sign = Vec::with_capacity(m);
        for c in &lp.constraints {
            if c.rhs < 0.0 {
                let rel = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                normalized.push((c.coefficients.iter().map(|a| -a).collect::<Vec<_>>(), rel, -c.rhs));
                row_sign.push(-1.0);
            } else {
                normalized.push((c.coefficients.clone(), c.relation, c.rhs));
                row_sign.push(1.0);
            }
        }
        let n_slack = normalized.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let n_art = normalized.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let n_cols = n + n_slack + n_art;
        let mut rows = vec![vec![0.0; n_cols + 1]; m];
        let mut basis = vec![0; m];
        let mut initial_col = vec![0; m];
        let mut artificial = vec![false; n_cols];
        let mut slack = n;
        let mut art = n + n_slack;
        for (i, (coef, rel, rhs)) in normalized.into_iter().enumerate() {
            rows[i][..n].copy_from_slice(&coef);
            rows[i][n_cols] = rhs;
            match rel {
                Relation::Le => {
                    rows[i][slack] = 1.0;
                    basis[i] = slack;
                    initial_col[i] = slack;
                    slack += 1;
                }
                Relation::Ge | Relation::Eq => {
                    if rel == Relation::Ge {
                        rows[i][slack] = -1.0;
                        slack += 1;
                    }
                    rows[i][art] = 1.0;
                    artificial[art] = true;
                    basis[i] = art;
                    initial_col[i] = art;
                    art += 1;
                }
            }
        }
        Self { rows, basis, n_struct: n, n_cols, artificial, initial_col, row_sign }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut r = cost[j];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            r -= cost[b] * row[j];
        }
        r
    }

    /// Bland's rule iterations for the given column costs.
    fn optimize(&mut self, cost: &[f64], allow_artificial: bool) -> Result<()> {
        let rhs = self.n_cols;
        let limit = 50 * (self.n_cols + self.rows.len()) + 1000;
        for _ in 0..limit {
            let entering = (0..self.n_cols)
                .filter(|&j| allow_artificial || !self.artificial[j])
                .find(|&j| !self.basis.contains(&j) && self.reduced_cost(cost, j) < -PIVOT_TOL);
            let Some(c) = entering else {
                return Ok(());
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[rhs] / row[c];
                    let better = match best {
                        None => true,
                        Some((r, _, b)) => ratio < r - PIVOT_TOL || (ratio <= r + PIVOT_TOL && self.basis[i] < b),
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, r, _)) = best else {
                return Err(Error::LpUnbounded);
            };
            self.pivot(r, c);
        }
        Err(Error::LpIterationLimit)
    }

    fn run(mut self, objective: &[f64]) -> Result<LpSolution> {
        let rhs = self.n_cols;
        if self.artificial.iter().any(|&a| a) {
            let phase1: Vec<f64> = self.artificial.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            self.optimize(&phase1, true)?;
            let infeasibility: f64 =
                self.rows.iter().zip(&self.basis).filter(|(_, &b)| self.artificial[b]).map(|(row, _)| row[rhs]).sum();
            let scale = self.rows.iter().map(|r| r[rhs].abs()).fold(1.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Err(Error::LpInfeasible);
            }
            // Drive zero-valued artificials out of the basis where possible.
            for i in 0..self.rows.len() {
                if self.artificial[self.basis[i]] {
                    if let Some(c) = (0..self.n_cols)
                        .find(|&j| !self.artificial[j] && !self.basis.contains(&j) && self.rows[i][j].abs() > 1e-9)
                    {
                        self.pivot(i, c);
                    }
                }
            }
        }

        let mut cost = vec![0.0; self.n_cols];
        cost[..self.n_struct].copy_from_slice(objective);
        self.optimize(&cost, false)?;

        let mut x = vec![0.0; self.n_struct];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_struct {
                x[b] = row[rhs].max(0.0);
            }
        }
        let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = (0..self.rows.len())
            .map(|k| {
                let col = self.initial_col[k];
                let y: f64 = self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[col]).sum();
                y * self.row_sign[k]
            })
            .collect();
        Ok(LpSolution { x, objective: value, duals })
    }
}
