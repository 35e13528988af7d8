//! Dense two-phase simplex for the small linear programs that arise when
//! searching for diagonal weights. Problems have a handful of variables, so
//! the tableau is stored densely and Bland's rule is used throughout.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-10;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective·x` subject to the constraints and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.n_vars());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        Tableau::build(self)?.run(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Optimal,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_orig: usize,
    first_artificial: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Result<Self> {
        let n = lp.n_vars();
        for c in &lp.constraints {
            if c.coeffs.len() != n {
                return Err(Error::Solver(format!(
                    "constraint has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
            if c.coeffs.iter().chain([&c.rhs]).any(|v| !v.is_finite()) {
                return Err(Error::Solver("non-finite constraint data".into()));
            }
        }
        // normalize to nonnegative right-hand sides
        let normalized: Vec<Constraint> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    Constraint {
                        coeffs: c.coeffs.iter().map(|v| -v).collect(),
                        relation: match c.relation {
                            Relation::Le => Relation::Ge,
                            Relation::Ge => Relation::Le,
                            Relation::Eq => Relation::Eq,
                        },
                        rhs: -c.rhs,
                    }
                } else {
                    c.clone()
                }
            })
            .collect();
        let n_slack = normalized
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let n_art = normalized
            .iter()
            .filter(|c| c.relation != Relation::Le)
            .count();
        let first_artificial = n + n_slack;
        let width = first_artificial + n_art + 1;
        let mut rows = Vec::with_capacity(normalized.len());
        let mut basis = Vec::with_capacity(normalized.len());
        let (mut slack, mut art) = (n, first_artificial);
        for c in &normalized {
            let mut row = vec![0.0; width];
            row[..n].copy_from_slice(&c.coeffs);
            row[width - 1] = c.rhs;
            match c.relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis.push(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(row);
        }
        Ok(Self {
            rows,
            basis,
            n_orig: n,
            first_artificial,
            width,
        })
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome> {
        let rhs = self.width - 1;
        if self.first_artificial < rhs {
            // phase 1: maximize −Σ artificials
            let mut cost = vec![0.0; self.width];
            for c in cost.iter_mut().take(rhs).skip(self.first_artificial) {
                *c = 1.0;
            }
            self.price_out(&mut cost);
            self.optimize(&mut cost, rhs)?;
            if cost[rhs] < -FEAS_EPS {
                return Ok(LpOutcome::Infeasible);
            }
            self.evict_artificials();
        }
        let mut cost = vec![0.0; self.width];
        for (c, o) in cost.iter_mut().zip(&lp.objective) {
            *c = -o;
        }
        self.price_out(&mut cost);
        if self.optimize(&mut cost, self.first_artificial)? == Status::Unbounded {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n_orig];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_orig {
                x[b] = row[rhs].max(0.0);
            }
        }
        let value = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpOutcome::Optimal { x, value })
    }

    /// Makes the cost row consistent with the current basis.
    fn price_out(&self, cost: &mut [f64]) {
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let f = cost[b];
            if f != 0.0 {
                for (c, r) in cost.iter_mut().zip(row) {
                    *c -= f * r;
                }
            }
        }
    }

    /// Primal simplex over columns `< allowed`.
    fn optimize(&mut self, cost: &mut [f64], allowed: usize) -> Result<Status> {
        let rhs = self.width - 1;
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..allowed).find(|&j| cost[j] < -PIVOT_EPS) else {
                return Ok(Status::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-14
                                || (ratio <= best + 1e-14 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((leave, _)) = leave else {
                return Ok(Status::Unbounded);
            };
            self.pivot(leave, enter, cost);
        }
        Err(Error::Solver("pivot limit reached".into()))
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = cost[c];
        if f != 0.0 {
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Pivots zero-level artificials out of the basis; drops redundant rows.
    fn evict_artificials(&mut self) {
        let mut dummy = vec![0.0; self.width];
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        self.pivot(i, j, &mut dummy);
                        i += 1;
                    }
                    None => {
                        self.rows.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}
