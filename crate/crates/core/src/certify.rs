//! Certification of Lur'e plants with diagonally-weighted ∞-norms.
//!
//! For `ẋ = Ax + Bu + ξφ(ηᵀx)` under `u = Kx`, the Jacobians of the ideal
//! loop and of the held-input loop lie in the segments
//! `A + BK + κ ξηᵀ` and `A + κ ξηᵀ`, `κ ∈ [κ_min, κ_max]`. Because the
//! weighted ∞ matrix measure is convex, bounding it at the two endpoints is
//! enough, and for Metzler majorants that is a linear feasibility problem
//! in `v = θ⁻¹`:
//!
//! ```text
//! ⌈M⌉_Mzr v ≤ −rate · v,   v > 0
//! ```
//!
//! with `rate = c` for the closed loop and `rate = −d₁` for the open loop.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::norms::{
    check_weights, gamma_constant, induced_norm_weighted_inf, metzler_majorant, scaled_row_sum_max,
    Matrix, WeightedNorm,
};
use crate::plant::LurePlant;

/// Number of interior samples used to bound `φ'`.
pub const KAPPA_SAMPLES: usize = 4096;

/// Lower bound on each entry of `v` in the weight LP.
pub const V_MIN: f64 = 1e-6;
/// Upper bound on each entry of `v` in the weight LP.
pub const V_MAX: f64 = 1e6;

/// Slack below which substituted weights are rejected.
pub const SLACK_TOL: f64 = 1e-12;

pub const STAGE_CLOSED: &str = "closed-loop contraction weights (rate c)";
pub const STAGE_OPEN: &str = "open-loop growth weights (rate d1)";

/// How computed slope bounds are rounded before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaRounding {
    Exact,
    /// Round outward (min down, max up) to this many decimals.
    Decimals(u32),
}

impl Default for KappaRounding {
    fn default() -> Self {
        KappaRounding::Decimals(2)
    }
}

/// `(inf φ', sup φ')` over `(−R₀, R₀)`.
pub fn kappa_bounds(
    phi_prime: impl Fn(f64) -> Result<f64>,
    r0: f64,
    rounding: KappaRounding,
) -> Result<(f64, f64)> {
    if !(r0 > 0.0) {
        return Err(invalid("r0", format!("R₀ = {r0} must be positive")));
    }
    let n = KAPPA_SAMPLES;
    let mut points: Vec<f64> = if r0.is_finite() {
        (0..n)
            .map(|i| -r0 + 2.0 * r0 * (i as f64 + 0.5) / n as f64)
            .chain([-r0, r0])
            .collect()
    } else {
        // s ↦ s / (1 − s²) maps (−1, 1) onto ℝ
        (0..n)
            .map(|i| {
                let s = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                s / (1.0 - s * s)
            })
            .chain([-1e12, 1e12])
            .collect()
    };
    points.push(0.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for z in points {
        let v = phi_prime(z)
            .map_err(|e| Error::UnboundedSlope(format!("φ' not available at z = {z}: {e}")))?;
        if !v.is_finite() {
            return Err(Error::UnboundedSlope(format!("φ'({z}) = {v}")));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(match rounding {
        KappaRounding::Exact => (lo, hi),
        KappaRounding::Decimals(d) => (round_outward(lo, d, false), round_outward(hi, d, true)),
    })
}

fn round_outward(v: f64, decimals: u32, up: bool) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let s = v * scale;
    let nearest = s.round();
    let r = if (s - nearest).abs() < 1e-9 {
        nearest
    } else if up {
        s.ceil()
    } else {
        s.floor()
    };
    r / scale
}

/// Smallest slack `min_{M,i} (−rate·v − ⌈M⌉v)_i` of the weight inequalities.
pub fn weight_slack(mats: &[Matrix], rate: f64, v: &[f64]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for m in mats {
        check_dim(v.len(), m.nrows())?;
        check_dim(v.len(), m.ncols())?;
        let mz = metzler_majorant(m);
        for i in 0..v.len() {
            let lhs: f64 = (0..v.len()).map(|j| mz[(i, j)] * v[j]).sum();
            worst = worst.min(-rate * v[i] - lhs);
        }
    }
    Ok(worst)
}

/// Finds `v > 0` (normalized to `v₁ = 1`) with `⌈M⌉_Mzr v ≤ −rate·v` for
/// every matrix, maximizing the common relative margin `s` in
/// `⌈M⌉_Mzr v ≤ −(rate + s)·v`. Returns `None` when no such `v` exists.
pub fn lp_feasible_theta(mats: &[Matrix], rate: f64) -> Result<Option<Vec<f64>>> {
    let Some(first) = mats.first() else {
        return Err(invalid("mats", "no matrices given"));
    };
    let n = first.nrows();
    for m in mats {
        check_dim(n, m.nrows())?;
        check_dim(n, m.ncols())?;
    }
    let majorants: Vec<Matrix> = mats.iter().map(metzler_majorant).collect();
    let Some(mut best) = feasible_weights(&majorants, rate)? else {
        return Ok(None);
    };
    // s can never exceed −(rate + M_ii) for any diagonal entry
    let diag_max = majorants
        .iter()
        .flat_map(|m| (0..n).map(move |i| m[(i, i)]))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut lo = 0.0;
    let mut hi = -(rate + diag_max);
    while hi - lo > 1e-10 * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        match feasible_weights(&majorants, rate + mid)? {
            Some(v) => {
                lo = mid;
                best = v;
            }
            None => hi = mid,
        }
    }
    let scale = best[0];
    best.iter_mut().for_each(|x| *x /= scale);
    if weight_slack(mats, rate, &best)? < -SLACK_TOL {
        return Err(Error::Solver(format!(
            "LP returned weights violating the inequalities by {:e}",
            -weight_slack(mats, rate, &best)?
        )));
    }
    Ok(Some(best))
}

/// Feasibility of `(⌈M⌉ + rate·I) v ≤ 0`, `V_MIN ≤ v ≤ V_MAX`, `v₁ = 1`.
/// Among feasible points, the one closest to uniform weights in ℓ₁ is taken.
fn feasible_weights(majorants: &[Matrix], rate: f64) -> Result<Option<Vec<f64>>> {
    let n = majorants[0].nrows();
    // variables: v (n), then t (n) with t_i ≥ |v_i − 1|
    let mut lp = LinearProgram::new(2 * n);
    for i in 0..n {
        lp.objective[n + i] = -1.0;
    }
    let row = |f: &dyn Fn(usize) -> f64| (0..2 * n).map(f).collect::<Vec<f64>>();
    for m in majorants {
        for i in 0..n {
            lp.add(
                row(&|j| {
                    if j < n {
                        m[(i, j)] + if i == j { rate } else { 0.0 }
                    } else {
                        0.0
                    }
                }),
                Relation::Le,
                0.0,
            );
        }
    }
    lp.add(row(&|j| if j == 0 { 1.0 } else { 0.0 }), Relation::Eq, 1.0);
    for k in 1..n {
        lp.add(
            row(&|j| if j == k { 1.0 } else { 0.0 }),
            Relation::Ge,
            V_MIN,
        );
        lp.add(
            row(&|j| if j == k { 1.0 } else { 0.0 }),
            Relation::Le,
            V_MAX,
        );
        lp.add(
            row(&|j| {
                if j == k {
                    1.0
                } else if j == n + k {
                    -1.0
                } else {
                    0.0
                }
            }),
            Relation::Le,
            1.0,
        );
        lp.add(
            row(&|j| if j == k || j == n + k { -1.0 } else { 0.0 }),
            Relation::Le,
            -1.0,
        );
    }
    match lp.solve()? {
        LpOutcome::Optimal { mut x, .. } => {
            x.truncate(n);
            Ok(Some(x))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Solver("weight LP reported unbounded".into())),
    }
}

/// Elementwise inverse.
pub fn invert_weights(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| 1.0 / x).collect()
}

/// Constants that make a plant usable by both self-triggered schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Contraction rate of the ideal loop in the `cl` norm.
    pub c: f64,
    pub theta_cl: Vec<f64>,
    pub theta_op: Vec<f64>,
    /// Growth rate bound of the held-input loop in the `op` norm.
    pub d1: f64,
    pub d2: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
    pub gamma: f64,
    /// Working radius `min{R₁, R₂/Γ}`.
    pub r: f64,
    pub alpha: f64,
    pub sigma0: f64,
    pub l_cl: f64,
    pub l_op: f64,
    pub l_cl2: f64,
    /// Smallest slack of the closed-loop weight inequalities.
    pub slack_cl: f64,
    /// Smallest slack of the open-loop weight inequalities.
    pub slack_op: f64,
}

impl Certificate {
    pub fn norm_cl(&self) -> WeightedNorm {
        WeightedNorm::inf(self.theta_cl.clone()).expect("certificate weights are positive")
    }

    pub fn norm_op(&self) -> WeightedNorm {
        WeightedNorm::inf(self.theta_op.clone()).expect("certificate weights are positive")
    }

    pub fn dim(&self) -> usize {
        self.theta_cl.len()
    }

    /// Checks the internal consistency a loaded certificate must satisfy.
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.theta_cl)?;
        check_weights(&self.theta_op)?;
        check_dim(self.theta_cl.len(), self.theta_op.len())?;
        let positive = [
            ("c", self.c),
            ("d2", self.d2),
            ("r1", self.r1),
            ("r2", self.r2),
            ("r", self.r),
            ("gamma", self.gamma),
            ("sigma0", self.sigma0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        if !(self.d1 >= 0.0) || !(self.alpha >= 0.0) {
            return Err(invalid("d1/alpha", "must be nonnegative"));
        }
        let g = gamma_constant(&self.theta_cl, &self.theta_op)?;
        if self.gamma < g * (1.0 - 1e-12) {
            return Err(invalid(
                "gamma",
                format!("{} below the attained ratio {g}", self.gamma),
            ));
        }
        let r = self.r1.min(self.r2 / self.gamma);
        if (self.r - r).abs() > 1e-12 * r.max(1.0) {
            return Err(invalid("r", format!("{} ≠ min(R1, R2/Γ) = {r}", self.r)));
        }
        Ok(())
    }

    /// Fixed-width summary, rounded to 4 decimals for display only.
    pub fn summary(&self) -> String {
        let vec4 = |v: &[f64]| {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
            format!("[{}]", parts.join(", "))
        };
        let rows = [
            ("c", format!("{:.4}", self.c)),
            ("theta_cl", vec4(&self.theta_cl)),
            ("theta_op", vec4(&self.theta_op)),
            ("(d1, d2)", format!("({:.4}, {:.4})", self.d1, self.d2)),
            (
                "(kappa_min, kappa_max)",
                format!("({:.4}, {:.4})", self.kappa_min, self.kappa_max),
            ),
            ("R0", format!("{:.4}", self.r0)),
            ("R1", format!("{:.4}", self.r1)),
            ("R2", format!("{:.4}", self.r2)),
            ("Gamma", format!("{:.4}", self.gamma)),
            ("R", format!("{:.4}", self.r)),
            ("alpha", format!("{:.4}", self.alpha)),
            ("sigma0", format!("{:.4}", self.sigma0)),
            (
                "slack (closed, open)",
                format!("({:.3e}, {:.3e})", self.slack_cl, self.slack_op),
            ),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<24} {v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Use these closed-loop weights instead of solving for them.
    pub theta_cl: Option<Vec<f64>>,
    /// Use these open-loop weights instead of solving for them.
    pub theta_op: Option<Vec<f64>>,
    pub kappa_rounding: KappaRounding,
    pub sigma0: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            theta_cl: None,
            theta_op: None,
            kappa_rounding: KappaRounding::default(),
            sigma0: 1.0,
        }
    }
}

/// Endpoint Jacobians `(A + BK) + κ ξηᵀ` and `A + κ ξηᵀ` for `κ ∈ {κ_min, κ_max}`.
pub fn endpoint_matrices(
    p: &LurePlant,
    kappa_min: f64,
    kappa_max: f64,
) -> (Vec<Matrix>, Vec<Matrix>) {
    let acl = p.closed_loop_linear();
    let r1 = p.rank_one();
    let closed = vec![&acl + &r1 * kappa_min, &acl + &r1 * kappa_max];
    let open = vec![&p.a + &r1 * kappa_min, &p.a + &r1 * kappa_max];
    (closed, open)
}

fn resolve_weights(
    stage: &'static str,
    mats: &[Matrix],
    rate: f64,
    given: Option<&Vec<f64>>,
) -> Result<(Vec<f64>, f64)> {
    let theta = match given {
        Some(theta) => {
            check_weights(theta)?;
            check_dim(mats[0].nrows(), theta.len())?;
            theta.clone()
        }
        None => match lp_feasible_theta(mats, rate)? {
            Some(v) => invert_weights(&v),
            None => {
                return Err(Error::Infeasible {
                    stage,
                    detail: format!(
                        "no positive weights satisfy ⌈M⌉v ≤ {}·v at both slope endpoints",
                        -rate
                    ),
                })
            }
        },
    };
    let slack = weight_slack(mats, rate, &invert_weights(&theta))?;
    if slack < -SLACK_TOL {
        return Err(Error::Infeasible {
            stage,
            detail: format!("weights {theta:?} violate the inequalities by {:e}", -slack),
        });
    }
    Ok((theta, slack))
}

/// Computes every constant of the certificate for a Lur'e plant.
pub fn certify_lure(p: &LurePlant, c: f64, d1: f64, opts: &CertifyOptions) -> Result<Certificate> {
    if !(c > 0.0) {
        return Err(invalid(
            "c",
            format!("contraction rate {c} must be positive"),
        ));
    }
    if !(d1 >= 0.0) {
        return Err(invalid(
            "d1",
            format!("growth rate {d1} must be nonnegative"),
        ));
    }
    if !(opts.sigma0 > 0.0) {
        return Err(invalid("sigma0", "must be positive"));
    }
    let (kappa_min, kappa_max) = kappa_bounds(|z| p.phi.phi_prime(z), p.r0, opts.kappa_rounding)?;
    let (closed, open) = endpoint_matrices(p, kappa_min, kappa_max);
    let (theta_cl, slack_cl) = resolve_weights(STAGE_CLOSED, &closed, c, opts.theta_cl.as_ref())?;
    let (theta_op, slack_op) = resolve_weights(STAGE_OPEN, &open, -d1, opts.theta_op.as_ref())?;

    let eta_cl = WeightedNorm::dual_of_inf(&theta_cl)?.eval(&p.eta);
    let eta_op = WeightedNorm::dual_of_inf(&theta_op)?.eval(&p.eta);
    let r1 = p.r0 / eta_cl;
    let r2 = p.r0 / eta_op;
    let gamma = gamma_constant(&theta_cl, &theta_op)?;
    let r = r1.min(r2 / gamma);

    let kappa = kappa_min.abs().max(kappa_max.abs());
    let xi_op = WeightedNorm::inf(theta_op.clone())?.eval(&p.xi);
    let d2 =
        induced_norm_weighted_inf(&p.closed_loop_linear(), &theta_op)? + kappa * xi_op * eta_op;
    let alpha = scaled_row_sum_max(&(&p.b * &p.k), &theta_cl, &theta_op);

    Ok(Certificate {
        c,
        theta_cl,
        theta_op,
        d1,
        d2,
        kappa_min,
        kappa_max,
        r0: p.r0,
        r1,
        r2,
        gamma,
        r,
        alpha,
        sigma0: opts.sigma0,
        l_cl: 1.0,
        l_op: 1.0,
        l_cl2: 1.0,
        slack_cl,
        slack_op,
    })
}

/// Largest contraction rate (to `tol`) for which closed-loop weights exist.
pub fn max_contraction_rate(
    p: &LurePlant,
    rounding: KappaRounding,
    tol: f64,
) -> Result<Option<f64>> {
    let (kmin, kmax) = kappa_bounds(|z| p.phi.phi_prime(z), p.r0, rounding)?;
    let (closed, _) = endpoint_matrices(p, kmin, kmax);
    let feasible = |rate: f64| lp_feasible_theta(&closed, rate).map(|v| v.is_some());
    if !feasible(tol)? {
        return Ok(None);
    }
    let diag_max = closed
        .iter()
        .flat_map(|m| (0..m.nrows()).map(move |i| m[(i, i)]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (tol, -diag_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}
