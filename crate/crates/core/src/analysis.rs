//! Post-hoc checks of the stability guarantees, the decay function W, the
//! stabilizable (ρ, σ) region, and relative-error comparison.

use serde::Serialize;

use crate::certify::Certificate;
use crate::error::{invalid, Result};
use crate::simulate::{Scheme, SchemeParams, SimResult};
use crate::stm::{gamma_log, gamma_zoom, sigma_bounds_log};

/// Margins at or above this count as satisfied.
pub const MARGIN_TOL: f64 = -1e-9;

/// Bisection tolerance for the region crossing.
pub const REGION_TOL: f64 = 1e-6;

/// Euclidean norms of the ideal state below this leave the relative error undefined.
pub const IDEAL_FLOOR: f64 = 1e-12;

/// `w(t) = e^{−ct}(1−ε) + ε`.
pub fn decay_w(t: f64, eps: f64, c: f64) -> Result<f64> {
    check_decay_domain(eps, c)?;
    if !(t >= 0.0) {
        return Err(invalid("t", format!("{t} must be nonnegative")));
    }
    Ok((-c * t).exp() * (1.0 - eps) + eps)
}

/// `W(t) = −ln w(t) / t`.
pub fn big_w(t: f64, eps: f64, c: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    Ok(-decay_w(t, eps, c)?.ln() / t)
}

fn check_decay_domain(eps: f64, c: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid("eps", format!("{eps} must lie in (0, 1)")));
    }
    if !(c > 0.0) {
        return Err(invalid("c", format!("{c} must be positive")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub name: &'static str,
    pub bound: String,
    /// Smallest `bound − observed` over all checked points.
    pub margin: f64,
    pub pass: bool,
}

impl Claim {
    fn new(name: &'static str, bound: String, margin: f64) -> Self {
        Self {
            name,
            bound,
            margin,
            pass: margin >= MARGIN_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scheme: Scheme,
    pub claims: Vec<Claim>,
    pub samples: usize,
    /// Shortest completed inter-sampling interval on the grid (s).
    pub min_interval: Option<f64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn claim(&self, name: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "scheme {}: {} samples on (0, H]",
            self.scheme.as_str(),
            self.samples
        );
        if let Some(m) = self.min_interval {
            out.push_str(&format!(", shortest interval {m:.6} s"));
        }
        out.push('\n');
        for c in &self.claims {
            out.push_str(&format!(
                "  [{}] {:<18} {:<40} margin {:+.3e}\n",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.bound,
                c.margin
            ));
        }
        out
    }
}

pub const CLAIM_DECAY: &str = "decay";
pub const CLAIM_DWELL: &str = "dwell";
pub const CLAIM_ERROR: &str = "error_contract";
pub const CLAIM_RANGE: &str = "range";
pub const CLAIM_STEPS: &str = "period_multiple";

/// Re-checks the guarantees of the run's scheme at every grid point.
pub fn verify_theorem(sim: &SimResult) -> Result<VerificationReport> {
    let traj = &sim.trajectory;
    let min_interval = sim
        .records
        .iter()
        .filter(|r| !r.truncated)
        .map(|r| r.steps as f64 * traj.dt)
        .reduce(f64::min);
    let mut claims = Vec::new();
    match (&sim.params, &sim.cert) {
        (SchemeParams::Log { quantizer, stm }, Some(cert)) => {
            let cl = cert.norm_cl();
            let op = cert.norm_op();
            let sigma1 = sigma_bounds_log(quantizer.rho(), cert)?.1;
            let gamma = gamma_log(stm.sigma, sigma1, cert.c, stm.tau_max)?;
            claims.push(decay_claim(
                sim,
                cert,
                gamma,
                cl.eval(traj.state(0)),
                "‖x(t)‖_cl ≤ e^{−γt}‖x0‖_cl",
            ));
            let floor = stm.min_dwell(quantizer, cert)?;
            let dwell = sim
                .records
                .iter()
                .filter(|r| !r.truncated)
                .map(|r| r.tau - floor)
                .fold(f64::INFINITY, f64::min);
            claims.push(Claim::new(
                CLAIM_DWELL,
                format!("τ_k ≥ {floor:.6}"),
                finite_or_zero(dwell),
            ));
            let mut worst = f64::INFINITY;
            for r in &sim.records {
                let bound = stm.sigma * cl.eval(&r.q);
                for s in r.index..r.index + r.steps {
                    worst = worst.min(bound - op.eval_diff(&r.q, traj.state(s)));
                }
            }
            claims.push(Claim::new(
                CLAIM_ERROR,
                "‖q_k − x(t)‖_op ≤ σ‖q_k‖_cl".into(),
                finite_or_zero(worst),
            ));
        }
        (SchemeParams::Zoom { quantizer, stm }, Some(cert)) => {
            let cl = cert.norm_cl();
            let op = cert.norm_op();
            let gamma = gamma_zoom(stm.sigma, cert, stm.ell_max, stm.h)?;
            claims.push(decay_claim(
                sim,
                cert,
                gamma,
                quantizer.range(),
                "‖x(t)‖_cl < Mμ₀e^{−γt}",
            ));
            let per_period = (stm.h / traj.dt).round() as usize;
            let steps = sim
                .records
                .iter()
                .map(|r| {
                    let ell = r.ell.unwrap_or(0) as f64;
                    let on_grid =
                        r.truncated || r.steps == r.ell.unwrap_or(0) as usize * per_period;
                    let room = (ell - 1.0).min(stm.ell_max as f64 - ell);
                    if on_grid {
                        room
                    } else {
                        -1.0
                    }
                })
                .fold(f64::INFINITY, f64::min);
            claims.push(Claim::new(
                CLAIM_STEPS,
                format!("t_(k+1) − t_k ∈ {{h, …, {}h}}", stm.ell_max),
                finite_or_zero(steps),
            ));
            let mut worst = f64::INFINITY;
            let mut range = f64::INFINITY;
            for r in &sim.records {
                let mu = r.mu.unwrap_or(f64::NAN);
                let bound = stm.sigma * quantizer.m() * mu;
                for s in r.index..r.index + r.steps {
                    worst = worst.min(bound - op.eval_diff(&r.q, traj.state(s)));
                }
                range = range.min(quantizer.m() * mu - cl.eval(&r.x));
            }
            claims.push(Claim::new(
                CLAIM_ERROR,
                "‖q_k − x(t)‖_op ≤ σMμ_k".into(),
                finite_or_zero(worst),
            ));
            // strict inequality: a zero margin is a violation
            let mut rc = Claim::new(
                CLAIM_RANGE,
                "‖x(t_k)‖_cl < Mμ_k".into(),
                finite_or_zero(range),
            );
            rc.pass = range > 0.0 && sim.range_violations() == 0;
            claims.push(rc);
        }
        (SchemeParams::Ideal, Some(cert)) => {
            let n0 = cert.norm_cl().eval(traj.state(0));
            claims.push(decay_claim(
                sim,
                cert,
                cert.c,
                n0,
                "‖x(t)‖_cl ≤ e^{−ct}‖x0‖_cl",
            ));
        }
        (_, None) => return Err(invalid("sim", "no certificate attached to the run")),
    }
    Ok(VerificationReport {
        scheme: sim.scheme,
        claims,
        samples: sim.sample_count(),
        min_interval,
    })
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn decay_claim(sim: &SimResult, cert: &Certificate, gamma: f64, scale: f64, bound: &str) -> Claim {
    let cl = cert.norm_cl();
    let traj = &sim.trajectory;
    let worst = traj
        .states()
        .enumerate()
        .map(|(k, x)| scale * (-gamma * traj.time(k)).exp() - cl.eval(x))
        .fold(f64::INFINITY, f64::min);
    Claim::new(CLAIM_DECAY, format!("{bound}, γ = {gamma:.5}"), worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionRow {
    pub rho: f64,
    pub lower: f64,
    pub upper: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub rows: Vec<RegionRow>,
    /// `(ρ_min, σ)` where the two bounds meet.
    pub crossing: Option<(f64, f64)>,
}

/// Evaluates the log-scheme σ window on each `ρ` and locates where it closes.
pub fn stabilizable_region(rho_grid: &[f64], cert: &Certificate) -> Result<Region> {
    let rows = rho_grid
        .iter()
        .map(|&rho| {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(invalid("rho", format!("{rho} must lie in (0, 1]")));
            }
            let (lower, upper) = sigma_bounds_log(rho, cert)?;
            Ok(RegionRow {
                rho,
                lower,
                upper,
                feasible: lower < upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Region {
        rows,
        crossing: region_crossing(cert)?,
    })
}

/// Bisection on `lower(ρ) − upper(ρ)`, which decreases in `ρ`.
pub fn region_crossing(cert: &Certificate) -> Result<Option<(f64, f64)>> {
    let gap = |rho: f64| sigma_bounds_log(rho, cert).map(|(l, u)| l - u);
    let (mut lo, mut hi) = (f64::EPSILON, 1.0);
    if gap(hi)? >= 0.0 || gap(lo)? <= 0.0 {
        return Ok(None);
    }
    while hi - lo > REGION_TOL {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    let (l, u) = sigma_bounds_log(rho, cert)?;
    Ok(Some((rho, 0.5 * (l + u))))
}

/// `‖x(t) − x_ideal(t)‖₂ / ‖x_ideal(t)‖₂` on the shared grid; `None` where undefined.
pub fn relative_error(sim: &SimResult, ideal: &SimResult) -> Result<Vec<(f64, Option<f64>)>> {
    let (a, b) = (&sim.trajectory, &ideal.trajectory);
    if a.len() != b.len() || a.dt != b.dt || a.dim() != b.dim() {
        return Err(invalid("ideal", "runs do not share a grid"));
    }
    Ok(a.states()
        .zip(b.states())
        .enumerate()
        .map(|(k, (x, xi))| {
            let den = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let num = x
                .iter()
                .zip(xi)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            (a.time(k), (den >= IDEAL_FLOOR).then(|| num / den))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(x, y)` points.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(invalid("points", "need at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("points", "all abscissae coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
