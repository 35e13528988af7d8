//! Self-triggering mechanisms and their closed-form design constants.
//!
//! Both mechanisms predict `x_q`, the held-input trajectory started at the
//! quantized sample `q`, and sample again just before the predicted error
//! bound would exceed its threshold or the prediction would leave `B_op(R₂)`.

use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::error::{check_dim, invalid, Error, Result};
use crate::integrate::{split_duration, Rk4};
use crate::plant::Plant;
use crate::quantize::{LogQuantizer, ZoomQuantizer};

/// Absolute resolution of refined crossing times.
pub const CROSSING_TOL: f64 = 1e-7;

/// Default offset of `λ` above its lower limit.
pub const LAMBDA_OFFSET: f64 = 1e-4;

/// `ν(t) = d₂(e^{d₁t} − 1)/d₁`, or `d₂t` when `d₁ = 0`.
pub fn nu(t: f64, d1: f64, d2: f64) -> f64 {
    if d1 == 0.0 {
        d2 * t
    } else {
        d2 * (d1 * t).exp_m1() / d1
    }
}

/// Solution of `λ(1 + ν(t)) = 1`.
pub fn tilde_tau_min(lambda: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(invalid("lambda", format!("{lambda} must lie in (0, 1)")));
    }
    if !(d2 > 0.0) {
        return Err(invalid("d2", "must be positive"));
    }
    let ratio = (1.0 - lambda) / (d2 * lambda);
    Ok(if d1 == 0.0 {
        ratio
    } else {
        (d1 * ratio).ln_1p() / d1
    })
}

fn log_rel_error(rho: f64, cert: &Certificate) -> f64 {
    cert.l_op * (1.0 - rho) / (1.0 + rho)
}

/// Unique positive `t` with `(L_op(1−ρ)/(1+ρ))e^{d₁t} + ν(t) = σ/Γ`.
pub fn tau_min_log(rho: f64, sigma: f64, cert: &Certificate) -> Result<f64> {
    let (lower, _) = sigma_bounds_log(rho, cert)?;
    if !(sigma >= lower) {
        return Err(Error::AssumptionViolated {
            which: "log threshold lower bound",
            detail: format!("σ = {sigma} ≤ ΓL_op(1−ρ)/(1+ρ) = {lower}, no positive dwell bound"),
        });
    }
    let (g, d1, d2, l) = (cert.gamma, cert.d1, cert.d2, cert.l_op);
    Ok(if d1 == 0.0 {
        (sigma / g - log_rel_error(rho, cert)) / d2
    } else {
        let num = sigma * (1.0 + rho) * d1 + g * (1.0 + rho) * d2;
        let den = g * l * (1.0 - rho) * d1 + g * (1.0 + rho) * d2;
        (num / den).ln() / d1
    })
}

/// `(ΓL_op(1−ρ)/(1+ρ), σ₁ = 2cρ/(αL_cl(1+ρ)))`; the window is nonempty iff lower < upper.
pub fn sigma_bounds_log(rho: f64, cert: &Certificate) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(invalid("rho", format!("density {rho} must lie in (0, 1]")));
    }
    let lower = cert.gamma * log_rel_error(rho, cert);
    let upper = 2.0 * cert.c * rho / (cert.alpha * cert.l_cl * (1.0 + rho));
    Ok((lower, upper))
}

/// `w(t) = e^{−ct}(1−ε) + ε` and `−ln w(τ)/τ`, shared by both decay rates.
fn decay_rate(eps: f64, c: f64, tau: f64) -> f64 {
    -((-c * tau).exp() * (1.0 - eps) + eps).ln() / tau
}

/// Guaranteed decay rate of the log scheme.
pub fn gamma_log(sigma: f64, sigma1: f64, c: f64, tau_max: f64) -> Result<f64> {
    if !(sigma >= 0.0 && sigma < sigma1) {
        return Err(Error::AssumptionViolated {
            which: "log threshold upper bound",
            detail: format!("need 0 ≤ σ < σ₁ = {sigma1}, got σ = {sigma}"),
        });
    }
    if !(tau_max > 0.0) {
        return Err(invalid("tau_max", "must be positive"));
    }
    Ok(decay_rate(sigma / sigma1, c, tau_max))
}

/// `(Δ/M)(e^{d₁h} + ν(h)) + Γν(h)` and `c/α`.
pub fn sigma_bounds_zoom(
    h: f64,
    m: f64,
    delta: f64,
    lambda: f64,
    cert: &Certificate,
) -> Result<(f64, f64)> {
    let tt = tilde_tau_min(lambda, cert.d1, cert.d2)?;
    if !(h > 0.0 && h <= tt) {
        return Err(Error::AssumptionViolated {
            which: "zoom period",
            detail: format!("need 0 < h ≤ τ̃_min(λ) = {tt}, got h = {h}"),
        });
    }
    let n = nu(h, cert.d1, cert.d2);
    let lower = delta / m * ((cert.d1 * h).exp() + n) + cert.gamma * n;
    let upper = if cert.alpha == 0.0 {
        f64::INFINITY
    } else {
        cert.c / cert.alpha
    };
    Ok((lower, upper))
}

fn zoom_ratio(sigma: f64, cert: &Certificate) -> Result<f64> {
    let ratio = cert.alpha * sigma / cert.c;
    if !(ratio < 1.0) {
        return Err(Error::AssumptionViolated {
            which: "zoom threshold upper bound",
            detail: format!("ασ/c = {ratio} ≥ 1"),
        });
    }
    Ok(ratio)
}

/// `μ_{k+1} = (e^{−cΔt}(1 − ασ/c) + ασ/c) μ_k`.
pub fn zoom_update(mu: f64, delta_t: f64, cert: &Certificate, sigma: f64) -> Result<f64> {
    let r = zoom_ratio(sigma, cert)?;
    Ok(((-cert.c * delta_t).exp() * (1.0 - r) + r) * mu)
}

/// Guaranteed decay rate of the zoom scheme.
pub fn gamma_zoom(sigma: f64, cert: &Certificate, ell_max: u32, h: f64) -> Result<f64> {
    let r = zoom_ratio(sigma, cert)?;
    Ok(decay_rate(r, cert.c, ell_max as f64 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCause {
    Threshold,
    BallExit,
    MaxTime,
}

impl TriggerCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerCause::Threshold => "threshold",
            TriggerCause::BallExit => "ball_exit",
            TriggerCause::MaxTime => "max_time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmLogConfig {
    pub sigma: f64,
    pub tau_max: f64,
    pub lambda: f64,
    /// Allowed inter-sampling times; the computed time is floored onto this set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discretization: Option<Vec<f64>>,
}

impl StmLogConfig {
    /// Config with `λ = λ₀ + 10⁻⁴`.
    pub fn with_default_lambda(
        sigma: f64,
        tau_max: f64,
        q: &LogQuantizer,
        cert: &Certificate,
    ) -> Self {
        Self {
            sigma,
            tau_max,
            lambda: crate::quantize::lambda0_log(q, cert) + LAMBDA_OFFSET,
            discretization: None,
        }
    }

    /// Checks every precondition of the log-scheme guarantees.
    pub fn validate(&self, q: &LogQuantizer, cert: &Certificate) -> Result<()> {
        let (lower, upper) = sigma_bounds_log(q.rho(), cert)?;
        if !(self.sigma > lower && self.sigma < upper) {
            return Err(Error::AssumptionViolated {
                which: "log threshold window",
                detail: format!(
                    "need {lower} < σ < {upper}, got σ = {} (off by {:e})",
                    self.sigma,
                    if self.sigma <= lower {
                        lower - self.sigma
                    } else {
                        self.sigma - upper
                    }
                ),
            });
        }
        if !(self.sigma <= cert.sigma0) {
            return Err(Error::AssumptionViolated {
                which: "threshold cap",
                detail: format!("σ = {} exceeds σ₀ = {}", self.sigma, cert.sigma0),
            });
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(invalid(
                "tau_max",
                format!("{} must be positive", self.tau_max),
            ));
        }
        let lambda0 = crate::quantize::lambda0_log(q, cert);
        if !(self.lambda > lambda0 && self.lambda < 1.0) {
            return Err(Error::AssumptionViolated {
                which: "log containment factor",
                detail: format!("need λ₀ = {lambda0} < λ < 1, got λ = {}", self.lambda),
            });
        }
        if let Some(s) = &self.discretization {
            if s.is_empty() || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(invalid(
                    "discretization",
                    "must be a nonempty set of positive times",
                ));
            }
            let inf = s.iter().copied().fold(f64::INFINITY, f64::min);
            let sup = s.iter().copied().fold(0.0, f64::max);
            let bound = tau_min_log(q.rho(), self.sigma, cert)?.min(tilde_tau_min(
                self.lambda,
                cert.d1,
                cert.d2,
            )?);
            if !(inf <= bound && bound <= sup && sup <= self.tau_max) {
                return Err(Error::AssumptionViolated {
                    which: "inter-sampling discretization",
                    detail: format!(
                        "need inf S = {inf} ≤ {bound} ≤ sup S = {sup} ≤ τ_max = {}",
                        self.tau_max
                    ),
                });
            }
        }
        Ok(())
    }

    /// `min{τ_max, τ_min, τ̃_min}`.
    pub fn min_dwell(&self, q: &LogQuantizer, cert: &Certificate) -> Result<f64> {
        Ok(self
            .tau_max
            .min(tau_min_log(q.rho(), self.sigma, cert)?)
            .min(tilde_tau_min(self.lambda, cert.d1, cert.d2)?))
    }

    pub fn sigma1(&self, q: &LogQuantizer, cert: &Certificate) -> Result<f64> {
        Ok(sigma_bounds_log(q.rho(), cert)?.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmZoomConfig {
    pub sigma: f64,
    pub h: f64,
    pub ell_max: u32,
    pub lambda: f64,
}

impl StmZoomConfig {
    /// Config with `λ` taken from the quantizer's start zoom.
    pub fn from_quantizer(
        sigma: f64,
        h: f64,
        ell_max: u32,
        q: &ZoomQuantizer,
        cert: &Certificate,
    ) -> Result<Self> {
        Ok(Self {
            sigma,
            h,
            ell_max,
            lambda: crate::quantize::lambda_zoom(q, cert)?,
        })
    }

    pub fn validate(&self, q: &ZoomQuantizer, cert: &Certificate) -> Result<()> {
        if self.ell_max == 0 {
            return Err(invalid("ell_max", "must be at least 1"));
        }
        let (lower, upper) = sigma_bounds_zoom(self.h, q.m(), q.delta(), self.lambda, cert)?;
        if !(self.sigma >= lower && self.sigma < upper) {
            return Err(Error::AssumptionViolated {
                which: "zoom threshold window",
                detail: format!(
                    "need {lower} ≤ σ < {upper}, got σ = {} (off by {:e})",
                    self.sigma,
                    if self.sigma < lower {
                        lower - self.sigma
                    } else {
                        self.sigma - upper
                    }
                ),
            });
        }
        if !(self.sigma <= cert.sigma0) {
            return Err(Error::AssumptionViolated {
                which: "threshold cap",
                detail: format!("σ = {} exceeds σ₀ = {}", self.sigma, cert.sigma0),
            });
        }
        Ok(())
    }

    pub fn tau_max(&self) -> f64 {
        self.ell_max as f64 * self.h
    }
}

/// `ψ_log(τ, q)` evaluated at a predicted state `x = x_q(τ)`.
pub fn psi_log(tau: f64, q: &[f64], x: &[f64], rho: f64, cert: &Certificate) -> f64 {
    let op = cert.norm_op();
    log_rel_error(rho, cert) * (cert.d1 * tau).exp() * op.eval(q) + op.eval_diff(x, q)
}

/// `ψ_zo(τ, q, μ)` evaluated at a predicted state `x = x_q(τ)`.
pub fn psi_zoom(tau: f64, q: &[f64], x: &[f64], mu: f64, delta: f64, cert: &Certificate) -> f64 {
    delta * mu * (cert.d1 * tau).exp() + cert.norm_op().eval_diff(x, q)
}

/// First instant in `(start, end]` at which `violated` holds along `x_q`,
/// refined by bisection. Returns `(compliant, violating, cause)` bracket ends.
fn first_violation<P, F>(
    p: &P,
    q: &[f64],
    start: f64,
    end: f64,
    dt: f64,
    violated: F,
) -> Result<Option<(f64, f64, TriggerCause)>>
where
    P: Plant + ?Sized,
    F: Fn(f64, &[f64]) -> Option<TriggerCause>,
{
    let n = q.len();
    let mut u = vec![0.0; p.input_dim()];
    p.feedback(q, &mut u);
    let mut rk = Rk4::new(n);
    let mut x = q.to_vec();
    let blow = |e: Error, t: f64| match e {
        Error::Domain { .. } => Error::BlowUp { time: t },
        other => other,
    };
    let step = |rk: &mut Rk4, x: &mut [f64], h: f64, t: f64| -> Result<()> {
        rk.step(p, x, &u, h).map_err(|e| blow(e, t))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        Ok(())
    };
    // advance to the start of the checked interval
    let (full, rest) = split_duration(start, dt);
    for k in 1..=full {
        step(&mut rk, &mut x, dt, k as f64 * dt)?;
    }
    if rest > 0.0 {
        step(&mut rk, &mut x, rest, start)?;
    }
    let (full, rest) = split_duration(end - start, dt);
    let mut t_prev = start;
    let total = full + usize::from(rest > 0.0);
    for k in 1..=total {
        let t = if k <= full {
            start + k as f64 * dt
        } else {
            end
        };
        let mut next = x.clone();
        step(&mut rk, &mut next, t - t_prev, t)?;
        if violated(t, &next).is_some() {
            // bisect on (t_prev, t] with single RK4 sub-steps from the compliant end
            let (mut lo, mut hi) = (t_prev, t);
            let mut x_lo = x.clone();
            let mut x_hi = next;
            while hi - lo > CROSSING_TOL {
                let mid = 0.5 * (lo + hi);
                let mut x_mid = x_lo.clone();
                step(&mut rk, &mut x_mid, mid - lo, mid)?;
                if violated(mid, &x_mid).is_some() {
                    hi = mid;
                    x_hi = x_mid;
                } else {
                    lo = mid;
                    x_lo = x_mid;
                }
            }
            let cause = violated(hi, &x_hi).expect("upper bracket end violates");
            return Ok(Some((lo, hi, cause)));
        }
        x = next;
        t_prev = t;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTrigger {
    pub tau: f64,
    pub cause: TriggerCause,
}

/// Next inter-sampling time of the log scheme for the sample `q`.
pub fn next_time_log<P: Plant + ?Sized>(
    p: &P,
    q: &[f64],
    quant: &LogQuantizer,
    cert: &Certificate,
    cfg: &StmLogConfig,
    dt_pred: f64,
) -> Result<LogTrigger> {
    check_dim(p.state_dim(), q.len())?;
    if !(dt_pred > 0.0) {
        return Err(invalid("dt_pred", "must be positive"));
    }
    let rho = quant.rho();
    let op = cert.norm_op();
    let threshold = cfg.sigma * cert.norm_cl().eval(q);
    let violated = |tau: f64, x: &[f64]| {
        if op.eval(x) >= cert.r2 {
            Some(TriggerCause::BallExit)
        } else if psi_log(tau, q, x, rho, cert) > threshold {
            Some(TriggerCause::Threshold)
        } else {
            None
        }
    };
    if violated(0.0, q).is_some() {
        return Err(Error::AssumptionViolated {
            which: "log trigger at the sampling instant",
            detail: "the triggering condition already holds at τ = 0".into(),
        });
    }
    let (tau, cause) = match first_violation(p, q, 0.0, cfg.tau_max, dt_pred, violated)? {
        Some((_, hi, cause)) => (hi.min(cfg.tau_max), cause),
        None => (cfg.tau_max, TriggerCause::MaxTime),
    };
    let tau = match &cfg.discretization {
        None => tau,
        Some(s) => s
            .iter()
            .copied()
            .filter(|v| *v <= tau)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
            .ok_or_else(|| Error::AssumptionViolated {
                which: "inter-sampling discretization",
                detail: format!("no allowed time is ≤ τ_k = {tau}"),
            })?,
    };
    Ok(LogTrigger { tau, cause })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomTrigger {
    pub ell: u32,
    pub cause: TriggerCause,
}

/// Number of periods `h` until the next zoom-scheme sample.
pub fn next_steps_zoom<P: Plant + ?Sized>(
    p: &P,
    q: &[f64],
    mu: f64,
    quant: &ZoomQuantizer,
    cert: &Certificate,
    cfg: &StmZoomConfig,
    dt_pred: f64,
) -> Result<ZoomTrigger> {
    check_dim(p.state_dim(), q.len())?;
    if !(dt_pred > 0.0) {
        return Err(invalid("dt_pred", "must be positive"));
    }
    let op = cert.norm_op();
    let threshold = cfg.sigma * quant.m() * mu;
    let violated = |tau: f64, x: &[f64]| {
        if op.eval(x) >= cert.r2 {
            Some(TriggerCause::BallExit)
        } else if psi_zoom(tau, q, x, mu, quant.delta(), cert) > threshold {
            Some(TriggerCause::Threshold)
        } else {
            None
        }
    };
    let end = cfg.tau_max();
    if end <= cfg.h {
        return Ok(ZoomTrigger {
            ell: cfg.ell_max,
            cause: TriggerCause::MaxTime,
        });
    }
    Ok(
        match first_violation(p, q, cfg.h, end, dt_pred, violated)? {
            // the crossing lies in (lo, hi]; flooring the compliant end never overshoots it
            Some((lo, _, cause)) => {
                let ell = ((lo / cfg.h) * (1.0 + 1e-12))
                    .floor()
                    .clamp(1.0, cfg.ell_max as f64) as u32;
                ZoomTrigger { ell, cause }
            }
            None => ZoomTrigger {
                ell: cfg.ell_max,
                cause: TriggerCause::MaxTime,
            },
        },
    )
}
