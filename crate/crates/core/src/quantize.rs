//! Logarithmic and zooming state quantizers.

use crate::certify::Certificate;
use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::check_weights;

/// Per-coordinate logarithmic quantizer with levels `χ_{i,j} = ρʲ χ₀ / θ_cl,i`, `j ∈ ℤ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogQuantizer {
    rho: f64,
    chi0: f64,
    theta_cl: Vec<f64>,
}

impl LogQuantizer {
    /// Builds the quantizer and checks `R/L_cl2 ≤ χ₀ < 2R/(L_cl2(1+ρ))` against `cert`.
    pub fn new(rho: f64, chi0: f64, cert: &Certificate) -> Result<Self> {
        let q = Self::unchecked(rho, chi0, cert.theta_cl.clone())?;
        let (lo, hi) = chi0_window(rho, cert);
        if !(chi0 >= lo && chi0 < hi) {
            return Err(Error::AssumptionViolated {
                which: "log quantizer base level window",
                detail: format!("need {lo} ≤ χ₀ < {hi}, got χ₀ = {chi0}"),
            });
        }
        Ok(q)
    }

    /// Builds the quantizer without any certificate check.
    pub fn unchecked(rho: f64, chi0: f64, theta_cl: Vec<f64>) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid("rho", format!("density {rho} must lie in (0, 1)")));
        }
        if !(chi0 > 0.0 && chi0.is_finite()) {
            return Err(invalid(
                "chi0",
                format!("base level {chi0} must be positive"),
            ));
        }
        check_weights(&theta_cl)?;
        Ok(Self {
            rho,
            chi0,
            theta_cl,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn chi0(&self) -> f64 {
        self.chi0
    }

    pub fn dim(&self) -> usize {
        self.theta_cl.len()
    }

    /// Quantizes one coordinate.
    pub fn scalar(&self, i: usize, x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() {
            return x;
        }
        let base = self.chi0 / self.theta_cl[i];
        let y = x.abs() / base;
        // j with ρ^{j+1} ≤ y < ρ^j
        let mut j = (y.ln() / self.rho.ln()).ceil() as i64 - 1;
        while self.rho.powi((j + 1) as i32) > y {
            j += 1;
        }
        while self.rho.powi(j as i32) <= y {
            j -= 1;
        }
        let level = base * self.rho.powi(j as i32) * (1.0 + self.rho) / 2.0;
        level.copysign(x)
    }

    pub fn quantize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| self.scalar(i, *v))
            .collect())
    }
}

/// `[R/L_cl2, 2R/(L_cl2(1+ρ)))`.
pub fn chi0_window(rho: f64, cert: &Certificate) -> (f64, f64) {
    (
        cert.r / cert.l_cl2,
        2.0 * cert.r / (cert.l_cl2 * (1.0 + rho)),
    )
}

pub fn q_log(x: &[f64], q: &LogQuantizer) -> Result<Vec<f64>> {
    q.quantize(x)
}

/// `λ₀ = (1+ρ) L_cl2 χ₀ / (2R)`.
pub fn lambda0_log(q: &LogQuantizer, cert: &Certificate) -> f64 {
    (1.0 + q.rho) * cert.l_cl2 * q.chi0 / (2.0 * cert.r)
}

/// Uniform quantizer scaled by a zoom parameter: `Q_μ(x) = μ Q(x/μ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomQuantizer {
    m: f64,
    delta: f64,
    mu: f64,
    theta_op: Vec<f64>,
}

impl ZoomQuantizer {
    /// Builds the quantizer at `μ = mu0` and checks `μ₀ < R/(M+ΓΔ)` against `cert`.
    pub fn new(m: f64, delta: f64, mu0: f64, cert: &Certificate) -> Result<Self> {
        let q = Self::unchecked(m, delta, mu0, cert.theta_op.clone())?;
        let bound = cert.r / (m + cert.gamma * delta);
        if !(mu0 < bound) {
            return Err(Error::AssumptionViolated {
                which: "zoom parameter start",
                detail: format!("need μ₀ < R/(M+ΓΔ) = {bound}, got μ₀ = {mu0}"),
            });
        }
        Ok(q)
    }

    pub fn unchecked(m: f64, delta: f64, mu: f64, theta_op: Vec<f64>) -> Result<Self> {
        for (name, v) in [("m", m), ("delta", delta), ("mu", mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        check_weights(&theta_op)?;
        Ok(Self {
            m,
            delta,
            mu,
            theta_op,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn set_mu(&mut self, mu: f64) -> Result<()> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("mu", format!("{mu} must be positive")));
        }
        self.mu = mu;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta_op.len()
    }

    /// Range of the quantizer in the `cl` norm, `Mμ`.
    pub fn range(&self) -> f64 {
        self.m * self.mu
    }

    /// Error bound in the `op` norm, `Δμ`.
    pub fn error_bound(&self) -> f64 {
        self.delta * self.mu
    }

    /// Unit-zoom quantizer: nearest multiple of `2Δ/θ_op,i`, ties away from zero.
    fn base(&self, i: usize, y: f64) -> f64 {
        let step = 2.0 * self.delta / self.theta_op[i];
        (y / step).round() * step
    }

    pub fn quantize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| self.mu * self.base(i, v / self.mu))
            .collect())
    }
}

pub fn q_zoom(x: &[f64], q: &ZoomQuantizer) -> Result<Vec<f64>> {
    q.quantize(x)
}

/// `λ = μ₀ (M + ΓΔ) / R`, with `μ₀` the quantizer's current zoom.
pub fn lambda_zoom(q: &ZoomQuantizer, cert: &Certificate) -> Result<f64> {
    let lambda = q.mu * (q.m + cert.gamma * q.delta) / cert.r;
    if !(lambda < 1.0) {
        return Err(Error::AssumptionViolated {
            which: "zoom parameter start",
            detail: format!("μ₀(M+ΓΔ)/R = {lambda} ≥ 1"),
        });
    }
    Ok(lambda)
}
