//! Experiment files: one TOML document describing the plant, the
//! certificate inputs, both schemes, and the run grid.

use serde::{Deserialize, Serialize};

use crate::certify::{certify_lure, Certificate, CertifyOptions, KappaRounding};
use crate::error::{invalid, Error, Result};
use crate::norms::Matrix;
use crate::plant::{lqr_gain, LurePlant, Nonlinearity, TwoTank};
use crate::quantize::{LogQuantizer, ZoomQuantizer};
use crate::simulate::{run_ideal, run_log, run_zoom, Scheme, SimResult};
use crate::stm::{StmLogConfig, StmZoomConfig};

/// A feedback gain given as rows, or `"lqr"` for the Riccati gain with `Q = I`, `R = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    TwoTank {
        a: f64,
        h: f64,
        gain: GainSpec,
    },
    Lure {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        gain: GainSpec,
        xi: Vec<f64>,
        eta: Vec<f64>,
        phi: Nonlinearity,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSpec {
    pub c: f64,
    #[serde(default)]
    pub d1: f64,
    /// Slab half-width; omit for the whole space.
    pub r0: Option<f64>,
    pub theta_cl: Option<Vec<f64>>,
    pub theta_op: Option<Vec<f64>>,
    /// Decimals for outward rounding of the slope bounds; omit for exact bounds.
    pub kappa_decimals: Option<u32>,
    #[serde(default = "one")]
    pub sigma0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSpec {
    pub rho: f64,
    /// Defaults to the certificate's `R` at full precision.
    pub chi0: Option<f64>,
    pub sigma: f64,
    pub tau_max: f64,
    /// Defaults to `λ₀ + 10⁻⁴`.
    pub lambda: Option<f64>,
    pub discretization: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomSpec {
    pub m: f64,
    pub delta: f64,
    pub mu0: f64,
    pub h: f64,
    pub ell_max: u32,
    pub sigma: f64,
    /// Defaults to `μ₀(M+ΓΔ)/R`.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub dt_pred: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_scheme() -> Scheme {
    Scheme::Log
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub rho_min: f64,
    pub rho_max: f64,
    pub points: usize,
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self {
            rho_min: 0.5,
            rho_max: 1.0,
            points: 501,
        }
    }
}

impl RegionSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.rho_min];
        }
        (0..self.points)
            .map(|i| {
                self.rho_min + (self.rho_max - self.rho_min) * i as f64 / (self.points - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: String,
    /// Keep every `stride`-th grid row in trajectory files.
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub certificate: CertificateSpec,
    pub log: Option<LogSpec>,
    pub zoom: Option<ZoomSpec>,
    pub run: RunSpec,
    #[serde(default)]
    pub region: RegionSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be positive and finite")))
    }
}

fn matrix(name: &'static str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(invalid(
            name,
            "matrix rows must be nonempty and of equal length",
        ));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn gain(spec: &GainSpec, a: &Matrix, b: &Matrix) -> Result<Matrix> {
    match spec {
        GainSpec::Named(name) if name == "lqr" => lqr_gain(
            a,
            b,
            &Matrix::identity(a.nrows(), a.nrows()),
            &Matrix::identity(b.ncols(), b.ncols()),
        ),
        GainSpec::Named(other) => Err(invalid(
            "gain",
            format!("unknown gain \"{other}\" (expected \"lqr\" or rows)"),
        )),
        GainSpec::Rows(rows) => matrix("gain", rows),
    }
}

impl ExperimentConfig {
    /// Parses and checks everything that does not need a certificate.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.certificate;
        positive("certificate.c", c.c)?;
        if !(c.d1 >= 0.0 && c.d1.is_finite()) {
            return Err(invalid(
                "certificate.d1",
                format!("{} must be nonnegative", c.d1),
            ));
        }
        if let Some(r0) = c.r0 {
            positive("certificate.r0", r0)?;
        }
        positive("certificate.sigma0", c.sigma0)?;
        if let Some(l) = &self.log {
            if !(l.rho > 0.0 && l.rho < 1.0) {
                return Err(invalid("log.rho", format!("{} must lie in (0, 1)", l.rho)));
            }
            positive("log.sigma", l.sigma)?;
            positive("log.tau_max", l.tau_max)?;
            if let Some(chi0) = l.chi0 {
                positive("log.chi0", chi0)?;
            }
        }
        if let Some(z) = &self.zoom {
            positive("zoom.m", z.m)?;
            positive("zoom.delta", z.delta)?;
            positive("zoom.mu0", z.mu0)?;
            positive("zoom.h", z.h)?;
            positive("zoom.sigma", z.sigma)?;
            if z.ell_max == 0 {
                return Err(invalid("zoom.ell_max", "must be at least 1"));
            }
        }
        let r = &self.run;
        positive("run.horizon", r.horizon)?;
        positive("run.dt", r.dt)?;
        positive("run.dt_pred", r.dt_pred)?;
        if r.x0.is_empty() || r.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("run.x0", "must be a nonempty finite vector"));
        }
        match r.scheme {
            Scheme::Log if self.log.is_none() => {
                return Err(invalid(
                    "run.scheme",
                    "log scheme selected but [log] is missing",
                ))
            }
            Scheme::Zoom if self.zoom.is_none() => {
                return Err(invalid(
                    "run.scheme",
                    "zoom scheme selected but [zoom] is missing",
                ))
            }
            _ => {}
        }
        let g = &self.region;
        if !(g.rho_min > 0.0 && g.rho_min <= g.rho_max && g.rho_max <= 1.0 && g.points >= 1) {
            return Err(invalid(
                "region",
                "need 0 < rho_min ≤ rho_max ≤ 1 and points ≥ 1",
            ));
        }
        if self.output.stride == 0 {
            return Err(invalid("output.stride", "must be at least 1"));
        }
        Ok(())
    }

    pub fn build_plant(&self) -> Result<LurePlant> {
        let plant = match &self.plant {
            PlantSpec::TwoTank { a, h, gain: g } => {
                let tank = TwoTank::new(*a, *h)?;
                let (am, bm) = TwoTank::linear_part();
                tank.lure(gain(g, &am, &bm)?)?
            }
            PlantSpec::Lure {
                a,
                b,
                gain: g,
                xi,
                eta,
                phi,
            } => {
                let am = matrix("plant.a", a)?;
                let bm = matrix("plant.b", b)?;
                let k = gain(g, &am, &bm)?;
                LurePlant::new(am, bm, k, xi.clone(), eta.clone(), phi.clone())?
            }
        };
        match self.certificate.r0 {
            Some(r0) => plant.with_region(r0),
            None => Ok(plant),
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        let c = &self.certificate;
        CertifyOptions {
            theta_cl: c.theta_cl.clone(),
            theta_op: c.theta_op.clone(),
            kappa_rounding: c
                .kappa_decimals
                .map_or(KappaRounding::Exact, KappaRounding::Decimals),
            sigma0: c.sigma0,
        }
    }
}

/// A validated configuration with its plant and certificate.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: LurePlant,
    pub cert: Certificate,
}

impl Experiment {
    /// Builds the plant and computes the certificate.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let plant = config.build_plant()?;
        let cert = certify_lure(
            &plant,
            config.certificate.c,
            config.certificate.d1,
            &config.certify_options(),
        )?;
        Self::with_certificate(config, cert)
    }

    /// Uses a previously computed certificate after checking it fits the plant.
    pub fn with_certificate(config: ExperimentConfig, cert: Certificate) -> Result<Self> {
        let plant = config.build_plant()?;
        cert.validate()?;
        if cert.dim() != plant.a.nrows() || config.run.x0.len() != plant.a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: plant.a.nrows(),
                found: if cert.dim() != plant.a.nrows() {
                    cert.dim()
                } else {
                    config.run.x0.len()
                },
            });
        }
        Ok(Self {
            config,
            plant,
            cert,
        })
    }

    pub fn log_parts(&self) -> Result<(LogQuantizer, StmLogConfig)> {
        let spec = self
            .config
            .log
            .as_ref()
            .ok_or_else(|| invalid("log", "the configuration has no [log] section"))?;
        let q = LogQuantizer::new(spec.rho, spec.chi0.unwrap_or(self.cert.r), &self.cert)?;
        let mut stm = StmLogConfig::with_default_lambda(spec.sigma, spec.tau_max, &q, &self.cert);
        if let Some(l) = spec.lambda {
            stm.lambda = l;
        }
        stm.discretization = spec.discretization.clone();
        stm.validate(&q, &self.cert)?;
        Ok((q, stm))
    }

    pub fn zoom_parts(&self) -> Result<(ZoomQuantizer, StmZoomConfig)> {
        let spec = self
            .config
            .zoom
            .as_ref()
            .ok_or_else(|| invalid("zoom", "the configuration has no [zoom] section"))?;
        let q = ZoomQuantizer::new(spec.m, spec.delta, spec.mu0, &self.cert)?;
        let mut stm =
            StmZoomConfig::from_quantizer(spec.sigma, spec.h, spec.ell_max, &q, &self.cert)?;
        if let Some(l) = spec.lambda {
            stm.lambda = l;
        }
        stm.validate(&q, &self.cert)?;
        Ok((q, stm))
    }

    /// Checks every precondition of the chosen scheme without simulating.
    pub fn check(&self, scheme: Scheme) -> Result<()> {
        let x0 = &self.config.run.x0;
        let cl = self.cert.norm_cl();
        match scheme {
            Scheme::Log => {
                self.log_parts()?;
                let radius = self.cert.r / self.cert.l_cl;
                if !(cl.norm(x0)? < radius) {
                    return Err(Error::AssumptionViolated {
                        which: "initial state ball",
                        detail: format!("need ‖x0‖_cl < {radius}, got {}", cl.norm(x0)?),
                    });
                }
            }
            Scheme::Zoom => {
                let (q, _) = self.zoom_parts()?;
                if !(cl.norm(x0)? < q.range()) {
                    return Err(Error::AssumptionViolated {
                        which: "initial state ball",
                        detail: format!("need ‖x0‖_cl < Mμ₀ = {}, got {}", q.range(), cl.norm(x0)?),
                    });
                }
            }
            Scheme::Ideal => {}
        }
        Ok(())
    }

    pub fn run(&self, scheme: Scheme) -> Result<SimResult> {
        let r = &self.config.run;
        match scheme {
            Scheme::Log => {
                let (q, stm) = self.log_parts()?;
                run_log(
                    &self.plant,
                    &self.cert,
                    &q,
                    &stm,
                    &r.x0,
                    r.horizon,
                    r.dt,
                    r.dt_pred,
                )
            }
            Scheme::Zoom => {
                let (q, stm) = self.zoom_parts()?;
                run_zoom(
                    &self.plant,
                    &self.cert,
                    &q,
                    &stm,
                    &r.x0,
                    r.horizon,
                    r.dt,
                    r.dt_pred,
                )
            }
            Scheme::Ideal => {
                let mut sim = run_ideal(&self.plant, &r.x0, r.horizon, r.dt)?;
                sim.cert = Some(self.cert.clone());
                sim.verification = Some(crate::analysis::verify_theorem(&sim)?);
                Ok(sim)
            }
        }
    }
}

/// The two-tank experiment shipped with the tools.
pub const TWO_TANK_TOML: &str = include_str!("two_tank.toml");

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bundled_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(TWO_TANK_TOML).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.run.x0, vec![0.1, -0.2]);
        assert_eq!(cfg.zoom.as_ref().unwrap().ell_max, 180);
    }

    #[test]
    fn bundled_experiment_constants() {
        let exp = Experiment::new(ExperimentConfig::from_toml(TWO_TANK_TOML).unwrap()).unwrap();
        assert_abs_diff_eq!(exp.cert.d2, 2.8817, epsilon = 1e-4);
        let (q, stm) = exp.log_parts().unwrap();
        assert_eq!(q.chi0(), exp.cert.r);
        assert_abs_diff_eq!(stm.lambda, 0.9251, epsilon = 1e-12);
        let (_, z) = exp.zoom_parts().unwrap();
        assert_abs_diff_eq!(z.lambda, 0.98372, epsilon = 1e-5);
        exp.check(Scheme::Log).unwrap();
        exp.check(Scheme::Zoom).unwrap();
    }

    #[test]
    fn rejects_bad_fields() {
        let bad = TWO_TANK_TOML.replace("rho = 0.85", "rho = 1.5");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad),
            Err(Error::InvalidParameter {
                name: "log.rho",
                ..
            })
        ));
        let unknown = TWO_TANK_TOML.replace("[run]", "[run]\nbogus = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&unknown),
            Err(Error::Config(_))
        ));
        let gain = TWO_TANK_TOML.replace("gain = \"lqr\"", "gain = \"pole\"");
        let cfg = ExperimentConfig::from_toml(&gain).unwrap();
        assert!(cfg.build_plant().is_err());
    }

    #[test]
    fn out_of_window_sigma_is_named() {
        let cfg =
            ExperimentConfig::from_toml(&TWO_TANK_TOML.replace("sigma = 0.25", "sigma = 0.27"))
                .unwrap();
        let exp = Experiment::new(cfg).unwrap();
        match exp.check(Scheme::Log) {
            Err(Error::AssumptionViolated { which, detail }) => {
                assert_eq!(which, "log threshold window");
                assert!(detail.contains("off by"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn literal_lure_plant_with_printed_gain() {
        let text = TWO_TANK_TOML.replace(
            "kind = \"two_tank\"\na = 2.0\nh = 1.0\ngain = \"lqr\"",
            "kind = \"lure\"\na = [[-1.0, 1.0], [1.0, -1.0]]\nb = [[1.0], [0.0]]\ngain = [[-0.7979, -0.6163]]\nxi = [1.0, -1.0]\neta = [-1.0, 1.0]\nphi = { name = \"sqrt_shift\", a = 2.0, h = 1.0 }",
        );
        let exp = Experiment::new(ExperimentConfig::from_toml(&text).unwrap()).unwrap();
        assert_abs_diff_eq!(exp.cert.d2, 2.8816, epsilon = 1e-12);
    }

    #[test]
    fn region_grid_spans_interval() {
        let g = RegionSpec {
            rho_min: 0.5,
            rho_max: 1.0,
            points: 6,
        }
        .grid();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[5], 1.0);
    }
}
