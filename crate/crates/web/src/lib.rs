//! Browser bindings. Each operation returns a JSON document with ready-made
//! SVG markup, so the page only swaps `innerHTML`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use qstc::analysis::stabilizable_region;
use qstc::config::{Experiment, ExperimentConfig, TWO_TANK_TOML};
use qstc::report;
use qstc::simulate::{Scheme, SimResult};

/// Grid step used in the browser; coarser than the batch runs.
pub const DEMO_DT: f64 = 1e-4;
pub const DEMO_HORIZON: f64 = 6.0;
/// Plotted points per trajectory.
const PLOT_POINTS: usize = 1200;

#[derive(Debug, Serialize)]
pub struct RegionView {
    pub svg: String,
    pub rho_min: Option<f64>,
    pub sigma_at_crossing: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ClaimView {
    pub name: &'static str,
    pub bound: String,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct RunView {
    pub scheme: &'static str,
    pub samples: usize,
    pub min_interval: Option<f64>,
    pub passed: bool,
    pub claims: Vec<ClaimView>,
    pub state_svg: String,
    pub interval_svg: String,
}

fn run_view(sim: &SimResult) -> RunView {
    let rep = sim.verification.as_ref();
    RunView {
        scheme: sim.scheme.as_str(),
        samples: sim.sample_count(),
        min_interval: rep.and_then(|r| r.min_interval),
        passed: rep.is_some_and(|r| r.passed()),
        claims: rep
            .map(|r| {
                r.claims
                    .iter()
                    .map(|c| ClaimView {
                        name: c.name,
                        bound: c.bound.clone(),
                        margin: c.margin,
                        pass: c.pass,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        state_svg: report::state_chart(sim, (sim.trajectory.len() / PLOT_POINTS).max(1)).to_svg(),
        interval_svg: report::interval_chart(sim).to_svg(),
    }
}

/// The two-tank experiment, certified once and reused by every call.
#[wasm_bindgen]
pub struct Lab {
    exp: Experiment,
}

impl Lab {
    pub fn create() -> qstc::Result<Self> {
        let mut config = ExperimentConfig::from_toml(TWO_TANK_TOML)?;
        config.run.dt = DEMO_DT;
        config.run.horizon = DEMO_HORIZON;
        Ok(Self {
            exp: Experiment::new(config)?,
        })
    }

    pub fn region_view(&self, points: usize) -> qstc::Result<RegionView> {
        let n = points.clamp(2, 2000);
        let grid: Vec<f64> = (1..=n).map(|i| 0.5 + 0.5 * i as f64 / n as f64).collect();
        let region = stabilizable_region(&grid, &self.exp.cert)?;
        Ok(RegionView {
            svg: report::region_chart(&region).to_svg(),
            rho_min: region.crossing.map(|c| c.0),
            sigma_at_crossing: region.crossing.map(|c| c.1),
        })
    }

    pub fn log_view(&self, rho: f64, sigma: f64, x0: [f64; 2]) -> qstc::Result<RunView> {
        let mut exp = self.exp.clone();
        let log = exp.config.log.as_mut().expect("bundled config has [log]");
        log.rho = rho;
        log.sigma = sigma;
        exp.config.run.x0 = x0.to_vec();
        exp.config.validate()?;
        exp.check(Scheme::Log)?;
        Ok(run_view(&exp.run(Scheme::Log)?))
    }

    pub fn zoom_view(&self, sigma: f64, ell_max: u32, x0: [f64; 2]) -> qstc::Result<RunView> {
        let mut exp = self.exp.clone();
        let zoom = exp.config.zoom.as_mut().expect("bundled config has [zoom]");
        zoom.sigma = sigma;
        zoom.ell_max = ell_max;
        exp.config.run.x0 = x0.to_vec();
        exp.config.validate()?;
        exp.check(Scheme::Zoom)?;
        Ok(run_view(&exp.run(Scheme::Zoom)?))
    }
}

fn to_js<T: Serialize>(r: qstc::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
impl Lab {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Lab, JsError> {
        Lab::create().map_err(|e| JsError::new(&e.to_string()))
    }

    /// Table of certificate values, four decimals.
    pub fn certificate(&self) -> String {
        self.exp.cert.summary()
    }

    pub fn region(&self, points: usize) -> Result<String, JsError> {
        to_js(self.region_view(points))
    }

    pub fn simulate_log(&self, rho: f64, sigma: f64, x1: f64, x2: f64) -> Result<String, JsError> {
        to_js(self.log_view(rho, sigma, [x1, x2]))
    }

    pub fn simulate_zoom(
        &self,
        sigma: f64,
        ell_max: u32,
        x1: f64,
        x2: f64,
    ) -> Result<String, JsError> {
        to_js(self.zoom_view(sigma, ell_max, [x1, x2]))
    }
}
