//! Closed-loop runs: sample, quantize, hold, repeat.
//!
//! Every run lives on the fixed grid `t = n·dt`. Sampling instants are grid
//! indices, so interval bookkeeping is exact integer arithmetic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{verify_theorem, VerificationReport};
use crate::certify::Certificate;
use crate::error::{check_dim, invalid, Error, Result};
use crate::integrate::{Rk4, Trajectory};
use crate::plant::Plant;
use crate::quantize::{LogQuantizer, ZoomQuantizer};
use crate::stm::{
    next_steps_zoom, next_time_log, zoom_update, StmLogConfig, StmZoomConfig, TriggerCause,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Log,
    Zoom,
    Ideal,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Log => "log",
            Scheme::Zoom => "zoom",
            Scheme::Ideal => "ideal",
        }
    }
}

/// Parameters a run was produced with, kept for post-hoc verification.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeParams {
    Log {
        quantizer: LogQuantizer,
        stm: StmLogConfig,
    },
    Zoom {
        quantizer: ZoomQuantizer,
        stm: StmZoomConfig,
    },
    Ideal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRecord {
    pub k: usize,
    /// Grid index of `t_k`.
    pub index: usize,
    pub t_k: f64,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    /// Inter-sampling time requested by the mechanism (s).
    pub tau: f64,
    /// Grid steps actually held before the next sample (or the horizon).
    pub steps: usize,
    pub ell: Option<u32>,
    pub mu: Option<f64>,
    pub cause: TriggerCause,
    /// The horizon cut this interval short.
    pub truncated: bool,
    /// `‖x(t_k)‖_cl ≥ Mμ_k` (zoom only).
    pub range_violation: bool,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub scheme: Scheme,
    pub params: SchemeParams,
    pub trajectory: Trajectory,
    pub records: Vec<SamplingRecord>,
    pub cert: Option<Certificate>,
    pub horizon: f64,
    pub verification: Option<VerificationReport>,
}

impl SimResult {
    /// Sampling instants in `(0, horizon]`.
    pub fn sample_count(&self) -> usize {
        sample_count(&self.records, self.horizon)
    }

    pub fn range_violations(&self) -> usize {
        self.records.iter().filter(|r| r.range_violation).count()
    }
}

/// Counts records with `k ≥ 1` and `t_k ≤ horizon`.
pub fn sample_count(records: &[SamplingRecord], horizon: f64) -> usize {
    records
        .iter()
        .filter(|r| r.k >= 1 && r.t_k <= horizon * (1.0 + 1e-12))
        .count()
}

/// Exact number of `dt` steps in `span`, if it is an integer multiple.
fn grid_steps(name: &'static str, span: f64, dt: f64) -> Result<usize> {
    let ratio = span / dt;
    let n = ratio.round();
    if !(dt > 0.0) || !(span >= 0.0) || (ratio - n).abs() > 1e-6 {
        return Err(invalid(
            name,
            format!("{span} is not a whole number of steps of {dt}"),
        ));
    }
    Ok(n as usize)
}

struct Runner<'a, P: Plant + ?Sized> {
    p: &'a P,
    dt: f64,
    total: usize,
    x: Vec<f64>,
    n: usize,
    rk: Rk4,
    traj: Trajectory,
    u: Vec<f64>,
}

impl<'a, P: Plant + ?Sized> Runner<'a, P> {
    fn new(p: &'a P, x0: &[f64], horizon: f64, dt: f64) -> Result<Self> {
        check_dim(p.state_dim(), x0.len())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "non-finite initial state"));
        }
        let total = grid_steps("horizon", horizon, dt)?;
        let mut traj = Trajectory::new(0.0, dt, x0)?;
        traj.reserve(total + 1);
        Ok(Self {
            p,
            dt,
            total,
            x: x0.to_vec(),
            n: 0,
            rk: Rk4::new(x0.len()),
            traj,
            u: vec![0.0; p.input_dim()],
        })
    }

    fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    fn step_checked(&mut self) -> Result<()> {
        let t = (self.n + 1) as f64 * self.dt;
        self.rk
            .step(self.p, &mut self.x, &self.u, self.dt)
            .map_err(|e| match e {
                Error::Domain { .. } => Error::BlowUp { time: t },
                other => other,
            })?;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        self.traj.push_input(&self.u);
        self.n += 1;
        self.traj.push(t, &self.x);
        Ok(())
    }

    /// Holds `g(q)` for up to `steps` grid steps; returns the steps taken.
    fn hold(&mut self, q: &[f64], steps: usize) -> Result<usize> {
        self.p.feedback(q, &mut self.u);
        let take = steps.min(self.total - self.n);
        for _ in 0..take {
            self.step_checked()?;
        }
        Ok(take)
    }
}

/// Grid steps covered by `tau`, i.e. the grid point nearest below `t_k + τ`.
fn steps_below(tau: f64, dt: f64) -> usize {
    ((tau / dt) * (1.0 + 1e-12)).floor().max(1.0) as usize
}

/// Log-quantized self-triggered run on `[0, horizon]`.
pub fn run_log<P: Plant + ?Sized>(
    p: &P,
    cert: &Certificate,
    quant: &LogQuantizer,
    cfg: &StmLogConfig,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    dt_pred: f64,
) -> Result<SimResult> {
    let radius = cert.r / cert.l_cl;
    let n0 = cert.norm_cl().norm(x0)?;
    if !(n0 < radius) {
        return Err(Error::AssumptionViolated {
            which: "initial state ball",
            detail: format!("need ‖x0‖_cl < R/L_cl = {radius}, got {n0}"),
        });
    }
    cfg.validate(quant, cert)?;
    let mut run = Runner::new(p, x0, horizon, dt)?;
    let mut records = Vec::new();
    loop {
        let q = quant.quantize(&run.x)?;
        let trig = next_time_log(p, &q, quant, cert, cfg, dt_pred)?;
        let want = steps_below(trig.tau, dt);
        let rec_x = run.x.clone();
        let (index, t_k) = (run.n, run.time());
        let took = run.hold(&q, want)?;
        records.push(SamplingRecord {
            k: records.len(),
            index,
            t_k,
            x: rec_x,
            q,
            tau: trig.tau,
            steps: took,
            ell: None,
            mu: None,
            cause: trig.cause,
            truncated: took < want,
            range_violation: false,
        });
        if took < want {
            break;
        }
    }
    finish(
        Scheme::Log,
        SchemeParams::Log {
            quantizer: quant.clone(),
            stm: cfg.clone(),
        },
        run,
        records,
        cert,
        horizon,
    )
}

/// Zoom-quantized self-triggered run on `[0, horizon]`.
pub fn run_zoom<P: Plant + ?Sized>(
    p: &P,
    cert: &Certificate,
    quant: &ZoomQuantizer,
    cfg: &StmZoomConfig,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    dt_pred: f64,
) -> Result<SimResult> {
    let n0 = cert.norm_cl().norm(x0)?;
    if !(n0 < quant.range()) {
        return Err(Error::AssumptionViolated {
            which: "initial state ball",
            detail: format!("need ‖x0‖_cl < Mμ₀ = {}, got {n0}", quant.range()),
        });
    }
    cfg.validate(quant, cert)?;
    let per_period = grid_steps("h", cfg.h, dt)?;
    if per_period == 0 {
        return Err(invalid("h", "period shorter than the simulation step"));
    }
    let mut q_zoom = quant.clone();
    let mut run = Runner::new(p, x0, horizon, dt)?;
    let mut records = Vec::new();
    loop {
        let mu = q_zoom.mu();
        let range_violation = !(cert.norm_cl().eval(&run.x) < q_zoom.range());
        let q = q_zoom.quantize(&run.x)?;
        let trig = next_steps_zoom(p, &q, mu, quant, cert, cfg, dt_pred)?;
        let want = trig.ell as usize * per_period;
        let rec_x = run.x.clone();
        let (index, t_k) = (run.n, run.time());
        let took = run.hold(&q, want)?;
        records.push(SamplingRecord {
            k: records.len(),
            index,
            t_k,
            x: rec_x,
            q,
            tau: trig.ell as f64 * cfg.h,
            steps: took,
            ell: Some(trig.ell),
            mu: Some(mu),
            cause: trig.cause,
            truncated: took < want,
            range_violation,
        });
        if took < want {
            break;
        }
        q_zoom.set_mu(zoom_update(mu, trig.ell as f64 * cfg.h, cert, cfg.sigma)?)?;
    }
    finish(
        Scheme::Zoom,
        SchemeParams::Zoom {
            quantizer: quant.clone(),
            stm: cfg.clone(),
        },
        run,
        records,
        cert,
        horizon,
    )
}

/// The ideal loop `u = g(x(t))`, integrated with the same RK4 grid.
pub fn run_ideal<P: Plant + ?Sized>(p: &P, x0: &[f64], horizon: f64, dt: f64) -> Result<SimResult> {
    check_dim(p.state_dim(), x0.len())?;
    let total = grid_steps("horizon", horizon, dt)?;
    let ideal = IdealLoop(p);
    let mut traj = Trajectory::new(0.0, dt, x0)?;
    traj.reserve(total + 1);
    let mut rk = Rk4::new(x0.len());
    let mut x = x0.to_vec();
    let mut u = vec![0.0; p.input_dim()];
    for n in 1..=total {
        let t = n as f64 * dt;
        // recorded input is g(x) at the start of the step
        p.feedback(&x, &mut u);
        traj.push_input(&u);
        rk.step(&ideal, &mut x, &[], dt).map_err(|e| match e {
            Error::Domain { .. } => Error::BlowUp { time: t },
            other => other,
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        traj.push(t, &x);
    }
    Ok(SimResult {
        scheme: Scheme::Ideal,
        params: SchemeParams::Ideal,
        trajectory: traj,
        records: Vec::new(),
        cert: None,
        horizon,
        verification: None,
    })
}

fn finish<P: Plant + ?Sized>(
    scheme: Scheme,
    params: SchemeParams,
    run: Runner<'_, P>,
    records: Vec<SamplingRecord>,
    cert: &Certificate,
    horizon: f64,
) -> Result<SimResult> {
    let mut sim = SimResult {
        scheme,
        params,
        trajectory: run.traj,
        records,
        cert: Some(cert.clone()),
        horizon,
        verification: None,
    };
    sim.verification = Some(verify_theorem(&sim)?);
    Ok(sim)
}

/// `f(x, g(x))` seen as a plant without inputs.
struct IdealLoop<'a, P: Plant + ?Sized>(&'a P);

impl<P: Plant + ?Sized> Plant for IdealLoop<'_, P> {
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn field(&self, x: &[f64], _u: &[f64], dx: &mut [f64]) -> Result<()> {
        let mut u = vec![0.0; self.0.input_dim()];
        self.0.feedback(x, &mut u);
        self.0.field(x, &u, dx)
    }

    fn feedback(&self, _x: &[f64], _u: &mut [f64]) {}
}

/// Runs independent jobs on a pool of `threads` workers (0 = all cores).
/// Results keep the order of `jobs`.
pub fn sweep<T, R, F>(jobs: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
}
