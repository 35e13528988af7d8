//! Fixed-step classical Runge–Kutta propagation under a held input.

use crate::error::{check_dim, invalid, Error, Result};
use crate::plant::Plant;

/// States on the grid `t0 + k·dt`, except that the last sample sits at `t_end`
/// when the duration is not a multiple of `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub dt: f64,
    pub t_end: f64,
    dim: usize,
    states: Vec<f64>,
    input_dim: usize,
    inputs: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, x0: &[f64]) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("step {dt} must be positive")));
        }
        if x0.is_empty() {
            return Err(invalid("x0", "empty state"));
        }
        Ok(Self {
            t0,
            dt,
            t_end: t0,
            dim: x0.len(),
            states: x0.to_vec(),
            input_dim: 0,
            inputs: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Input applied on `[time(k), time(k+1))`, if inputs were recorded.
    pub fn input(&self, k: usize) -> Option<&[f64]> {
        if self.input_dim == 0 {
            return None;
        }
        self.inputs
            .get(k * self.input_dim..(k + 1) * self.input_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.states.extend_from_slice(x);
        self.t_end = t;
    }

    pub(crate) fn push_input(&mut self, u: &[f64]) {
        self.input_dim = u.len();
        self.inputs.extend_from_slice(u);
    }

    pub(crate) fn reserve(&mut self, steps: usize) {
        self.states.reserve(steps * self.dim);
    }

    /// Linear interpolation between grid samples.
    pub fn at(&self, t: f64) -> Vec<f64> {
        if t <= self.t0 {
            return self.state(0).to_vec();
        }
        if t >= self.t_end {
            return self.last().to_vec();
        }
        let k = (((t - self.t0) / self.dt).floor() as usize).min(self.len() - 2);
        let (ta, tb) = (self.time(k), self.time(k + 1));
        let w = (t - ta) / (tb - ta);
        self.state(k)
            .iter()
            .zip(self.state(k + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }
}

/// Reusable RK4 stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// Advances `x` by `h` under constant input `u`.
    pub fn step<P: Plant + ?Sized>(
        &mut self,
        p: &P,
        x: &mut [f64],
        u: &[f64],
        h: f64,
    ) -> Result<()> {
        let n = x.len();
        p.field(x, u, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        p.field(&self.tmp, u, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        p.field(&self.tmp, u, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        p.field(&self.tmp, u, &mut self.k4)?;
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}

/// Number of full steps and the trailing partial step for `duration`.
pub(crate) fn split_duration(duration: f64, dt: f64) -> (usize, f64) {
    let ratio = duration / dt;
    let nearest = ratio.round();
    // durations that are a multiple of dt up to round-off get no sliver step
    if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
        (nearest as usize, 0.0)
    } else {
        let full = ratio.floor();
        (full as usize, duration - full * dt)
    }
}

/// Integrates `ẋ = f(x, g(q))` from `x0` over `[0, duration]`.
pub fn integrate_hold<P: Plant + ?Sized>(
    p: &P,
    q: &[f64],
    x0: &[f64],
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = p.state_dim();
    check_dim(n, q.len())?;
    check_dim(n, x0.len())?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(invalid(
            "duration",
            format!("{duration} must be finite and nonnegative"),
        ));
    }
    let mut traj = Trajectory::new(0.0, dt, x0)?;
    let mut u = vec![0.0; p.input_dim()];
    p.feedback(q, &mut u);
    let (full, rest) = split_duration(duration, dt);
    traj.reserve(full + 1);
    let mut rk = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut advance = |x: &mut Vec<f64>, h: f64, t: f64, traj: &mut Trajectory| -> Result<()> {
        rk.step(p, x, &u, h).map_err(|e| match e {
            Error::Domain { .. } => Error::BlowUp { time: t },
            other => other,
        })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: t });
        }
        traj.push_input(&u);
        traj.push(t, x);
        Ok(())
    };
    for k in 1..=full {
        advance(&mut x, dt, k as f64 * dt, &mut traj)?;
    }
    if rest > 0.0 {
        advance(&mut x, rest, duration, &mut traj)?;
    }
    Ok(traj)
}

/// Prediction `x_q` of the held-input loop started at the quantized sample itself.
pub fn predict<P: Plant + ?Sized>(p: &P, q: &[f64], duration: f64, dt: f64) -> Result<Trajectory> {
    integrate_hold(p, q, q, duration, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_lure, CertifyOptions};
    use crate::norms::Matrix;
    use crate::plant::{LurePlant, Nonlinearity, TwoTank};
    use crate::stm::{nu, tilde_tau_min};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tank() -> LurePlant {
        let k = Matrix::from_row_slice(1, 2, &[-0.7979, -0.6163]);
        TwoTank::new(2.0, 1.0)
            .unwrap()
            .lure(k)
            .unwrap()
            .with_region(0.45)
            .unwrap()
    }

    fn decay() -> LurePlant {
        let m = |v: f64| Matrix::from_row_slice(1, 1, &[v]);
        LurePlant::new(
            m(-1.0),
            m(1.0),
            m(0.0),
            vec![1.0],
            vec![1.0],
            Nonlinearity::Zero,
        )
        .unwrap()
    }

    #[test]
    fn equilibrium_stays_put() {
        let tr = integrate_hold(&tank(), &[0.0, 0.0], &[0.0, 0.0], 0.01, 1e-5).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!(tr.states().all(|x| x == [0.0, 0.0]));
        let pr = predict(&tank(), &[0.0, 0.0], 0.01, 1e-4).unwrap();
        assert!(pr.states().all(|x| x == [0.0, 0.0]));
    }

    #[test]
    fn single_step_matches_field() {
        let p = tank();
        let tr = integrate_hold(&p, &[0.1, -0.2], &[0.1, -0.2], 1e-5, 1e-5).unwrap();
        assert_eq!(tr.len(), 2);
        assert_abs_diff_eq!(tr.last()[0], 0.1 - 2.832e-6, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.input(0).unwrap()[0], 0.04347, epsilon = 1e-12);
    }

    #[test]
    fn exponential_decay() {
        let tr = integrate_hold(&decay(), &[0.0], &[1.0], 1.0, 1e-3).unwrap();
        assert_eq!(tr.len(), 1001);
        assert_abs_diff_eq!(tr.last()[0], (-1f64).exp(), epsilon = 1e-10);
        assert_eq!(tr.time(1000), 1.0);
    }

    #[test]
    fn partial_final_step() {
        let tr = integrate_hold(&decay(), &[0.0], &[1.0], 0.00105, 1e-3).unwrap();
        assert_eq!(tr.len(), 3);
        assert_eq!(tr.time(1), 1e-3);
        assert_eq!(tr.time(2), 0.00105);
        assert_abs_diff_eq!(tr.last()[0], (-0.00105f64).exp(), epsilon = 1e-14);
        let mid = tr.at(0.0005);
        assert_abs_diff_eq!(mid[0], (1.0 + tr.state(1)[0]) / 2.0, epsilon = 1e-15);
        assert_eq!(
            integrate_hold(&decay(), &[0.0], &[1.0], 0.0, 1e-3)
                .unwrap()
                .len(),
            1
        );
        assert!(integrate_hold(&decay(), &[0.0], &[1.0], -1.0, 1e-3).is_err());
        assert!(integrate_hold(&decay(), &[0.0], &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let m = |v: f64| Matrix::from_row_slice(1, 1, &[v]);
        let p = LurePlant::new(
            m(1e3),
            m(1.0),
            m(0.0),
            vec![1.0],
            vec![1.0],
            Nonlinearity::Zero,
        )
        .unwrap();
        match integrate_hold(&p, &[0.0], &[1.0], 10.0, 1e-2) {
            Err(Error::BlowUp { time }) => assert!(time > 0.0 && time < 10.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
        // leaving the square-root domain also counts
        let tr = integrate_hold(&tank(), &[0.0, 0.0], &[5.0, -5.0], 1.0, 1e-3);
        assert!(matches!(tr, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn quantized_start_stays_in_ball() {
        let p = tank();
        let cert = certify_lure(
            &p,
            0.4,
            0.0,
            &CertifyOptions {
                theta_cl: Some(vec![1.0, 0.518]),
                theta_op: Some(vec![1.0, 1.0]),
                ..Default::default()
            },
        )
        .unwrap();
        let tt = tilde_tau_min(0.9251, cert.d1, cert.d2).unwrap();
        let pr = predict(&p, &[0.107855, -0.1944], tt, 1e-4).unwrap();
        let op = cert.norm_op();
        assert!(pr.states().all(|x| op.eval(x) < cert.r2));
    }

    #[test]
    fn growth_and_incremental_bounds() {
        let p = tank();
        let cert = certify_lure(
            &p,
            0.4,
            0.0,
            &CertifyOptions {
                theta_cl: Some(vec![1.0, 0.518]),
                theta_op: Some(vec![1.0, 1.0]),
                ..Default::default()
            },
        )
        .unwrap();
        let op = cert.norm_op();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let pr = predict(&p, &q, 0.2, 1e-4).unwrap();
            let nq = op.eval(&q);
            for (k, x) in pr.states().enumerate() {
                if op.eval(x) >= cert.r2 || p.eta_dot(x).abs() >= p.r0 {
                    break;
                }
                let t = pr.time(k);
                assert!(op.eval_diff(x, &q) <= nu(t, cert.d1, cert.d2) * nq + 1e-15);
            }
            let x2 = [
                q[0] + rng.gen_range(-0.01..0.01),
                q[1] + rng.gen_range(-0.01..0.01),
            ];
            let other = integrate_hold(&p, &q, &x2, 0.2, 1e-4).unwrap();
            let d0 = op.eval_diff(&q, &x2);
            for k in (0..pr.len()).step_by(50) {
                let t = pr.time(k);
                assert!(
                    op.eval_diff(pr.state(k), other.state(k))
                        <= (cert.d1 * t).exp() * d0 * (1.0 + 1e-9)
                );
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let p = tank();
        let x0 = [0.1, -0.2];
        let dur = 1.0;
        let reference = integrate_hold(&p, &[0.05, -0.1], &x0, dur, 0.1 / 16.0).unwrap();
        let err = |h: f64| {
            let tr = integrate_hold(&p, &[0.05, -0.1], &x0, dur, h).unwrap();
            let r = reference.last();
            tr.last()
                .iter()
                .zip(r)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }
}
