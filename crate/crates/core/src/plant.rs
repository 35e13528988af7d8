//! Plant models: a generic `ẋ = f(x, u)` with state feedback `u = g(x)`,
//! the rank-one Lur'e form and the two-tank example.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::norms::Matrix;

/// Step of the central differences used when no analytic Jacobian exists.
pub const FD_STEP: f64 = 1e-6;

/// A controlled vector field with a state-feedback law.
pub trait Plant: Send + Sync {
    fn state_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// Writes `f(x, u)` into `dx`.
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Writes `g(x)` into `u`.
    fn feedback(&self, x: &[f64], u: &mut [f64]);

    /// Jacobian of the ideal closed loop `F₀(x) = f(x, g(x))`.
    fn closed_loop_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        finite_difference_jacobian(x, |y, out| eval_ideal_into(self, y, out))
    }
}

/// `f(x, u)`.
pub fn eval_f<P: Plant + ?Sized>(p: &P, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.state_dim(), x.len())?;
    check_dim(p.input_dim(), u.len())?;
    let mut dx = vec![0.0; x.len()];
    p.field(x, u, &mut dx)?;
    Ok(dx)
}

/// `g(x)`.
pub fn eval_g<P: Plant + ?Sized>(p: &P, x: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; p.input_dim()];
    p.feedback(x, &mut u);
    u
}

/// `F(x, e) = f(x, g(x + e))`: the loop driven by a measurement error `e`.
pub fn eval_closed<P: Plant + ?Sized>(p: &P, x: &[f64], e: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.state_dim(), x.len())?;
    check_dim(p.state_dim(), e.len())?;
    let measured: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + b).collect();
    eval_f(p, x, &eval_g(p, &measured))
}

/// `F₀(x) = F(x, 0)`.
pub fn eval_ideal<P: Plant + ?Sized>(p: &P, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.state_dim(), x.len())?;
    let mut dx = vec![0.0; x.len()];
    eval_ideal_into(p, x, &mut dx)?;
    Ok(dx)
}

fn eval_ideal_into<P: Plant + ?Sized>(p: &P, x: &[f64], dx: &mut [f64]) -> Result<()> {
    let u = eval_g(p, x);
    p.field(x, &u, dx)
}

/// `f_q(x) = f(x, g(q))`: the open loop under a held input.
pub fn eval_held<P: Plant + ?Sized>(p: &P, x: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.state_dim(), q.len())?;
    eval_f(p, x, &eval_g(p, q))
}

/// Rejects plants whose origin is not an equilibrium of the ideal loop.
pub fn check_equilibrium<P: Plant + ?Sized>(p: &P) -> Result<()> {
    let zero = vec![0.0; p.state_dim()];
    let dx = eval_ideal(p, &zero)?;
    let worst = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst > 1e-12 {
        return Err(Error::AssumptionViolated {
            which: "equilibrium f(0, g(0)) = 0",
            detail: format!("|f(0, g(0))|_max = {worst:e}"),
        });
    }
    Ok(())
}

/// Central-difference Jacobian of `h` at `x`.
pub fn finite_difference_jacobian(
    x: &[f64],
    mut h: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
) -> Result<Matrix> {
    let n = x.len();
    let mut jac = Matrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        xp[j] = x[j] + FD_STEP;
        h(&xp, &mut fp)?;
        xp[j] = x[j] - FD_STEP;
        h(&xp, &mut fm)?;
        xp[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
        }
    }
    Ok(jac)
}

/// Built-in scalar nonlinearities for Lur'e plants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `a√(h + z) − a√h − z`, the tank outflow minus its linear part.
    SqrtShift {
        a: f64,
        h: f64,
    },
    /// `slope · z`.
    Linear {
        slope: f64,
    },
    /// `gain · tanh(z)`.
    Tanh {
        gain: f64,
    },
    Zero,
}

impl Nonlinearity {
    pub fn phi(&self, z: f64) -> Result<f64> {
        Ok(match *self {
            Nonlinearity::SqrtShift { a, h } => {
                if h + z < 0.0 {
                    return Err(Error::Domain { z });
                }
                a * (h + z).sqrt() - a * h.sqrt() - z
            }
            Nonlinearity::Linear { slope } => slope * z,
            Nonlinearity::Tanh { gain } => gain * z.tanh(),
            Nonlinearity::Zero => 0.0,
        })
    }

    pub fn phi_prime(&self, z: f64) -> Result<f64> {
        Ok(match *self {
            Nonlinearity::SqrtShift { a, h } => {
                if h + z <= 0.0 {
                    return Err(Error::Domain { z });
                }
                a / (2.0 * (h + z).sqrt()) - 1.0
            }
            Nonlinearity::Linear { slope } => slope,
            Nonlinearity::Tanh { gain } => gain / z.cosh().powi(2),
            Nonlinearity::Zero => 0.0,
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Nonlinearity::SqrtShift { a, h } if !(a > 0.0 && h > 0.0) => Err(invalid(
                "sqrt_shift",
                format!("needs a > 0 and h > 0 (a = {a}, h = {h})"),
            )),
            _ => Ok(()),
        }
    }
}

/// `ẋ = Ax + Bu + ξ φ(ηᵀx)` with `u = Kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LurePlant {
    pub a: Matrix,
    pub b: Matrix,
    pub k: Matrix,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub phi: Nonlinearity,
    /// Half-width of the slab `|ηᵀx| < R₀` on which slope bounds are taken.
    pub r0: f64,
}

impl LurePlant {
    pub fn new(
        a: Matrix,
        b: Matrix,
        k: Matrix,
        xi: Vec<f64>,
        eta: Vec<f64>,
        phi: Nonlinearity,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim(n, a.ncols())?;
        check_dim(n, b.nrows())?;
        check_dim(b.ncols(), k.nrows())?;
        check_dim(n, k.ncols())?;
        check_dim(n, xi.len())?;
        check_dim(n, eta.len())?;
        if xi.iter().all(|v| *v == 0.0) || eta.iter().all(|v| *v == 0.0) {
            return Err(invalid("xi/eta", "ξ and η must be nonzero"));
        }
        phi.validate()?;
        let phi0 = phi.phi(0.0)?;
        if phi0.abs() > 1e-12 {
            return Err(invalid("phi", format!("φ(0) = {phi0} ≠ 0")));
        }
        let plant = Self {
            a,
            b,
            k,
            xi,
            eta,
            phi,
            r0: f64::INFINITY,
        };
        check_equilibrium(&plant)?;
        Ok(plant)
    }

    pub fn with_region(mut self, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(invalid(
                "r0",
                format!("R₀ = {r0} must be positive (∞ allowed)"),
            ));
        }
        self.r0 = r0;
        Ok(self)
    }

    /// `A + BK`.
    pub fn closed_loop_linear(&self) -> Matrix {
        &self.a + &self.b * &self.k
    }

    /// `ξηᵀ`.
    pub fn rank_one(&self) -> Matrix {
        let n = self.xi.len();
        Matrix::from_fn(n, n, |i, j| self.xi[i] * self.eta[j])
    }

    pub fn eta_dot(&self, x: &[f64]) -> f64 {
        self.eta.iter().zip(x).map(|(e, v)| e * v).sum()
    }
}

impl Plant for LurePlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let n = self.state_dim();
        let nl = self.phi.phi(self.eta_dot(x))?;
        for i in 0..n {
            let mut acc = self.xi[i] * nl;
            for j in 0..n {
                acc += self.a[(i, j)] * x[j];
            }
            for (j, uj) in u.iter().enumerate() {
                acc += self.b[(i, j)] * uj;
            }
            dx[i] = acc;
        }
        Ok(())
    }

    fn feedback(&self, x: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = (0..x.len()).map(|j| self.k[(i, j)] * x[j]).sum();
        }
    }

    fn closed_loop_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let slope = self.phi.phi_prime(self.eta_dot(x))?;
        Ok(self.closed_loop_linear() + self.rank_one() * slope)
    }
}

/// Two tanks of equal cross-section joined by a pipe with flow constant `a`
/// and nominal level difference `h`; the input is the inflow to tank 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTank {
    pub a: f64,
    pub h: f64,
}

impl TwoTank {
    pub fn new(a: f64, h: f64) -> Result<Self> {
        if !(a > 0.0 && h > 0.0) {
            return Err(invalid(
                "two_tank",
                format!("needs a > 0 and H > 0 (a = {a}, H = {h})"),
            ));
        }
        Ok(Self { a, h })
    }

    /// Pipe flow deviation `Φ(z) = a√(H + z) − a√H`, defined for `z ≥ −H`.
    pub fn flow(&self, z: f64) -> Result<f64> {
        if self.h + z < 0.0 {
            return Err(Error::Domain { z });
        }
        Ok(self.a * (self.h + z).sqrt() - self.a * self.h.sqrt())
    }

    /// Tank equations in their original form.
    pub fn rhs(&self, x: [f64; 2], u: f64) -> Result<[f64; 2]> {
        let q = self.flow(x[1] - x[0])?;
        Ok([q + u, -q])
    }

    /// The same dynamics in Lur'e form, closed with the gain `k` (1×2).
    pub fn lure(&self, k: Matrix) -> Result<LurePlant> {
        LurePlant::new(
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            k,
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            Nonlinearity::SqrtShift {
                a: self.a,
                h: self.h,
            },
        )
    }

    /// Linear part `(A, B)` of the Lur'e form.
    pub fn linear_part() -> (Matrix, Matrix) {
        (
            Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
    }
}

/// Convenience wrapper around [`TwoTank::lure`].
pub fn lure_from_two_tank(t: &TwoTank, k: Matrix) -> Result<LurePlant> {
    t.lure(k)
}

/// Infinite-horizon LQR gain `K = −R⁻¹BᵀP` (so that `u = Kx`), with `P`
/// the stabilizing solution of the continuous algebraic Riccati equation.
/// `P` is recovered from the matrix sign of the Hamiltonian.
pub fn lqr_gain(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let m = b.ncols();
    check_dim(n, a.ncols())?;
    check_dim(n, b.nrows())?;
    check_dim(n, q.nrows())?;
    check_dim(m, r.nrows())?;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("lqr", "input weight R is singular"))?;
    let g = b * &r_inv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| invalid("lqr", "Hamiltonian has eigenvalues on the imaginary axis"))?;
        // determinant scaling speeds up the early Newton steps
        let det = z.determinant().abs();
        let scale = if det > 0.0 {
            det.powf(-1.0 / (2 * n) as f64)
        } else {
            1.0
        };
        let next = (&z * scale + inv / scale) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if change <= 1e-13 * z.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(invalid("lqr", "sign iteration did not converge"));
    }
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = Matrix::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| invalid("lqr", e.to_string()))?;
    let p = (&p + p.transpose()) * 0.5;
    Ok(-(r_inv * b.transpose() * p))
}
