//! Diagonally-weighted vector norms and the matrix quantities derived from
//! them: induced norms, Metzler majorants and logarithmic norms.
//!
//! Working norms are of the form `‖x‖ = ‖diag(θ) x‖_r`. Matrix measures and
//! induced norms are only provided for `r = ∞`, where both have closed forms
//! in terms of weighted row sums.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub type Matrix = DMatrix<f64>;

/// Exponent `r` of an `r`-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn one() -> Self {
        Exponent::Finite(1.0)
    }

    pub fn two() -> Self {
        Exponent::Finite(2.0)
    }
}

/// `x ↦ ‖diag(weights) x‖_r` with strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    weights: Vec<f64>,
    exponent: Exponent,
}

impl WeightedNorm {
    pub fn new(weights: Vec<f64>, exponent: Exponent) -> Result<Self> {
        check_weights(&weights)?;
        if let Exponent::Finite(r) = exponent {
            if !(r >= 1.0) || !r.is_finite() {
                return Err(invalid("exponent", format!("r = {r} is not in [1, ∞)")));
            }
        }
        Ok(Self { weights, exponent })
    }

    /// Weighted ∞-norm, the working norm of the certification routines.
    pub fn inf(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights, Exponent::Infinity)
    }

    /// `‖x‖_{1,[θ]^{-1}}`, the dual of the weighted ∞-norm with weights `θ`.
    pub fn dual_of_inf(theta: &[f64]) -> Result<Self> {
        check_weights(theta)?;
        Self::new(theta.iter().map(|t| 1.0 / t).collect(), Exponent::one())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval(x))
    }

    /// Unchecked evaluation for hot loops; the caller guarantees the length.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        let scaled = self.weights.iter().zip(x).map(|(w, v)| (w * v).abs());
        match self.exponent {
            Exponent::Infinity => scaled.fold(0.0, f64::max),
            Exponent::Finite(r) if r == 1.0 => scaled.sum(),
            Exponent::Finite(r) if r == 2.0 => scaled.map(|v| v * v).sum::<f64>().sqrt(),
            Exponent::Finite(r) => {
                // Rescale by the largest entry to avoid overflow for large r.
                let xs: Vec<f64> = scaled.collect();
                let peak = xs.iter().cloned().fold(0.0, f64::max);
                if peak == 0.0 {
                    return 0.0;
                }
                peak * xs
                    .iter()
                    .map(|v| (v / peak).powf(r))
                    .sum::<f64>()
                    .powf(1.0 / r)
            }
        }
    }

    /// Distance `‖x - y‖` without allocating.
    #[inline]
    pub fn eval_diff(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.exponent {
            Exponent::Infinity => self
                .weights
                .iter()
                .zip(x.iter().zip(y))
                .map(|(w, (a, b))| (w * (a - b)).abs())
                .fold(0.0, f64::max),
            _ => {
                let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                self.eval(&d)
            }
        }
    }

    /// Induced matrix norm. Only available for the weighted ∞-norm.
    pub fn induced(&self, a: &Matrix) -> Result<f64> {
        self.require_inf("induced norm")?;
        induced_norm_weighted_inf(a, &self.weights)
    }

    /// Logarithmic norm (matrix measure). Only available for the weighted ∞-norm.
    pub fn log_norm(&self, a: &Matrix) -> Result<f64> {
        self.require_inf("logarithmic norm")?;
        log_norm_weighted_inf(a, &self.weights)
    }

    fn require_inf(&self, what: &str) -> Result<()> {
        match self.exponent {
            Exponent::Infinity => Ok(()),
            Exponent::Finite(r) => Err(invalid(
                "exponent",
                format!("{what} has a closed form only for r = ∞ (got r = {r})"),
            )),
        }
    }
}

pub(crate) fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(invalid("weights", "empty weight vector"));
    }
    if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(invalid(
            "weights",
            format!("weight {bad} is not a positive finite number"),
        ));
    }
    Ok(())
}

fn check_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// `‖x‖_{r,[θ]}`.
pub fn weighted_norm(x: &[f64], nrm: &WeightedNorm) -> Result<f64> {
    nrm.norm(x)
}

/// Keeps the diagonal and replaces every off-diagonal entry by its absolute value.
pub fn metzler_majorant(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        if i == j {
            a[(i, j)]
        } else {
            a[(i, j)].abs()
        }
    })
}

/// `max_i ( Ã_ii + Σ_{j≠i} |Ã_ij| )` with `Ã = [θ] A [θ]^{-1}`.
pub fn log_norm_weighted_inf(a: &Matrix, theta: &[f64]) -> Result<f64> {
    let n = check_square(a)?;
    check_dim(n, theta.len())?;
    check_weights(theta)?;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let scaled = theta[i] * a[(i, j)] / theta[j];
                    if i == j {
                        scaled
                    } else {
                        scaled.abs()
                    }
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `‖[θ] A [θ]^{-1}‖_∞`, the norm induced by `‖·‖_{∞,[θ]}`.
pub fn induced_norm_weighted_inf(a: &Matrix, theta: &[f64]) -> Result<f64> {
    let n = check_square(a)?;
    check_dim(n, theta.len())?;
    check_weights(theta)?;
    Ok(scaled_row_sum_max(a, theta, theta))
}

/// `‖[row_w] A [col_w]^{-1}‖_∞` for a possibly rectangular `A`.
pub(crate) fn scaled_row_sum_max(a: &Matrix, row_w: &[f64], col_w: &[f64]) -> f64 {
    (0..a.nrows())
        .map(|i| {
            (0..a.ncols())
                .map(|j| (row_w[i] * a[(i, j)] / col_w[j]).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Smallest `Γ` with `‖x‖_{∞,[θ_op]} ≤ Γ ‖x‖_{∞,[θ_cl]}` for all `x`.
pub fn gamma_constant(theta_cl: &[f64], theta_op: &[f64]) -> Result<f64> {
    check_dim(theta_cl.len(), theta_op.len())?;
    check_weights(theta_cl)?;
    check_weights(theta_op)?;
    Ok(theta_op
        .iter()
        .zip(theta_cl)
        .map(|(o, c)| o / c)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m2(a: [[f64; 2]; 2]) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
    }

    #[test]
    fn unweighted_inf_norm() {
        let n = WeightedNorm::inf(vec![1.0, 1.0]).unwrap();
        assert_eq!(n.norm(&[1.0, -2.0]).unwrap(), 2.0);
        assert_eq!(n.norm(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dual_norm_of_eta_two_tank() {
        let n = WeightedNorm::dual_of_inf(&[1.0, 0.5180]).unwrap();
        let v = n.norm(&[-1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0 + 1.0 / 0.518, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.9305, epsilon = 1e-4);
        assert_abs_diff_eq!(0.45 / v, 0.1536, epsilon = 1e-4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let n = WeightedNorm::inf(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            n.norm(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        );
        assert!(gamma_constant(&[1.0], &[1.0, 2.0]).is_err());
        assert!(log_norm_weighted_inf(&Matrix::identity(2, 2), &[1.0]).is_err());
    }

    #[test]
    fn rejects_bad_weights_and_exponents() {
        assert!(WeightedNorm::inf(vec![1.0, 0.0]).is_err());
        assert!(WeightedNorm::inf(vec![1.0, -1.0]).is_err());
        assert!(WeightedNorm::new(vec![1.0], Exponent::Finite(0.5)).is_err());
        let two = WeightedNorm::new(vec![1.0], Exponent::two()).unwrap();
        assert!(two.log_norm(&Matrix::identity(1, 1)).is_err());
    }

    #[test]
    fn finite_exponents() {
        let x = [3.0, -4.0];
        let w = vec![1.0, 1.0];
        assert_eq!(
            WeightedNorm::new(w.clone(), Exponent::two())
                .unwrap()
                .eval(&x),
            5.0
        );
        assert_eq!(
            WeightedNorm::new(w.clone(), Exponent::one())
                .unwrap()
                .eval(&x),
            7.0
        );
        let r3 = WeightedNorm::new(w, Exponent::Finite(3.0))
            .unwrap()
            .eval(&x);
        assert_abs_diff_eq!(r3, (27.0f64 + 64.0).powf(1.0 / 3.0), epsilon = 1e-12);
    }

    #[test]
    fn metzler_majorant_examples() {
        let a = m2([[-1.0, 1.0], [1.0, -1.0]]);
        assert_eq!(metzler_majorant(&a), a);
        let b = m2([[-2.0, -3.0], [0.5, -1.0]]);
        assert_eq!(metzler_majorant(&b), m2([[-2.0, 3.0], [0.5, -1.0]]));
        // (A + BK) + κ_min ξηᵀ for the two-tank loop with the printed gain.
        let c = m2([
            [-1.0 - 0.7979 + 0.17, 1.0 - 0.6163 - 0.17],
            [1.0 - 0.17, -1.0 + 0.17],
        ]);
        let mc = metzler_majorant(&c);
        assert_eq!(mc, c);
        assert_abs_diff_eq!(mc[(0, 0)], -1.6279, epsilon = 1e-12);
        assert_abs_diff_eq!(mc[(0, 1)], 0.2137, epsilon = 1e-12);
        assert_abs_diff_eq!(mc[(1, 0)], 0.83, epsilon = 1e-12);
    }

    #[test]
    fn log_norm_examples() {
        let a = m2([[-1.0, 1.0], [1.0, -1.0]]);
        assert_eq!(log_norm_weighted_inf(&a, &[1.0, 1.0]).unwrap(), 0.0);
        for theta in [[1.0, 1.0], [2.0, 0.3], [0.1, 7.0]] {
            assert_abs_diff_eq!(
                log_norm_weighted_inf(&Matrix::identity(2, 2), &theta).unwrap(),
                1.0,
                epsilon = 1e-15
            );
        }
        let endpoint = m2([[-0.83, 0.83], [0.83, -0.83]]);
        assert_abs_diff_eq!(
            log_norm_weighted_inf(&endpoint, &[1.0, 1.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gamma_examples() {
        assert_abs_diff_eq!(
            gamma_constant(&[1.0, 0.5180], &[1.0, 1.0]).unwrap(),
            1.9305,
            epsilon = 1e-4
        );
        assert_eq!(gamma_constant(&[0.3, 2.0], &[0.3, 2.0]).unwrap(), 1.0);
        assert_eq!(gamma_constant(&[2.0, 1.0], &[1.0, 3.0]).unwrap(), 3.0);
    }

    fn weights() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..20.0, 3)
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 3)
    }

    fn mat3() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-5.0f64..5.0, 9).prop_map(|v| Matrix::from_vec(3, 3, v))
    }

    fn exponent() -> impl Strategy<Value = Exponent> {
        prop_oneof![
            Just(Exponent::Infinity),
            Just(Exponent::one()),
            Just(Exponent::two()),
            (1.0f64..8.0).prop_map(Exponent::Finite),
        ]
    }

    proptest! {
        #[test]
        fn triangle_and_homogeneity(w in weights(), e in exponent(), x in vec3(), y in vec3(), s in -4.0f64..4.0) {
            let n = WeightedNorm::new(w, e).unwrap();
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            prop_assert!(n.eval(&sum) <= n.eval(&x) + n.eval(&y) + 1e-12);
            let scaled: Vec<f64> = x.iter().map(|v| s * v).collect();
            prop_assert!((n.eval(&scaled) - s.abs() * n.eval(&x)).abs() <= 1e-10 * (1.0 + n.eval(&x)));
            prop_assert!((n.eval_diff(&x, &y) - n.eval(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>())).abs() < 1e-12);
        }

        #[test]
        fn measure_subadditive_and_positively_homogeneous(a in mat3(), b in mat3(), w in weights(), s in 0.0f64..5.0) {
            let mu = |m: &Matrix| log_norm_weighted_inf(m, &w).unwrap();
            prop_assert!(mu(&(&a + &b)) <= mu(&a) + mu(&b) + 1e-10);
            prop_assert!((mu(&(&a * s)) - s * mu(&a)).abs() <= 1e-10 * (1.0 + mu(&a).abs()));
            // the measure never exceeds the induced norm
            prop_assert!(mu(&a) <= induced_norm_weighted_inf(&a, &w).unwrap() + 1e-12);
        }

        #[test]
        fn majorant_idempotent_and_metzler(a in mat3()) {
            let m = metzler_majorant(&a);
            prop_assert_eq!(metzler_majorant(&m), m.clone());
            for i in 0..3 {
                prop_assert_eq!(m[(i, i)], a[(i, i)]);
                for j in 0..3 {
                    if i != j { prop_assert!(m[(i, j)] >= 0.0); }
                }
            }
        }

        #[test]
        fn gamma_bounds_norm_ratio(cl in weights(), op in weights(), x in vec3()) {
            let g = gamma_constant(&cl, &op).unwrap();
            let ncl = WeightedNorm::inf(cl).unwrap();
            let nop = WeightedNorm::inf(op).unwrap();
            prop_assert!(nop.eval(&x) <= g * ncl.eval(&x) * (1.0 + 1e-14) + 1e-300);
        }

        #[test]
        fn measure_matches_limit_definition(a in mat3(), w in weights()) {
            // (‖I + εA‖ − 1)/ε → μ(A); at ε = 1e-7 the gap is O(ε‖A‖²).
            let eps = 1e-7;
            let lhs = (induced_norm_weighted_inf(&(Matrix::identity(3, 3) + &a * eps), &w).unwrap() - 1.0) / eps;
            let mu = log_norm_weighted_inf(&a, &w).unwrap();
            prop_assert!((lhs - mu).abs() < 1e-4 * (1.0 + a.abs().max() * 100.0));
        }
    }
}
