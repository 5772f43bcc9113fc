//! Last-layer ridge regression and UCB scoring.
//!
//! The state keeps both the design matrix `A = lambda*I + sum phi phi^T` and
//! its inverse, updated per observation with the rank-one inverse identity
//! and recomputed exactly every [`RECOMPUTE_PERIOD`] updates to cap drift.
//! Keeping the inverse d x d (rather than over the full network parameter
//! count) is what makes per-round scoring cheap.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Exact inverse recompute cadence.
pub const RECOMPUTE_PERIOD: u64 = 512;

/// Online ridge estimator over d-dimensional features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeState {
    dim: usize,
    lambda: f64,
    a: Array2<f64>,
    a_inv: Array2<f64>,
    b: Array1<f64>,
    theta: Array1<f64>,
    update_count: u64,
}

impl RidgeState {
    /// Fresh state: `A = lambda*I`, `A_inv = I/lambda`, `b = 0` and
    /// `theta = theta0`. Note `theta0` is kept verbatim until the first
    /// update even though `A0^{-1} b0 = 0`.
    pub fn new(dim: usize, lambda: f64, theta0: Array1<f64>) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Invalid(format!(
                "ridge regularizer must be positive and finite, got {lambda}"
            )));
        }
        if theta0.len() != dim {
            return Err(Error::DimMismatch {
                context: "theta0",
                expected: dim,
                got: theta0.len(),
            });
        }
        Ok(RidgeState {
            dim,
            lambda,
            a: Array2::eye(dim) * lambda,
            a_inv: Array2::eye(dim) / lambda,
            b: Array1::zeros(dim),
            theta: theta0,
            update_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn design_matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn inverse(&self) -> &Array2<f64> {
        &self.a_inv
    }

    pub fn moment(&self) -> &Array1<f64> {
        &self.b
    }

    pub fn theta(&self) -> &Array1<f64> {
        &self.theta
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    fn check_feature(&self, phi: &ArrayView1<f64>) -> Result<()> {
        if phi.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "ridge feature",
                expected: self.dim,
                got: phi.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge feature".into()));
        }
        Ok(())
    }

    /// Rank-one observation update:
    /// `A += phi phi^T`, `b += r*phi`, inverse via
    /// `A_inv -= (A_inv phi)(A_inv phi)^T / (1 + phi^T A_inv phi)`,
    /// then `theta = A_inv b`.
    pub fn update(&mut self, phi: &ArrayView1<f64>, reward: f64) -> Result<()> {
        self.check_feature(phi)?;
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("ridge reward {reward}")));
        }
        let u = self.a_inv.dot(phi);
        let denom = 1.0 + phi.dot(&u);
        for i in 0..self.dim {
            let pi = phi[i];
            let ui = u[i];
            for j in 0..self.dim {
                self.a[[i, j]] += pi * phi[j];
                self.a_inv[[i, j]] -= ui * u[j] / denom;
            }
        }
        self.b.scaled_add(reward, phi);
        self.update_count += 1;
        if self.update_count % RECOMPUTE_PERIOD == 0 {
            self.a_inv = Self::recompute_inverse(&self.a)?;
        }
        self.theta = self.a_inv.dot(&self.b);
        Ok(())
    }

    /// Exact inverse of the design matrix. When the accumulated features make
    /// A so ill-conditioned that the factorization hits a non-positive pivot
    /// in f64, retry with an escalating diagonal jitter (relative to the
    /// largest diagonal entry) rather than killing the run.
    fn recompute_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
        match linalg::spd_inverse(&a.view()) {
            Ok(inv) => Ok(inv),
            Err(first) => {
                let max_diag = (0..a.nrows()).fold(0.0_f64, |m, i| m.max(a[[i, i]]));
                for mag in [1e-12, 1e-9, 1e-6] {
                    let mut jittered = a.clone();
                    for i in 0..a.nrows() {
                        jittered[[i, i]] += mag * max_diag;
                    }
                    if let Ok(inv) = linalg::spd_inverse(&jittered.view()) {
                        return Ok(inv);
                    }
                }
                Err(first)
            }
        }
    }

    /// Exploration bonus `sqrt(phi^T A_inv phi)` from the maintained inverse.
    pub fn bonus(&self, phi: &ArrayView1<f64>) -> Result<f64> {
        self.check_feature(phi)?;
        let q = phi.dot(&self.a_inv.dot(phi));
        // Tolerate rounding noise in the maintained inverse; anything beyond
        // it means the positive-definite invariant is gone.
        let tol = 1e-9 * (1.0 + phi.dot(phi) / self.lambda);
        if q < -tol {
            return Err(Error::BrokenPd(format!(
                "negative UCB radicand {q} after {} updates",
                self.update_count
            )));
        }
        Ok(q.max(0.0).sqrt())
    }

    /// UCB score `theta . phi + alpha * sqrt(phi^T A_inv phi)`.
    pub fn ucb_score(&self, phi: &ArrayView1<f64>, alpha: f64) -> Result<f64> {
        if alpha < 0.0 {
            return Err(Error::Invalid(format!(
                "exploration level must be non-negative, got {alpha}"
            )));
        }
        Ok(self.theta.dot(phi) + alpha * self.bonus(phi)?)
    }
}

/// Exploration-level schedule for the UCB rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaSchedule {
    /// Constant alpha for every round.
    Fixed(f64),
    /// The confidence-radius formula
    /// `nu * sqrt(2 (d log(1 + t log(H K)/lambda) + log(1/delta))) + sqrt(lambda) * M`.
    Theorem {
        /// Sub-Gaussian noise scale.
        noise_scale: f64,
        /// Feature dimension d.
        dim: usize,
        /// Epoch length H.
        epoch_length: usize,
        /// Number of arms K.
        arms: usize,
        lambda: f64,
        /// Failure probability, in (0, 1).
        delta: f64,
        /// Bound M on the norm of the unknown output weight.
        theta_norm_bound: f64,
    },
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaSchedule::Fixed(a) => {
                if a < 0.0 || !a.is_finite() {
                    return Err(Error::Invalid(format!("fixed alpha must be >= 0, got {a}")));
                }
            }
            AlphaSchedule::Theorem {
                noise_scale,
                epoch_length,
                arms,
                lambda,
                delta,
                theta_norm_bound,
                ..
            } => {
                if noise_scale < 0.0 {
                    return Err(Error::Invalid("noise scale must be >= 0".into()));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::Invalid(format!("delta must be in (0,1), got {delta}")));
                }
                if lambda.is_nan() || lambda <= 0.0 {
                    return Err(Error::Invalid("lambda must be positive".into()));
                }
                if theta_norm_bound < 0.0 {
                    return Err(Error::Invalid("theta norm bound must be >= 0".into()));
                }
                if epoch_length * arms <= 1 {
                    return Err(Error::Invalid(format!(
                        "H*K must exceed 1 for the confidence radius (H={epoch_length}, K={arms})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exploration level at round `t`.
    pub fn alpha_at(&self, t: u64) -> Result<f64> {
        self.validate()?;
        match *self {
            AlphaSchedule::Fixed(a) => Ok(a),
            AlphaSchedule::Theorem {
                noise_scale,
                dim,
                epoch_length,
                arms,
                lambda,
                delta,
                theta_norm_bound,
            } => {
                let hk = (epoch_length * arms) as f64;
                let inner = 1.0 + t as f64 * hk.ln() / lambda;
                let radius = noise_scale
                    * (2.0 * (dim as f64 * inner.ln() + (1.0 / delta).ln())).sqrt()
                    + lambda.sqrt() * theta_norm_bound;
                Ok(radius)
            }
        }
    }
}
