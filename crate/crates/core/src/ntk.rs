//! Tangent-kernel machinery for the ReLU feature network.
//!
//! The level recursion for a pair of unit inputs x, y:
//!
//! ```text
//! S0(x,y) = x.y
//! Sl(x,y) = 2 E[relu(u) relu(v)],   (u,v) ~ N(0, [[S_{l-1}(x,x), S_{l-1}(x,y)],
//!                                                 [S_{l-1}(y,x), S_{l-1}(y,y)]])
//! Tl(x,y) = T_{l-1}(x,y) * 2 E[relu'(u) relu'(v)] + Sl(x,y),   T0 = S0
//! H(x,y)  = (T_L(x,y) + S_L(x,y)) / 2
//! ```
//!
//! The Gaussian expectations have arc-cosine closed forms, checked here
//! against a direct Monte-Carlo oracle ([`mc_expectations`]).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{self, NetworkShape};

/// Kernel values of one recursion level for a pair of inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPair {
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

/// Full recursion trace for one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    /// Covariance levels 0..=L.
    pub sigma: Vec<LevelPair>,
    /// Derivative-weighted levels 0..=L.
    pub sigma_tilde: Vec<LevelPair>,
    /// Final kernel entry `(sigma_tilde_L + sigma_L) / 2`.
    pub h: f64,
    pub depth: usize,
}

/// `2 E[relu(u) relu(v)]` for centered Gaussians with variances a, b and
/// covariance c.
fn relu_prod(a: f64, b: f64, c: f64) -> f64 {
    let s = (a * b).max(0.0).sqrt();
    if s <= 0.0 {
        return 0.0;
    }
    let rho = (c / s).clamp(-1.0, 1.0);
    let th = rho.acos();
    (s / std::f64::consts::PI) * (th.sin() + (std::f64::consts::PI - th) * rho)
}

/// `2 E[relu'(u) relu'(v)]` for the same covariance.
fn relu_deriv_prod(a: f64, b: f64, c: f64) -> f64 {
    let s = (a * b).max(0.0).sqrt();
    if s <= 0.0 {
        return 0.0;
    }
    let rho = (c / s).clamp(-1.0, 1.0);
    (std::f64::consts::PI - rho.acos()) / std::f64::consts::PI
}

fn check_unit(x: &ArrayView1<f64>, what: &str) -> Result<()> {
    let norm = x.dot(x).sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Invalid(format!(
            "{what} must be unit-norm, got ||.|| = {norm}"
        )));
    }
    Ok(())
}

/// Runs the level recursion for a pair of unit vectors.
pub fn ntk_pair(x: &ArrayView1<f64>, y: &ArrayView1<f64>, depth: usize) -> Result<KernelPair> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            context: "kernel pair",
            expected: x.len(),
            got: y.len(),
        });
    }
    check_unit(x, "kernel input x")?;
    check_unit(y, "kernel input y")?;

    let mut sigma = Vec::with_capacity(depth + 1);
    let mut tilde = Vec::with_capacity(depth + 1);
    let level0 = LevelPair {
        xx: x.dot(x),
        yy: y.dot(y),
        xy: x.dot(y),
    };
    sigma.push(level0);
    tilde.push(level0);

    for _ in 0..depth {
        let prev = *sigma.last().unwrap();
        let tprev = *tilde.last().unwrap();
        let next = LevelPair {
            xx: relu_prod(prev.xx, prev.xx, prev.xx),
            yy: relu_prod(prev.yy, prev.yy, prev.yy),
            xy: relu_prod(prev.xx, prev.yy, prev.xy),
        };
        let dd_xy = relu_deriv_prod(prev.xx, prev.yy, prev.xy);
        let dd_xx = relu_deriv_prod(prev.xx, prev.xx, prev.xx);
        let dd_yy = relu_deriv_prod(prev.yy, prev.yy, prev.yy);
        tilde.push(LevelPair {
            xx: tprev.xx * dd_xx + next.xx,
            yy: tprev.yy * dd_yy + next.yy,
            xy: tprev.xy * dd_xy + next.xy,
        });
        sigma.push(next);
    }

    let h = 0.5 * (tilde.last().unwrap().xy + sigma.last().unwrap().xy);
    Ok(KernelPair {
        sigma,
        sigma_tilde: tilde,
        h,
        depth,
    })
}

/// Monte-Carlo estimates of `E[relu(u) relu(v)]` and `E[relu'(u) relu'(v)]`.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub sig_prod: f64,
    pub sig_prod_se: f64,
    pub deriv_prod: f64,
    pub deriv_prod_se: f64,
    pub samples: usize,
}

/// Samples `(u, v) ~ N(0, [[a, c], [c, b]])` and averages the ReLU products.
/// This is the oracle the closed forms in [`ntk_pair`] are verified against.
pub fn mc_expectations(a: f64, b: f64, c: f64, samples: usize, seed: u64) -> Result<McEstimate> {
    if a < 0.0 || b < 0.0 || a * b - c * c < -1e-12 * (1.0 + a * b) {
        return Err(Error::Invalid(format!(
            "covariance [[{a},{c}],[{c},{b}]] is not positive semidefinite"
        )));
    }
    if samples == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sa = a.sqrt();
    let (cu, cv) = if a > 0.0 {
        (c / sa, (b - c * c / a).max(0.0).sqrt())
    } else {
        (0.0, b.sqrt())
    };
    let mut sum_p = 0.0;
    let mut sumsq_p = 0.0;
    let mut sum_d = 0.0;
    let mut sumsq_d = 0.0;
    for _ in 0..samples {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let u = sa * z1;
        let v = cu * z1 + cv * z2;
        let p = u.max(0.0) * v.max(0.0);
        let d = if u > 0.0 && v > 0.0 { 1.0 } else { 0.0 };
        sum_p += p;
        sumsq_p += p * p;
        sum_d += d;
        sumsq_d += d * d;
    }
    let n = samples as f64;
    let mean_p = sum_p / n;
    let mean_d = sum_d / n;
    let var_p = ((sumsq_p - n * mean_p * mean_p) / (n - 1.0)).max(0.0);
    let var_d = ((sumsq_d - n * mean_d * mean_d) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        sig_prod: mean_p,
        sig_prod_se: (var_p / n).sqrt(),
        deriv_prod: mean_d,
        deriv_prod_se: (var_d / n).sqrt(),
        samples,
    })
}

/// Dense kernel matrix over a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkGram {
    pub matrix: Array2<f64>,
    pub depth: usize,
}

/// Fills the symmetric kernel matrix entry by entry via [`ntk_pair`].
pub fn ntk_matrix(points: &[Array1<f64>], depth: usize) -> Result<NtkGram> {
    let n = points.len();
    let mut h = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let pair = ntk_pair(&points[i].view(), &points[j].view(), depth)?;
            h[[i, j]] = pair.h;
            h[[j, i]] = pair.h;
        }
    }
    Ok(NtkGram { matrix: h, depth })
}

const POWER_ITER_CAP: usize = 200_000;
const POWER_ITER_TOL: f64 = 1e-13;

/// Dominant eigenvalue (largest magnitude) of a symmetric matrix by power
/// iteration with a deterministic seeded start vector.
fn dominant_eigenvalue(a: &ArrayView2<f64>, seed: u64) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Invalid("empty matrix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let scale = a.iter().fold(0.0_f64, |s, x| s.max(x.abs())).max(1.0);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let w = a.dot(&v);
        lambda = v.dot(&w);
        let mut resid = 0.0_f64;
        for (wi, vi) in w.iter().zip(v.iter()) {
            resid = resid.max((wi - lambda * vi).abs());
        }
        let wn = w.dot(&w).sqrt();
        if wn < 1e-300 {
            // matrix annihilates the iterate: dominant eigenvalue is 0
            return Ok(0.0);
        }
        v = w / wn;
        if resid <= POWER_ITER_TOL * scale {
            return Ok(lambda);
        }
    }
    // Accept a slightly looser residual before giving up; clustered spectra
    // converge slowly in the eigenvector while the value is already stable.
    let w = a.dot(&v);
    let final_lambda = v.dot(&w);
    if (final_lambda - lambda).abs() <= 1e-10 * scale {
        return Ok(final_lambda);
    }
    Err(Error::NoConvergence(POWER_ITER_CAP))
}

/// Smallest eigenvalue of a symmetric matrix: shifted power iteration on
/// `mu I - A` where `mu` is the dominant magnitude of `A`.
pub fn smallest_eigenvalue(a: &ArrayView2<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Invalid("need a nonempty square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input".into()));
    }
    let mu = dominant_eigenvalue(a, 0x9e3779b9)?.abs();
    if mu == 0.0 {
        return Ok(0.0);
    }
    let mut shifted = -a.to_owned();
    for i in 0..n {
        shifted[[i, i]] += mu;
    }
    let top = dominant_eigenvalue(&shifted.view(), 0x7f4a7c15)?;
    Ok(mu - top)
}

/// Smallest eigenvalue of a kernel matrix.
pub fn min_eigenvalue(gram: &NtkGram) -> Result<f64> {
    smallest_eigenvalue(&gram.matrix.view())
}

/// The infinite-width limit of the (1/m)-scaled all-parameter gradient Gram
/// for this architecture: `(T_L - S_L) / 2` entrywise.
///
/// With the last hidden width pinned to d, the output-layer block of the
/// gradient contributes only d summands and vanishes under the 1/m scaling,
/// and the top-layer derivative factor enters through the d-dimensional
/// readout; the surviving limit is the derivative-weighted stack
/// `(T_L - S_L)/2 = D_L * T_{L-1} / 2`, not `(T_L + S_L)/2`.
pub fn full_parameter_kernel(points: &[Array1<f64>], depth: usize) -> Result<Array2<f64>> {
    let n = points.len();
    let mut h = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let pair = ntk_pair(&points[i].view(), &points[j].view(), depth)?;
            let v = 0.5 * (pair.sigma_tilde[depth].xy - pair.sigma[depth].xy);
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    Ok(h)
}

/// `(1/m) * Psi Psi^T` where row i of `Psi` is the gradient of `f` at point i
/// with respect to all parameters `(theta, w)`.
pub fn gradient_feature_gram(
    points: &[Array1<f64>],
    params: &network::NetworkParams,
) -> Result<Array2<f64>> {
    let n = points.len();
    let m = params.shape().width as f64;
    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(n);
    for x in points {
        rows.push(params.grad_f_all(&x.view())? / m.sqrt());
    }
    let mut g = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = rows[i].dot(&rows[j]);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    Ok(g)
}

/// One row of a width sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramSweepRow {
    pub width: usize,
    pub seed: u64,
    pub frobenius_error: f64,
}

/// Width-sweep result: per-(width, seed) Frobenius errors against the
/// analytic reference kernel.
#[derive(Debug, Clone)]
pub struct GramSweep {
    pub rows: Vec<GramSweepRow>,
    pub reference: Array2<f64>,
}

impl GramSweep {
    /// Mean error per width, in the order the widths were given.
    pub fn mean_errors(&self, widths: &[usize]) -> Vec<f64> {
        widths
            .iter()
            .map(|&w| {
                let errs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.width == w)
                    .map(|r| r.frobenius_error)
                    .collect();
                errs.iter().sum::<f64>() / errs.len().max(1) as f64
            })
            .collect()
    }
}

/// Empirical check of gradient-Gram convergence: for each width, initializes
/// `seeds_per_width` networks with the unstructured iid scheme, forms the
/// (1/m)-scaled gradient Gram over the points and reports its Frobenius
/// distance to [`full_parameter_kernel`].
pub fn gram_convergence(
    points: &[Array1<f64>],
    depth: usize,
    widths: &[usize],
    seeds_per_width: u64,
    base_seed: u64,
) -> Result<GramSweep> {
    if points.is_empty() {
        return Err(Error::Invalid("need at least one point".into()));
    }
    let dim = points[0].len();
    for (i, p) in points.iter().enumerate() {
        check_unit(&p.view(), "sweep point")?;
        let half = dim / 2;
        for j in 0..half {
            if (p[j] - p[j + half]).abs() > 1e-8 {
                return Err(Error::Invalid(format!(
                    "sweep point {i} does not have equal halves"
                )));
            }
        }
    }
    let reference = full_parameter_kernel(points, depth)?;
    let mut rows = Vec::new();
    for &width in widths {
        let shape = NetworkShape::new(dim, width, depth)?;
        for k in 0..seeds_per_width {
            let seed = base_seed
                .wrapping_add(k)
                .wrapping_add((width as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let params = network::init_params_iid(shape, seed)?;
            let gram = gradient_feature_gram(points, &params)?;
            let err = linalg::frobenius_norm(&(&gram - &reference).view());
            rows.push(GramSweepRow {
                width,
                seed,
                frobenius_error: err,
            });
        }
    }
    Ok(GramSweep { rows, reference })
}
