//! Independent oracles for the integration tests. Nothing here touches the
//! implementation paths it is used to check: eigenvalues come from a cyclic
//! Jacobi sweep, inverses from Gauss-Jordan elimination with partial
//! pivoting, and gradients from central finite differences.

#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nlucb::network::NetworkParams;

/// Eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let scale = m.iter().fold(0.0_f64, |s, v| s + v * v).sqrt().max(1.0);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut aug = Array2::<f64>::zeros((n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        aug[[i, n + i]] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if aug[[r, col]].abs() > aug[[pivot, col]].abs() {
                pivot = r;
            }
        }
        assert!(aug[[pivot, col]].abs() > 1e-300, "singular matrix");
        if pivot != col {
            for j in 0..2 * n {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[pivot, j]];
                aug[[pivot, j]] = tmp;
            }
        }
        let d = aug[[col, col]];
        for j in 0..2 * n {
            aug[[col, j]] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[[r, col]];
            if f != 0.0 {
                for j in 0..2 * n {
                    aug[[r, j]] -= f * aug[[col, j]];
                }
            }
        }
    }
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            inv[[i, j]] = aug[[i, n + j]];
        }
    }
    inv
}

/// Frobenius norm of the difference of two matrices.
pub fn frob_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a - b).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flat column-major hidden-weight count per layer, layer order.
fn layer_sizes(params: &NetworkParams) -> Vec<(usize, usize)> {
    params.hidden.iter().map(|w| (w.nrows(), w.ncols())).collect()
}

/// Adds `delta` to the hidden weight at flat column-major index `idx`.
pub fn perturb_flat(params: &NetworkParams, idx: usize, delta: f64) -> NetworkParams {
    let mut out = params.clone();
    let mut rem = idx;
    for ((rows, cols), w) in layer_sizes(params).into_iter().zip(out.hidden.iter_mut()) {
        let size = rows * cols;
        if rem < size {
            let c = rem / rows;
            let r = rem % rows;
            w[[r, c]] += delta;
            return out;
        }
        rem -= size;
    }
    panic!("flat index {idx} out of range");
}

/// Central finite difference of `phi_j` with respect to hidden weight `idx`.
pub fn fd_grad_phi(params: &NetworkParams, x: &ArrayView1<f64>, j: usize, idx: usize, h: f64) -> f64 {
    let plus = perturb_flat(params, idx, h);
    let minus = perturb_flat(params, idx, -h);
    (plus.forward_phi(x).unwrap()[j] - minus.forward_phi(x).unwrap()[j]) / (2.0 * h)
}

/// Central finite difference of `f` with respect to hidden weight `idx`.
pub fn fd_grad_f(params: &NetworkParams, x: &ArrayView1<f64>, idx: usize, h: f64) -> f64 {
    let plus = perturb_flat(params, idx, h);
    let minus = perturb_flat(params, idx, -h);
    (plus.forward_f(x).unwrap() - minus.forward_f(x).unwrap()) / (2.0 * h)
}

/// Pre-activations of every layer, recomputed from the public weights.
pub fn preactivations(params: &NetworkParams, x: &ArrayView1<f64>) -> Vec<Array1<f64>> {
    let mut zs = Vec::new();
    let mut a = x.to_owned();
    for w in &params.hidden {
        let z = w.dot(&a);
        a = z.mapv(|v| if v > 0.0 { v } else { 0.0 });
        zs.push(z);
    }
    zs
}

/// Smallest |pre-activation| over all units; instances near a ReLU kink are
/// resampled by the gradient tests.
pub fn min_abs_preactivation(params: &NetworkParams, x: &ArrayView1<f64>) -> f64 {
    preactivations(params, x)
        .iter()
        .flat_map(|z| z.iter())
        .fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

/// Random unit vector with equal halves (the feature geometry the
/// environments emit).
pub fn duplicated_unit(dim: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let half = dim / 2;
    loop {
        let v = Array1::from_iter((0..half).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            let mut out = Array1::<f64>::zeros(dim);
            for j in 0..half {
                out[j] = v[j] / (norm * 2.0_f64.sqrt());
                out[j + half] = out[j];
            }
            return out;
        }
    }
}

/// Writes a nonlinear classification CSV with Statlog-like shape: labels are
/// `argmax_k |u . c_k|` over fixed unit centers, a sign-symmetric rule no
/// linear per-arm model can represent.
pub fn write_angular_dataset(
    path: &std::path::Path,
    d_raw: usize,
    classes: usize,
    rows: usize,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut c = Array1::from_iter((0..d_raw).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = c.dot(&c).sqrt();
        c /= n;
        centers.push(c);
    }
    let mut text = String::new();
    for _ in 0..rows {
        let mut u = Array1::from_iter((0..d_raw).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = u.dot(&u).sqrt();
        u /= n;
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (k, c) in centers.iter().enumerate() {
            let v = u.dot(c).abs();
            if v > best_v {
                best_v = v;
                best = k;
            }
        }
        let fields: Vec<String> = u.iter().map(|v| format!("{v:.9}")).collect();
        text.push_str(&fields.join(","));
        text.push_str(&format!(",{best}\n"));
    }
    std::fs::write(path, text).unwrap();
}
