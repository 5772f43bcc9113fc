//! Fully-connected ReLU feature networks.
//!
//! A network with `depth = L` hidden layers maps an input `x` of length `d`
//! through weights `W_1 (m×d)`, `W_2..W_{L-1} (m×m)`, `W_L (d×m)`:
//!
//! ```text
//! phi(x; w) = sqrt(m) * relu(W_L relu(W_{L-1} ... relu(W_1 x)))
//! f(x; theta, w) = theta . phi(x; w)
//! ```
//!
//! There are no bias terms. In the backward pass the ReLU kink carries
//! subgradient one, and pre-activations within 1e-12 of zero count as the
//! kink: the block-symmetric initialization pins the last pre-activations of
//! every equal-halves input at zero (up to cancellation noise of either
//! sign), and a zero subgradient there would make the initial point a
//! stationary point of the replay loss, so nothing could ever train. Away
//! from the kink the convention is irrelevant. Gradients with respect to the
//! hidden weights use the flat layout `w = (vec(W_1), ..., vec(W_L))` where
//! `vec` is column-major, so the entry `(r, c)` of layer `l` sits at
//! `offset_l + c * rows_l + r`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Dimensions of a feature network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Input (and output-feature) dimension `d`; must be even.
    pub input_dim: usize,
    /// Hidden width `m`; must be even and at least `d`.
    pub width: usize,
    /// Number of hidden layers `L`; at least 2.
    pub depth: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, width: usize, depth: usize) -> Result<Self> {
        let shape = NetworkShape {
            input_dim,
            width,
            depth,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.input_dim % 2 != 0 {
            return Err(Error::Shape(format!(
                "input_dim must be a positive even number, got {}",
                self.input_dim
            )));
        }
        if self.width % 2 != 0 || self.width < self.input_dim {
            return Err(Error::Shape(format!(
                "width must be even and >= input_dim ({}), got {}",
                self.input_dim, self.width
            )));
        }
        if self.depth < 2 {
            return Err(Error::Shape(format!(
                "depth must be >= 2, got {}",
                self.depth
            )));
        }
        Ok(())
    }

    /// Rows/cols of each hidden weight matrix, in layer order 1..=L.
    pub(crate) fn layer_dims(&self) -> Vec<(usize, usize)> {
        let (d, m, l) = (self.input_dim, self.width, self.depth);
        let mut dims = Vec::with_capacity(l);
        dims.push((m, d));
        for _ in 1..l - 1 {
            dims.push((m, m));
        }
        dims.push((d, m));
        dims
    }

    /// Total number of hidden weights `p = (L-2) m^2 + 2 m d`.
    pub fn hidden_param_count(&self) -> usize {
        self.layer_dims().iter().map(|(r, c)| r * c).sum()
    }
}

/// Weights of a feature network: hidden matrices plus the output vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    shape: NetworkShape,
    /// Hidden weight matrices `W_1..W_L`.
    pub hidden: Vec<Array2<f64>>,
    /// Output-layer weight `theta` (length `d`). Owned by the shallow
    /// explorer in the bandit agents; never touched by [`train_epoch`].
    pub theta: Array1<f64>,
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

// Subgradient convention: the kink carries subgradient 1, and anything
// within KINK_BAND of zero counts as the kink. The symmetric initialization
// pins the top pre-activations at zero up to matmul cancellation noise
// (~1e-16, either sign), and classifying that noise as "dead" would make the
// initial point stationary for the replay loss. Genuine pre-activations are
// orders of magnitude outside the band.
const KINK_BAND: f64 = 1e-12;

fn step(z: f64) -> f64 {
    if z >= -KINK_BAND {
        1.0
    } else {
        0.0
    }
}

/// Block-symmetric Gaussian initialization.
///
/// For `l < L` the matrix is `[[W, 0], [0, W]]` with `W ~ N(0, 4/m)`
/// entrywise; the last layer is `[V, -V]` with `V ~ N(0, 2/m)`; `theta`
/// entries are `N(0, 1/d)`. With this structure any input whose two halves
/// are equal satisfies `phi(x; w0) = 0`.
pub fn init_params(shape: NetworkShape, seed: u64) -> Result<NetworkParams> {
    shape.validate()?;
    let (d, m) = (shape.input_dim, shape.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden_dist = Normal::new(0.0, (4.0 / m as f64).sqrt()).expect("finite std");
    let last_dist = Normal::new(0.0, (2.0 / m as f64).sqrt()).expect("finite std");
    let theta_dist = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("finite std");

    let mut hidden = Vec::with_capacity(shape.depth);
    for (l, (rows, cols)) in shape.layer_dims().into_iter().enumerate() {
        let mut w = Array2::<f64>::zeros((rows, cols));
        if l + 1 < shape.depth {
            let (hr, hc) = (rows / 2, cols / 2);
            for r in 0..hr {
                for c in 0..hc {
                    let v = hidden_dist.sample(&mut rng);
                    w[[r, c]] = v;
                    w[[r + hr, c + hc]] = v;
                }
            }
        } else {
            let hc = cols / 2;
            for r in 0..rows {
                for c in 0..hc {
                    let v = last_dist.sample(&mut rng);
                    w[[r, c]] = v;
                    w[[r, c + hc]] = -v;
                }
            }
        }
        hidden.push(w);
    }
    let theta = Array1::from_iter((0..d).map(|_| theta_dist.sample(&mut rng)));
    Ok(NetworkParams {
        shape,
        hidden,
        theta,
    })
}

/// Unstructured iid Gaussian initialization: every hidden entry `N(0, 2/m)`,
/// `theta ~ N(0, 1/d)`. Used by the kernel-convergence diagnostics, where the
/// block-symmetric scheme would pin the last pre-activations at exactly zero.
pub fn init_params_iid(shape: NetworkShape, seed: u64) -> Result<NetworkParams> {
    shape.validate()?;
    let (d, m) = (shape.input_dim, shape.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, (2.0 / m as f64).sqrt()).expect("finite std");
    let theta_dist = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("finite std");
    let mut hidden = Vec::with_capacity(shape.depth);
    for (rows, cols) in shape.layer_dims() {
        let mut w = Array2::<f64>::zeros((rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                w[[r, c]] = dist.sample(&mut rng);
            }
        }
        hidden.push(w);
    }
    let theta = Array1::from_iter((0..d).map(|_| theta_dist.sample(&mut rng)));
    Ok(NetworkParams {
        shape,
        hidden,
        theta,
    })
}

impl NetworkParams {
    /// Builds params from explicit matrices, validating dimensions.
    pub fn from_parts(
        shape: NetworkShape,
        hidden: Vec<Array2<f64>>,
        theta: Array1<f64>,
    ) -> Result<Self> {
        shape.validate()?;
        let dims = shape.layer_dims();
        if hidden.len() != dims.len() {
            return Err(Error::Shape(format!(
                "expected {} hidden layers, got {}",
                dims.len(),
                hidden.len()
            )));
        }
        for (l, ((rows, cols), w)) in dims.iter().zip(hidden.iter()).enumerate() {
            if w.nrows() != *rows || w.ncols() != *cols {
                return Err(Error::Shape(format!(
                    "layer {} must be {}x{}, got {}x{}",
                    l + 1,
                    rows,
                    cols,
                    w.nrows(),
                    w.ncols()
                )));
            }
        }
        if theta.len() != shape.input_dim {
            return Err(Error::DimMismatch {
                context: "theta",
                expected: shape.input_dim,
                got: theta.len(),
            });
        }
        Ok(NetworkParams {
            shape,
            hidden,
            theta,
        })
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    fn check_input(&self, x: &ArrayView1<f64>) -> Result<()> {
        if x.len() != self.shape.input_dim {
            return Err(Error::DimMismatch {
                context: "network input",
                expected: self.shape.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations and activations of every layer; `acts[0]` is the input.
    fn forward_cache(&self, x: &ArrayView1<f64>) -> (Vec<Array1<f64>>, Vec<Array1<f64>>) {
        let mut zs = Vec::with_capacity(self.hidden.len());
        let mut acts = Vec::with_capacity(self.hidden.len() + 1);
        acts.push(x.to_owned());
        for w in &self.hidden {
            let z = w.dot(acts.last().unwrap());
            acts.push(z.mapv(relu));
            zs.push(z);
        }
        (zs, acts)
    }

    /// Output of the last hidden layer, `sqrt(m) * relu(W_L ... relu(W_1 x))`.
    pub fn forward_phi(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let scale = (self.shape.width as f64).sqrt();
        let (_, acts) = self.forward_cache(x);
        Ok(acts.into_iter().next_back().unwrap() * scale)
    }

    /// Scalar network output `theta . phi(x)`.
    pub fn forward_f(&self, x: &ArrayView1<f64>) -> Result<f64> {
        Ok(self.theta.dot(&self.forward_phi(x)?))
    }

    /// Jacobian of `phi` with respect to the flattened hidden weights,
    /// a `d x p` matrix in the column-major layer layout.
    pub fn grad_phi(&self, x: &ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let d = self.shape.input_dim;
        let p = self.shape.hidden_param_count();
        let scale = (self.shape.width as f64).sqrt();
        let (zs, acts) = self.forward_cache(x);
        let depth = self.hidden.len();

        let mut grad = Array2::<f64>::zeros((d, p));
        let mut offsets = Vec::with_capacity(depth);
        let mut off = 0;
        for w in &self.hidden {
            offsets.push(off);
            off += w.len();
        }

        // jac = d phi / d z_l, seeded at the top layer.
        let mut jac = Array2::<f64>::zeros((d, d));
        for j in 0..d {
            jac[[j, j]] = scale * step(zs[depth - 1][j]);
        }
        for l in (0..depth).rev() {
            let rows = self.hidden[l].nrows();
            let input = &acts[l];
            let base = offsets[l];
            for j in 0..d {
                for c in 0..input.len() {
                    let a = input[c];
                    if a == 0.0 {
                        continue;
                    }
                    for r in 0..rows {
                        grad[[j, base + c * rows + r]] = jac[[j, r]] * a;
                    }
                }
            }
            if l > 0 {
                let mut next = jac.dot(&self.hidden[l]);
                for mut row in next.axis_iter_mut(Axis(0)) {
                    for (v, z) in row.iter_mut().zip(zs[l - 1].iter()) {
                        *v *= step(*z);
                    }
                }
                jac = next;
            }
        }
        Ok(grad)
    }

    /// Gradient of `f` with respect to `(theta, w)`: the first `d` entries
    /// are `phi(x)`, the remaining `p` are `theta^T grad_phi`, computed with
    /// a single backward pass.
    pub fn grad_f_all(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let d = self.shape.input_dim;
        let p = self.shape.hidden_param_count();
        let scale = (self.shape.width as f64).sqrt();
        let (zs, acts) = self.forward_cache(x);
        let depth = self.hidden.len();

        let mut out = Array1::<f64>::zeros(d + p);
        for j in 0..d {
            out[j] = scale * acts[depth][j];
        }

        let mut tail_off = d + p;
        let mut v: Array1<f64> =
            Array1::from_iter((0..d).map(|j| scale * self.theta[j] * step(zs[depth - 1][j])));
        for l in (0..depth).rev() {
            let rows = self.hidden[l].nrows();
            let input = &acts[l];
            tail_off -= rows * input.len();
            for c in 0..input.len() {
                let a = input[c];
                if a != 0.0 {
                    for r in 0..rows {
                        out[tail_off + c * rows + r] = v[r] * a;
                    }
                }
            }
            if l > 0 {
                let mut next = self.hidden[l].t().dot(&v);
                for (nv, z) in next.iter_mut().zip(zs[l - 1].iter()) {
                    *nv *= step(*z);
                }
                v = next;
            }
        }
        Ok(out)
    }

    /// Writes the weights to a versioned JSON snapshot.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let snap = WeightSnapshot::from_params(self);
        let text = serde_json::to_string(&snap)
            .map_err(|e| Error::Invalid(format!("weight snapshot encode: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Reads a snapshot written by [`NetworkParams::save_weights`].
    pub fn load_weights(path: &Path) -> Result<NetworkParams> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let snap: WeightSnapshot = serde_json::from_str(&text)
            .map_err(|e| Error::Invalid(format!("weight snapshot decode: {e}")))?;
        snap.into_params()
    }
}

/// On-disk weight format: shape header plus column-major layer matrices.
#[derive(Serialize, Deserialize)]
struct WeightSnapshot {
    version: u32,
    input_dim: usize,
    width: usize,
    depth: usize,
    /// One flat column-major array per hidden layer, in layer order.
    hidden: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

const WEIGHT_SNAPSHOT_VERSION: u32 = 1;

impl WeightSnapshot {
    fn from_params(p: &NetworkParams) -> Self {
        let hidden = p
            .hidden
            .iter()
            .map(|w| {
                let (rows, cols) = (w.nrows(), w.ncols());
                let mut flat = Vec::with_capacity(rows * cols);
                for c in 0..cols {
                    for r in 0..rows {
                        flat.push(w[[r, c]]);
                    }
                }
                flat
            })
            .collect();
        WeightSnapshot {
            version: WEIGHT_SNAPSHOT_VERSION,
            input_dim: p.shape.input_dim,
            width: p.shape.width,
            depth: p.shape.depth,
            hidden,
            theta: p.theta.to_vec(),
        }
    }

    fn into_params(self) -> Result<NetworkParams> {
        if self.version != WEIGHT_SNAPSHOT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported weight snapshot version {}",
                self.version
            )));
        }
        let shape = NetworkShape::new(self.input_dim, self.width, self.depth)?;
        let dims = shape.layer_dims();
        if self.hidden.len() != dims.len() {
            return Err(Error::Shape("layer count mismatch in snapshot".into()));
        }
        let mut hidden = Vec::with_capacity(dims.len());
        for ((rows, cols), flat) in dims.into_iter().zip(self.hidden) {
            if flat.len() != rows * cols {
                return Err(Error::Shape("layer size mismatch in snapshot".into()));
            }
            let mut w = Array2::<f64>::zeros((rows, cols));
            for c in 0..cols {
                for r in 0..rows {
                    w[[r, c]] = flat[c * rows + r];
                }
            }
            hidden.push(w);
        }
        NetworkParams::from_parts(shape, hidden, Array1::from_vec(self.theta))
    }
}

/// Whether retraining sees the whole history or only the current epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryMode {
    Full,
    EpochOnly,
}

/// Gradient-descent settings for [`train_epoch`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size eta.
    pub step_size: f64,
    /// Maximum number of full-batch steps.
    pub max_iters: usize,
    /// Early stop when the loss change between consecutive steps drops
    /// below this threshold.
    pub stop_tol: f64,
    pub history: HistoryMode,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters > 0 && (self.step_size.is_nan() || self.step_size <= 0.0) {
            return Err(Error::Invalid(format!(
                "step size must be positive when max_iters > 0, got {}",
                self.step_size
            )));
        }
        if self.stop_tol < 0.0 {
            return Err(Error::Invalid("stop_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// One replay datum: the chosen context, its observed reward and the ridge
/// estimate recorded with it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSample {
    pub x: Array1<f64>,
    pub reward: f64,
    pub theta: Array1<f64>,
}

/// Result of a retraining call: the new parameters and the loss trajectory
/// (initial loss followed by the loss after each step taken).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub losses: Vec<f64>,
}

struct Batch {
    xs: Array2<f64>,
    thetas: Option<Array2<f64>>,
    rewards: Array1<f64>,
}

fn batch_forward(
    params: &NetworkParams,
    xs: &Array2<f64>,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let mut zs = Vec::with_capacity(params.hidden.len());
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(params.hidden.len() + 1);
    acts.push(xs.clone());
    for w in &params.hidden {
        let z = acts.last().unwrap().dot(&w.t());
        acts.push(z.mapv(relu));
        zs.push(z);
    }
    (zs, acts)
}

fn descend(start: &NetworkParams, batch: &Batch, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = start.clone();
    if cfg.max_iters == 0 {
        return Ok(TrainOutcome {
            params,
            losses: Vec::new(),
        });
    }
    let n = batch.xs.nrows();
    if n == 0 {
        return Err(Error::Invalid(
            "training data must be nonempty when max_iters > 0".into(),
        ));
    }
    let scale = (params.shape.width as f64).sqrt();
    let depth = params.hidden.len();
    let joint = batch.thetas.is_none();

    let loss_and_cache = |p: &NetworkParams| {
        let (zs, acts) = batch_forward(p, &batch.xs);
        let phi = acts.last().unwrap() * scale;
        let preds: Array1<f64> = match &batch.thetas {
            Some(th) => (&phi * th).sum_axis(Axis(1)),
            None => phi.dot(&p.theta),
        };
        let resid = &preds - &batch.rewards;
        let loss = resid.iter().map(|e| e * e).sum::<f64>();
        (loss, resid, zs, acts)
    };

    let (mut loss, mut resid, mut zs, mut acts) = loss_and_cache(&params);
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("initial loss is {loss}")));
    }
    let mut losses = vec![loss];

    for iter in 0..cfg.max_iters {
        // d loss / d phi, row i = 2 resid_i * theta_i
        let mut dphi = match &batch.thetas {
            Some(th) => {
                let mut g = th.clone();
                for (mut row, e) in g.axis_iter_mut(Axis(0)).zip(resid.iter()) {
                    row.mapv_inplace(|v| 2.0 * e * v);
                }
                g
            }
            None => {
                let mut g = Array2::<f64>::zeros(batch.xs.raw_dim());
                for ((mut row, e), _) in g.axis_iter_mut(Axis(0)).zip(resid.iter()).zip(0..n) {
                    row.assign(&(&params.theta * (2.0 * *e)));
                }
                g
            }
        };
        // delta at the top pre-activations
        dphi.zip_mut_with(&zs[depth - 1], |g, z| *g *= scale * step(*z));
        let mut delta = dphi;

        let grad_theta = if joint {
            let phi = acts.last().unwrap() * scale;
            let mut g = Array1::<f64>::zeros(params.theta.len());
            for (row, e) in phi.axis_iter(Axis(0)).zip(resid.iter()) {
                g.scaled_add(2.0 * e, &row);
            }
            Some(g)
        } else {
            None
        };

        let mut grads = vec![Array2::<f64>::zeros((0, 0)); depth];
        for l in (0..depth).rev() {
            grads[l] = delta.t().dot(&acts[l]);
            if l > 0 {
                let mut next = delta.dot(&params.hidden[l]);
                next.zip_mut_with(&zs[l - 1], |g, z| *g *= step(*z));
                delta = next;
            }
        }

        let mut grad_sq = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>());
        if grad_sq.any(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite gradient at iteration {iter}"
            )));
        }

        for (w, g) in params.hidden.iter_mut().zip(grads.iter()) {
            w.scaled_add(-cfg.step_size, g);
        }
        if let Some(g) = grad_theta {
            params.theta.scaled_add(-cfg.step_size, &g);
        }

        let (new_loss, new_resid, new_zs, new_acts) = loss_and_cache(&params);
        if !new_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "loss became {new_loss} at iteration {iter}"
            )));
        }
        losses.push(new_loss);
        let done = (new_loss - loss).abs() < cfg.stop_tol;
        loss = new_loss;
        resid = new_resid;
        zs = new_zs;
        acts = new_acts;
        if done {
            break;
        }
    }
    Ok(TrainOutcome { params, losses })
}

fn build_batch(data: &[TrainSample], d: usize, with_theta: bool) -> Result<Batch> {
    let n = data.len();
    let mut xs = Array2::<f64>::zeros((n, d));
    let mut thetas = with_theta.then(|| Array2::<f64>::zeros((n, d)));
    let mut rewards = Array1::<f64>::zeros(n);
    for (i, s) in data.iter().enumerate() {
        if s.x.len() != d {
            return Err(Error::DimMismatch {
                context: "training input",
                expected: d,
                got: s.x.len(),
            });
        }
        xs.row_mut(i).assign(&s.x);
        if let Some(th) = thetas.as_mut() {
            if s.theta.len() != d {
                return Err(Error::DimMismatch {
                    context: "training theta",
                    expected: d,
                    got: s.theta.len(),
                });
            }
            th.row_mut(i).assign(&s.theta);
        }
        rewards[i] = s.reward;
    }
    Ok(Batch {
        xs,
        thetas,
        rewards,
    })
}

/// Full-batch gradient descent on the replay loss
/// `L(w) = sum_i (theta_i . phi(x_i; w) - r_i)^2`.
///
/// Only hidden weights move; the caller passes the stored initial weights in
/// `start` when restarting from scratch. The `theta` field of the result is
/// `start.theta`, unchanged.
pub fn train_epoch(
    start: &NetworkParams,
    data: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let batch = build_batch(data, start.shape.input_dim, true)?;
    descend(start, &batch, cfg)
}

/// Joint gradient descent on `L(theta, w) = sum_i (theta . phi(x_i; w) - r_i)^2`,
/// moving both the hidden weights and the shared output layer. Used by the
/// diagonal NeuralUCB baseline, whose score model owns its output weight.
pub fn train_epoch_joint(
    start: &NetworkParams,
    data: &[TrainSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let batch = build_batch(data, start.shape.input_dim, false)?;
    descend(start, &batch, cfg)
}
