//! Bandit agents behind one select / observe / retrain contract.
//!
//! All agents share the warm-start rule (the first `warm_start * K` rounds
//! are round-robin) and break score ties toward the lowest arm index.
//! Rounds are 1-based; hidden weights only move when `t % H == 0`, so
//! feature evaluations within an epoch all use the same weights.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ContextSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{
    self, HistoryMode, NetworkParams, NetworkShape, TrainConfig, TrainSample,
};
use crate::ridge::{AlphaSchedule, RidgeState};

/// Features this small are the exact-arithmetic zeros of the symmetric
/// initialization on duplicated-halves inputs (float noise ~1e-14); folding
/// them into the ridge state would only replace theta_0 with cancellation
/// noise, so the update is skipped and theta_0 survives until real features
/// exist. Genuine features are O(1).
const FEATURE_FLOOR: f64 = 1e-9;

/// Agent families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Deep representation, last-layer UCB exploration.
    NeuralLinUcb,
    /// Disjoint-model linear UCB on the raw contexts.
    LinUcb,
    /// UCB over the full parameter gradient with a diagonal design matrix.
    NeuralUcbDiag,
    /// Deep representation with posterior sampling on the last layer.
    NeuralLinear,
    /// Uniform-random diagnostic agent.
    UniformRandom,
    /// Oracle diagnostic agent (always plays the optimal arm).
    Oracle,
}

impl Algorithm {
    pub fn tag(&self) -> &'static str {
        match self {
            Algorithm::NeuralLinUcb => "neural-linucb",
            Algorithm::LinUcb => "linucb",
            Algorithm::NeuralUcbDiag => "neuralucb-diag",
            Algorithm::NeuralLinear => "neural-linear",
            Algorithm::UniformRandom => "uniform-random",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn is_neural(&self) -> bool {
        matches!(
            self,
            Algorithm::NeuralLinUcb | Algorithm::NeuralUcbDiag | Algorithm::NeuralLinear
        )
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neural-linucb" => Ok(Algorithm::NeuralLinUcb),
            "linucb" => Ok(Algorithm::LinUcb),
            "neuralucb-diag" => Ok(Algorithm::NeuralUcbDiag),
            "neural-linear" => Ok(Algorithm::NeuralLinear),
            "uniform-random" => Ok(Algorithm::UniformRandom),
            "oracle" => Ok(Algorithm::Oracle),
            other => Err(Error::Invalid(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Everything needed to build an agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    /// Number of arms K.
    pub arms: usize,
    /// Dimension of the preprocessed per-arm features.
    pub feature_dim: usize,
    /// Dimension of the raw contexts the linear baseline sees.
    pub raw_dim: usize,
    /// Epoch length H.
    pub epoch_length: usize,
    pub alpha: AlphaSchedule,
    pub lambda: f64,
    /// Network shape for the neural agents; `input_dim` must equal
    /// `feature_dim`.
    pub shape: NetworkShape,
    pub train: TrainConfig,
    /// Round-robin pulls per arm before adaptive selection.
    pub warm_start: usize,
    /// Feed warm-start rounds into the ridge state (replay data is kept
    /// either way).
    pub warm_start_updates: bool,
    /// Restart retraining from the previous epoch's weights instead of the
    /// stored initial weights.
    pub warm_restart: bool,
    pub seed: u64,
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(Error::Invalid("need at least one arm".into()));
        }
        if self.epoch_length == 0 {
            return Err(Error::Invalid("epoch length must be >= 1".into()));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::Invalid("lambda must be positive".into()));
        }
        self.alpha.validate()?;
        if self.algorithm.is_neural() {
            self.shape.validate()?;
            self.train.validate()?;
            if self.shape.input_dim != self.feature_dim {
                return Err(Error::Shape(format!(
                    "network input_dim {} must match feature_dim {}",
                    self.shape.input_dim, self.feature_dim
                )));
            }
        }
        Ok(())
    }

    fn warm_rounds(&self) -> u64 {
        (self.warm_start * self.arms) as u64
    }
}

/// Deep-representation state shared by the UCB and posterior-sampling
/// variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeepState {
    params: NetworkParams,
    initial_hidden: Vec<Array2<f64>>,
    ridge: RidgeState,
    buffer: Vec<TrainSample>,
    /// Diagnostic hook: score with the raw features instead of the network.
    identity_features: bool,
}

impl DeepState {
    fn feature(&self, ctx: &ContextSet, arm: usize) -> Result<Array1<f64>> {
        if self.identity_features {
            Ok(ctx.features[arm].clone())
        } else {
            self.params.forward_phi(&ctx.features[arm].view())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagState {
    params: NetworkParams,
    initial_hidden: Vec<Array2<f64>>,
    initial_theta: Array1<f64>,
    /// Diagonal of the accumulated gradient design matrix, length d + p.
    z: Array1<f64>,
    buffer: Vec<TrainSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum AgentKind {
    NeuralLinUcb(DeepState),
    LinUcb { arms: Vec<RidgeState> },
    NeuralUcbDiag(DiagState),
    NeuralLinear { state: DeepState, rng: ChaCha8Rng },
    UniformRandom { rng: ChaCha8Rng },
    Oracle,
}

/// A bandit agent: select an arm, observe the chosen arm's reward, retrain
/// on epoch boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Agent {
    cfg: AgentConfig,
    kind: AgentKind,
}

impl Agent {
    pub fn new(cfg: AgentConfig) -> Result<Agent> {
        cfg.validate()?;
        let kind = match cfg.algorithm {
            Algorithm::NeuralLinUcb | Algorithm::NeuralLinear => {
                let params = network::init_params(cfg.shape, cfg.seed)?;
                let ridge = RidgeState::new(cfg.feature_dim, cfg.lambda, params.theta.clone())?;
                let state = DeepState {
                    initial_hidden: params.hidden.clone(),
                    params,
                    ridge,
                    buffer: Vec::new(),
                    identity_features: false,
                };
                if cfg.algorithm == Algorithm::NeuralLinUcb {
                    AgentKind::NeuralLinUcb(state)
                } else {
                    AgentKind::NeuralLinear {
                        state,
                        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x006e_6575_7261_6c00),
                    }
                }
            }
            Algorithm::LinUcb => {
                let arms = (0..cfg.arms)
                    .map(|_| RidgeState::new(cfg.raw_dim, cfg.lambda, Array1::zeros(cfg.raw_dim)))
                    .collect::<Result<Vec<_>>>()?;
                AgentKind::LinUcb { arms }
            }
            Algorithm::NeuralUcbDiag => {
                let params = network::init_params(cfg.shape, cfg.seed)?;
                let total = cfg.feature_dim + cfg.shape.hidden_param_count();
                AgentKind::NeuralUcbDiag(DiagState {
                    initial_hidden: params.hidden.clone(),
                    initial_theta: params.theta.clone(),
                    z: Array1::from_elem(total, cfg.lambda),
                    params,
                    buffer: Vec::new(),
                })
            }
            Algorithm::UniformRandom => AgentKind::UniformRandom {
                rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0075_6e69_666f_726d),
            },
            Algorithm::Oracle => AgentKind::Oracle,
        };
        Ok(Agent { cfg, kind })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.cfg.algorithm
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Replaces the learned feature map by the raw preprocessed context
    /// (diagnostic; valid for the deep-representation UCB agent, which then
    /// coincides with a single-model linear UCB and skips retraining).
    pub fn use_identity_features(&mut self) -> Result<()> {
        match &mut self.kind {
            AgentKind::NeuralLinUcb(state) => {
                state.identity_features = true;
                Ok(())
            }
            _ => Err(Error::Invalid(
                "identity feature hook only applies to neural-linucb".into(),
            )),
        }
    }

    fn check_ctx(&self, ctx: &ContextSet) -> Result<()> {
        if ctx.arms() == 0 {
            return Err(Error::Invalid("empty context set".into()));
        }
        if ctx.arms() != self.cfg.arms {
            return Err(Error::DimMismatch {
                context: "context arms",
                expected: self.cfg.arms,
                got: ctx.arms(),
            });
        }
        Ok(())
    }

    /// Per-arm scores for the scoring agents at round `t`. The
    /// posterior-sampling agent draws one fresh last-layer sample per call,
    /// so calling this advances its RNG.
    pub fn scores(&mut self, ctx: &ContextSet, t: u64) -> Result<Vec<f64>> {
        self.check_ctx(ctx)?;
        let alpha = self.cfg.alpha.alpha_at(t)?;
        let k = ctx.arms();
        match &mut self.kind {
            AgentKind::NeuralLinUcb(state) => (0..k)
                .map(|arm| {
                    let phi = state.feature(ctx, arm)?;
                    state.ridge.ucb_score(&phi.view(), alpha)
                })
                .collect(),
            AgentKind::LinUcb { arms } => (0..k)
                .map(|arm| arms[arm].ucb_score(&ctx.raw[arm].view(), alpha))
                .collect(),
            AgentKind::NeuralUcbDiag(state) => {
                let m = state.params.shape().width as f64;
                let d = state.params.shape().input_dim;
                (0..k)
                    .map(|arm| {
                        let g = state.params.grad_f_all(&ctx.features[arm].view())?;
                        let value = state.params.theta.dot(&g.slice(ndarray::s![..d]));
                        let mut q = 0.0;
                        for (gj, zj) in g.iter().zip(state.z.iter()) {
                            q += gj * gj / (m * zj);
                        }
                        Ok(value + alpha * q.sqrt())
                    })
                    .collect()
            }
            AgentKind::NeuralLinear { state, rng } => {
                // One posterior draw per call: theta_tilde ~ N(theta, alpha^2 A_inv)
                let chol = linalg::cholesky(&state.ridge.inverse().view())?;
                let dim = state.ridge.dim();
                let z = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let theta_tilde = state.ridge.theta() + &(chol.dot(&z) * alpha);
                (0..k)
                    .map(|arm| Ok(theta_tilde.dot(&state.feature(ctx, arm)?)))
                    .collect()
            }
            AgentKind::UniformRandom { .. } | AgentKind::Oracle => Err(Error::Invalid(format!(
                "{} does not produce scores",
                self.cfg.algorithm
            ))),
        }
    }

    /// Chooses an arm for round `t` (1-based). The first
    /// `warm_start * arms` rounds are round-robin (`t mod K`) for every
    /// learning algorithm; ties in the scores break toward the lowest index.
    /// The oracle diagnostic always plays the optimal arm (its regret is
    /// identically zero by definition), so it skips the warm start.
    pub fn select_arm(&mut self, ctx: &ContextSet, t: u64) -> Result<usize> {
        self.check_ctx(ctx)?;
        let k = ctx.arms();
        if let AgentKind::Oracle = self.kind {
            return Ok(ctx.optimal_arm);
        }
        if t <= self.cfg.warm_rounds() {
            return Ok((t % k as u64) as usize);
        }
        match &mut self.kind {
            AgentKind::UniformRandom { rng } => Ok(rng.random_range(0..k)),
            AgentKind::Oracle => unreachable!(),
            _ => {
                let scores = self.scores(ctx, t)?;
                Ok(linalg::argmax_lowest(&scores))
            }
        }
    }

    /// Folds the observed reward of the chosen arm into the agent state.
    pub fn observe(&mut self, ctx: &ContextSet, t: u64, arm: usize, reward: f64) -> Result<()> {
        self.check_ctx(ctx)?;
        if arm >= ctx.arms() {
            return Err(Error::Invalid(format!("chosen arm {arm} out of range")));
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite(format!("reward {reward}")));
        }
        let ridge_updates = self.cfg.warm_start_updates || t > self.cfg.warm_rounds();
        match &mut self.kind {
            AgentKind::NeuralLinUcb(state) | AgentKind::NeuralLinear { state, .. } => {
                let phi = state.feature(ctx, arm)?;
                if ridge_updates && phi.dot(&phi).sqrt() > FEATURE_FLOOR {
                    state.ridge.update(&phi.view(), reward)?;
                }
                state.buffer.push(TrainSample {
                    x: ctx.features[arm].clone(),
                    reward,
                    theta: state.ridge.theta().clone(),
                });
            }
            AgentKind::LinUcb { arms } => {
                if ridge_updates {
                    arms[arm].update(&ctx.raw[arm].view(), reward)?;
                }
            }
            AgentKind::NeuralUcbDiag(state) => {
                let m = state.params.shape().width as f64;
                let g = state.params.grad_f_all(&ctx.features[arm].view())?;
                for (zj, gj) in state.z.iter_mut().zip(g.iter()) {
                    *zj += gj * gj / m;
                }
                state.buffer.push(TrainSample {
                    x: ctx.features[arm].clone(),
                    reward,
                    theta: state.params.theta.clone(),
                });
            }
            AgentKind::UniformRandom { .. } | AgentKind::Oracle => {}
        }
        Ok(())
    }

    /// Retrains the neural feature map when `t % H == 0`; returns whether a
    /// training pass ran. Everything else is a no-op.
    pub fn maybe_retrain(&mut self, t: u64) -> Result<bool> {
        if t % self.cfg.epoch_length as u64 != 0 {
            return Ok(false);
        }
        let cfg = self.cfg.clone();
        match &mut self.kind {
            AgentKind::NeuralLinUcb(state) | AgentKind::NeuralLinear { state, .. } => {
                if state.identity_features {
                    return Ok(false);
                }
                let data = epoch_slice(&state.buffer, cfg.epoch_length, cfg.train.history);
                if data.is_empty() {
                    return Ok(false);
                }
                let start = if cfg.warm_restart {
                    state.params.clone()
                } else {
                    NetworkParams::from_parts(
                        cfg.shape,
                        state.initial_hidden.clone(),
                        state.params.theta.clone(),
                    )?
                };
                let out = network::train_epoch(&start, data, &cfg.train)?;
                state.params = out.params;
                Ok(true)
            }
            AgentKind::NeuralUcbDiag(state) => {
                let data = epoch_slice(&state.buffer, cfg.epoch_length, cfg.train.history);
                if data.is_empty() {
                    return Ok(false);
                }
                let start = if cfg.warm_restart {
                    state.params.clone()
                } else {
                    NetworkParams::from_parts(
                        cfg.shape,
                        state.initial_hidden.clone(),
                        state.initial_theta.clone(),
                    )?
                };
                let out = network::train_epoch_joint(&start, data, &cfg.train)?;
                state.params = out.params;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Shared ridge state of the deep-representation agents.
    pub fn ridge(&self) -> Option<&RidgeState> {
        match &self.kind {
            AgentKind::NeuralLinUcb(state) | AgentKind::NeuralLinear { state, .. } => {
                Some(&state.ridge)
            }
            _ => None,
        }
    }

    /// Per-arm ridge state of the disjoint linear baseline.
    pub fn arm_ridge(&self, arm: usize) -> Option<&RidgeState> {
        match &self.kind {
            AgentKind::LinUcb { arms } => arms.get(arm),
            _ => None,
        }
    }

    /// Current network parameters of the neural agents.
    pub fn network(&self) -> Option<&NetworkParams> {
        match &self.kind {
            AgentKind::NeuralLinUcb(state) | AgentKind::NeuralLinear { state, .. } => {
                Some(&state.params)
            }
            AgentKind::NeuralUcbDiag(state) => Some(&state.params),
            _ => None,
        }
    }

    /// Rounds of replay data held by the agent.
    pub fn buffer_len(&self) -> usize {
        match &self.kind {
            AgentKind::NeuralLinUcb(state) | AgentKind::NeuralLinear { state, .. } => {
                state.buffer.len()
            }
            AgentKind::NeuralUcbDiag(state) => state.buffer.len(),
            _ => 0,
        }
    }
}

/// The training window for the retrain at round `t % H == 0`: the whole
/// buffer in full-history mode, the last `H` rounds in epoch-only mode.
pub(crate) fn epoch_slice(buffer: &[TrainSample], h: usize, mode: HistoryMode) -> &[TrainSample] {
    match mode {
        HistoryMode::Full => buffer,
        HistoryMode::EpochOnly => {
            let start = buffer.len().saturating_sub(h);
            &buffer[start..]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::synth_rounds;
    use crate::env::SyntheticKind;

    fn base_config(algorithm: Algorithm, arms: usize, d_raw: usize) -> AgentConfig {
        let feature_dim = 2 * (d_raw + d_raw % 2);
        AgentConfig {
            algorithm,
            arms,
            feature_dim,
            raw_dim: d_raw,
            epoch_length: 10,
            alpha: AlphaSchedule::Fixed(0.1),
            lambda: 1.0,
            shape: NetworkShape::new(feature_dim, feature_dim.max(8), 2).unwrap(),
            train: TrainConfig {
                step_size: 1e-3,
                max_iters: 5,
                stop_tol: 1e-9,
                history: HistoryMode::Full,
            },
            warm_start: 1,
            warm_start_updates: true,
            warm_restart: false,
            seed: 7,
        }
    }

    #[test]
    fn single_arm_is_always_zero() {
        let rounds = synth_rounds(SyntheticKind::Linear, 4, 1, 5, 1).unwrap();
        let mut agent = Agent::new(base_config(Algorithm::NeuralLinUcb, 1, 4)).unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            assert_eq!(agent.select_arm(ctx, (i + 1) as u64).unwrap(), 0);
            agent.observe(ctx, (i + 1) as u64, 0, 0.5).unwrap();
        }
    }

    #[test]
    fn warm_start_is_round_robin_for_every_learning_algorithm() {
        let k = 3;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 3 * k, 2).unwrap();
        for algorithm in [
            Algorithm::NeuralLinUcb,
            Algorithm::LinUcb,
            Algorithm::NeuralUcbDiag,
            Algorithm::NeuralLinear,
            Algorithm::UniformRandom,
        ] {
            let mut cfg = base_config(algorithm, k, 4);
            cfg.warm_start = 3;
            let mut agent = Agent::new(cfg).unwrap();
            let mut pulls = vec![0usize; k];
            for (i, ctx) in rounds.iter().enumerate() {
                let t = (i + 1) as u64;
                let arm = agent.select_arm(ctx, t).unwrap();
                assert_eq!(arm, (t as usize) % k, "{algorithm} at t={t}");
                pulls[arm] += 1;
                agent.observe(ctx, t, arm, ctx.expected_rewards[arm]).unwrap();
            }
            assert!(pulls.iter().all(|&c| c == 3));
        }
        // the oracle diagnostic plays the optimal arm from round one
        let mut cfg = base_config(Algorithm::Oracle, k, 4);
        cfg.warm_start = 3;
        let mut agent = Agent::new(cfg).unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            assert_eq!(
                agent.select_arm(ctx, (i + 1) as u64).unwrap(),
                ctx.optimal_arm
            );
        }
    }

    #[test]
    fn zero_alpha_with_identity_features_is_greedy() {
        let k = 3;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 30, 3).unwrap();
        let mut cfg = base_config(Algorithm::NeuralLinUcb, k, 4);
        cfg.alpha = AlphaSchedule::Fixed(0.0);
        cfg.warm_start = 0;
        let mut agent = Agent::new(cfg).unwrap();
        agent.use_identity_features().unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let arm = agent.select_arm(ctx, t).unwrap();
            let theta = agent.ridge().unwrap().theta().clone();
            let greedy: Vec<f64> = ctx.features.iter().map(|x| theta.dot(x)).collect();
            assert_eq!(arm, linalg::argmax_lowest(&greedy));
            agent
                .observe(ctx, t, arm, ctx.expected_rewards[arm])
                .unwrap();
        }
    }

    #[test]
    fn exploration_bonus_can_override_the_greedy_gap() {
        // Arm 0 has the larger point estimate but a well-explored direction;
        // arm 1's bonus exceeds the gap. Checked against a brute-force
        // rescoring of both arms.
        let mut ridge = RidgeState::new(2, 1.0, ndarray::arr1(&[1.0, 0.4])).unwrap();
        for _ in 0..200 {
            ridge.update(&ndarray::arr1(&[1.0, 0.0]).view(), 0.1).unwrap();
        }
        let alpha = 0.5;
        let phi0 = ndarray::arr1(&[1.0, 0.0]);
        let phi1 = ndarray::arr1(&[0.0, 1.0]);
        let mean0 = ridge.theta().dot(&phi0);
        let mean1 = ridge.theta().dot(&phi1);
        assert!(mean0 > mean1);
        let score = |phi: &Array1<f64>| {
            let q = phi.dot(&ridge.inverse().dot(phi));
            ridge.theta().dot(phi) + alpha * q.sqrt()
        };
        assert!(score(&phi1) > score(&phi0));
        assert_eq!(
            linalg::argmax_lowest(&[
                ridge.ucb_score(&phi0.view(), alpha).unwrap(),
                ridge.ucb_score(&phi1.view(), alpha).unwrap()
            ]),
            1
        );
    }

    #[test]
    fn zero_rewards_keep_theta_zero() {
        let k = 2;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 20, 5).unwrap();
        let mut cfg = base_config(Algorithm::NeuralLinUcb, k, 4);
        cfg.warm_start = 0;
        let mut agent = Agent::new(cfg).unwrap();
        agent.use_identity_features().unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let arm = agent.select_arm(ctx, t).unwrap();
            agent.observe(ctx, t, arm, 0.0).unwrap();
            let b = agent.ridge().unwrap().moment();
            assert!(b.iter().all(|v| *v == 0.0));
            assert!(agent.ridge().unwrap().theta().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn linucb_models_are_disjoint() {
        let k = 2;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 6, 9).unwrap();
        let mut cfg = base_config(Algorithm::LinUcb, k, 4);
        cfg.warm_start = 0;
        let mut agent = Agent::new(cfg).unwrap();
        let before = agent.arm_ridge(1).unwrap().clone();
        agent.observe(&rounds[0], 1, 0, 1.0).unwrap();
        assert_eq!(agent.arm_ridge(1).unwrap(), &before);
        assert_ne!(agent.arm_ridge(0).unwrap(), &before);
    }

    #[test]
    fn retrain_fires_only_on_epoch_boundaries() {
        let k = 2;
        let rounds = synth_rounds(SyntheticKind::Cosine, 4, k, 20, 11).unwrap();
        let mut cfg = base_config(Algorithm::NeuralLinUcb, k, 4);
        cfg.epoch_length = 10;
        cfg.warm_start = 0;
        let mut agent = Agent::new(cfg).unwrap();
        let w0 = agent.network().unwrap().clone();
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let arm = agent.select_arm(ctx, t).unwrap();
            agent
                .observe(ctx, t, arm, ctx.expected_rewards[arm])
                .unwrap();
            let trained = agent.maybe_retrain(t).unwrap();
            assert_eq!(trained, t % 10 == 0, "t={t}");
            if t < 10 {
                assert_eq!(agent.network().unwrap(), &w0, "weights frozen inside epoch");
            }
            assert_eq!(agent.buffer_len(), t as usize);
        }
    }

    #[test]
    fn epoch_slice_selects_the_last_epoch() {
        let mk = |i: usize| TrainSample {
            x: Array1::zeros(2),
            reward: i as f64,
            theta: Array1::zeros(2),
        };
        let buffer: Vec<TrainSample> = (1..=20).map(mk).collect();
        let full = epoch_slice(&buffer, 10, HistoryMode::Full);
        assert_eq!(full.len(), 20);
        let epoch = epoch_slice(&buffer, 10, HistoryMode::EpochOnly);
        assert_eq!(epoch.len(), 10);
        assert_eq!(epoch[0].reward, 11.0);
        assert_eq!(epoch[9].reward, 20.0);
    }

    #[test]
    fn argmax_is_scale_invariant() {
        let scores = vec![0.3, 0.7, 0.7, 0.1];
        let scaled: Vec<f64> = scores.iter().map(|s| s * 42.0).collect();
        assert_eq!(
            linalg::argmax_lowest(&scores),
            linalg::argmax_lowest(&scaled)
        );
    }

    #[test]
    fn identity_features_match_single_model_linucb() {
        let k = 3;
        let d_raw = 4;
        let rounds = synth_rounds(SyntheticKind::Linear, d_raw, k, 60, 13).unwrap();
        let mut cfg = base_config(Algorithm::NeuralLinUcb, k, d_raw);
        cfg.warm_start = 1;
        cfg.alpha = AlphaSchedule::Fixed(0.25);
        let mut agent = Agent::new(cfg.clone()).unwrap();
        agent.use_identity_features().unwrap();

        // reference: one ridge model scoring the preprocessed features
        let mut reference = RidgeState::new(
            cfg.feature_dim,
            cfg.lambda,
            agent.ridge().unwrap().theta().clone(),
        )
        .unwrap();
        let mut noise = ChaCha8Rng::seed_from_u64(99);
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let expect = if t <= (cfg.warm_start * k) as u64 {
                (t % k as u64) as usize
            } else {
                let scores: Vec<f64> = ctx
                    .features
                    .iter()
                    .map(|x| reference.ucb_score(&x.view(), 0.25).unwrap())
                    .collect();
                linalg::argmax_lowest(&scores)
            };
            let arm = agent.select_arm(ctx, t).unwrap();
            assert_eq!(arm, expect, "round {t}");
            let r = crate::env::draw_reward(ctx, arm, 0.1, &mut noise).unwrap();
            agent.observe(ctx, t, arm, r).unwrap();
            reference.update(&ctx.features[arm].view(), r).unwrap();
            agent.maybe_retrain(t).unwrap();
        }
    }

    #[test]
    fn hand_replay_of_three_rounds() {
        // Identity feature map, d = 2, K = 2, alpha = 0: the state after
        // three rounds must match the hand-computed A_3, b_3, theta_3.
        let feats = [
            ndarray::arr1(&[1.0, 0.0]),
            ndarray::arr1(&[0.0, 1.0]),
            ndarray::arr1(&[0.6, 0.8]),
        ];
        let rewards = [1.0, 0.5, 0.2];
        let mut ridge = RidgeState::new(2, 1.0, Array1::zeros(2)).unwrap();
        for (x, r) in feats.iter().zip(rewards.iter()) {
            ridge.update(&x.view(), *r).unwrap();
        }
        // A_3 = I + sum x x^T
        let a = ridge.design_matrix();
        assert!((a[[0, 0]] - (1.0 + 1.0 + 0.36)).abs() < 1e-12);
        assert!((a[[0, 1]] - 0.48).abs() < 1e-12);
        assert!((a[[1, 1]] - (1.0 + 1.0 + 0.64)).abs() < 1e-12);
        let b = ridge.moment();
        assert!((b[0] - (1.0 + 0.12)).abs() < 1e-12);
        assert!((b[1] - (0.5 + 0.16)).abs() < 1e-12);
        // theta = A^{-1} b via an independent 2x2 inversion
        let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[0, 1]];
        let want0 = (a[[1, 1]] * b[0] - a[[0, 1]] * b[1]) / det;
        let want1 = (-a[[0, 1]] * b[0] + a[[0, 0]] * b[1]) / det;
        assert!((ridge.theta()[0] - want0).abs() < 1e-10);
        assert!((ridge.theta()[1] - want1).abs() < 1e-10);
    }

    #[test]
    fn same_seed_same_actions() {
        let k = 3;
        let rounds = synth_rounds(SyntheticKind::Cosine, 4, k, 40, 17).unwrap();
        for algorithm in [
            Algorithm::NeuralLinUcb,
            Algorithm::NeuralLinear,
            Algorithm::UniformRandom,
            Algorithm::NeuralUcbDiag,
        ] {
            let cfg = base_config(algorithm, k, 4);
            let run = |mut agent: Agent| -> Vec<usize> {
                let mut noise = ChaCha8Rng::seed_from_u64(1);
                let mut actions = Vec::new();
                for (i, ctx) in rounds.iter().enumerate() {
                    let t = (i + 1) as u64;
                    let arm = agent.select_arm(ctx, t).unwrap();
                    let r = crate::env::draw_reward(ctx, arm, 0.05, &mut noise).unwrap();
                    agent.observe(ctx, t, arm, r).unwrap();
                    agent.maybe_retrain(t).unwrap();
                    actions.push(arm);
                }
                actions
            };
            let a = run(Agent::new(cfg.clone()).unwrap());
            let b = run(Agent::new(cfg.clone()).unwrap());
            assert_eq!(a, b, "{algorithm}");
        }
    }

    #[test]
    fn diag_design_vector_stays_above_lambda() {
        let k = 3;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 25, 21).unwrap();
        let mut cfg = base_config(Algorithm::NeuralUcbDiag, k, 4);
        cfg.lambda = 1.5;
        let mut agent = Agent::new(cfg).unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let arm = agent.select_arm(ctx, t).unwrap();
            agent
                .observe(ctx, t, arm, ctx.expected_rewards[arm])
                .unwrap();
            agent.maybe_retrain(t).unwrap();
            if let AgentKind::NeuralUcbDiag(state) = &agent.kind {
                assert!(state.z.iter().all(|z| *z >= 1.5));
            } else {
                unreachable!();
            }
        }
    }

    #[test]
    fn warm_start_updates_flag_keeps_the_ridge_fresh() {
        let k = 2;
        let rounds = synth_rounds(SyntheticKind::Linear, 4, k, 10, 33).unwrap();
        let mut cfg = base_config(Algorithm::NeuralLinUcb, k, 4);
        cfg.warm_start = 3;
        cfg.warm_start_updates = false;
        let mut agent = Agent::new(cfg).unwrap();
        agent.use_identity_features().unwrap();
        for (i, ctx) in rounds.iter().enumerate() {
            let t = (i + 1) as u64;
            let arm = agent.select_arm(ctx, t).unwrap();
            agent.observe(ctx, t, arm, 1.0).unwrap();
            let count = agent.ridge().unwrap().update_count();
            // warm rounds are buffered but excluded from the ridge state
            assert_eq!(count, t.saturating_sub(3 * k as u64), "t={t}");
            assert_eq!(agent.buffer_len(), t as usize);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_contexts() {
        let rounds = synth_rounds(SyntheticKind::Linear, 4, 3, 1, 1).unwrap();
        let mut agent = Agent::new(base_config(Algorithm::LinUcb, 2, 4)).unwrap();
        assert!(agent.select_arm(&rounds[0], 1).is_err());
        let mut agent = Agent::new(base_config(Algorithm::LinUcb, 3, 4)).unwrap();
        assert!(agent.observe(&rounds[0], 1, 0, f64::NAN).is_err());
    }
}
