//! Contextual bandits with deep representations and shallow exploration.
//!
//! The crate provides:
//! - [`network`]: fully-connected ReLU feature networks with analytic
//!   gradients, block-symmetric initialization and full-batch gradient
//!   descent retraining;
//! - [`ridge`]: online ridge regression with a maintained rank-one inverse
//!   and UCB scoring;
//! - [`policies`]: the bandit agents (Neural-LinUCB, disjoint LinUCB,
//!   NeuralUCB with diagonal design matrix, Neural-Linear posterior
//!   sampling, plus uniform/oracle diagnostics);
//! - [`env`]: classification-derived and synthetic bandit environments with
//!   the unit-norm duplicated-halves feature pipeline;
//! - [`ntk`]: the analytic ReLU tangent-kernel recursion, a Monte-Carlo
//!   oracle for its Gaussian expectations, minimum-eigenvalue checks and the
//!   gradient-Gram width sweep;
//! - [`harness`]: seeded experiment orchestration with regret traces, CSV
//!   persistence and SVG regret curves.

pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod ntk;
pub mod policies;
pub mod ridge;

pub use env::{draw_reward, load_dataset, make_rounds, preprocess, synth_rounds};
pub use env::{ContextSet, Manifest, RawDataset, RewardKind, RewardModel, SyntheticKind};
pub use error::{Error, Result};
pub use harness::{run_one, run_suite, Aggregate, ExperimentConfig, RegretTrace, TraceRow};
pub use network::{
    init_params, train_epoch, HistoryMode, NetworkParams, NetworkShape, TrainConfig, TrainOutcome,
};
pub use ntk::{gram_convergence, mc_expectations, min_eigenvalue, ntk_matrix, ntk_pair};
pub use ntk::{GramSweep, KernelPair, NtkGram};
pub use policies::{Agent, AgentConfig, Algorithm};
pub use ridge::{AlphaSchedule, RidgeState};
