//! Experiment orchestration: seeded runs, regret accounting, suite
//! aggregation and artifact emission.

mod config;
mod svg;
mod trace;

pub use config::{AlphaSpec, EnvSpec, ExperimentConfig};
pub use svg::render_regret_svg;
pub use trace::{
    read_aggregate_csv, read_trace_csv, write_aggregate_csv, write_trace_csv, Aggregate,
    RegretTrace, TraceRow,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::env::{self, ContextSet, RawDataset};
use crate::error::{Error, Result};
use crate::policies::{Agent, AgentConfig, Algorithm};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "NLUCB_OUT_DIR";

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable per-purpose seed derivation, so the environment stream, the reward
/// noise and the agent's own randomness are independent but reproducible.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ tag.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

const TAG_STREAM: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_AGENT: u64 = 3;

fn build_rounds(
    cfg: &ExperimentConfig,
    seed: u64,
    preloaded: Option<&RawDataset>,
) -> Result<Vec<ContextSet>> {
    let stream_seed = derive_seed(seed, TAG_STREAM);
    match &cfg.environment {
        EnvSpec::Synthetic { kind, d_raw, arms } => {
            env::synth_rounds(*kind, *d_raw, *arms, cfg.horizon, stream_seed)
        }
        EnvSpec::Dataset { .. } => {
            let owned;
            let ds = match preloaded {
                Some(ds) => ds,
                None => {
                    owned = cfg.load_dataset()?;
                    &owned
                }
            };
            env::make_rounds(ds, cfg.horizon, stream_seed, cfg.cycle)
        }
    }
}

fn agent_for(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    sample: &ContextSet,
) -> Result<Agent> {
    let arms = sample.arms();
    let feature_dim = sample.features[0].len();
    let raw_dim = sample.raw[0].len();
    let agent_cfg = AgentConfig {
        algorithm,
        arms,
        feature_dim,
        raw_dim,
        epoch_length: cfg.epoch_length,
        alpha: cfg.alpha_schedule(feature_dim, arms)?,
        lambda: cfg.lambda,
        // validated by Agent::new only for the neural algorithms, so the
        // linear/diagnostic agents ignore an inapplicable network shape
        shape: crate::network::NetworkShape {
            input_dim: feature_dim,
            width: cfg.width,
            depth: cfg.depth,
        },
        train: cfg.train_config(),
        warm_start: cfg.warm_start,
        warm_start_updates: cfg.warm_start_updates,
        warm_restart: cfg.warm_restart,
        seed: derive_seed(seed, TAG_AGENT),
    };
    Agent::new(agent_cfg)
}

fn run_loop(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    rounds: &[ContextSet],
) -> (RegretTrace, Option<Error>) {
    let mut trace = RegretTrace {
        algorithm: algorithm.tag().to_string(),
        seed,
        config_hash: cfg.config_hash(),
        rows: Vec::with_capacity(rounds.len()),
    };
    let mut agent = match agent_for(cfg, algorithm, seed, &rounds[0]) {
        Ok(a) => a,
        Err(e) => return (trace, Some(e)),
    };
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_NOISE));
    let mut cum_regret = 0.0;
    for ctx in rounds {
        let t = ctx.round;
        let started = Instant::now();
        let step = (|| -> Result<TraceRow> {
            let arm = agent.select_arm(ctx, t)?;
            let reward = env::draw_reward(ctx, arm, cfg.noise, &mut noise_rng)?;
            agent.observe(ctx, t, arm, reward)?;
            agent.maybe_retrain(t)?;
            let inst = ctx.expected_rewards[ctx.optimal_arm] - ctx.expected_rewards[arm];
            Ok(TraceRow {
                t,
                arm,
                reward,
                inst_regret: inst,
                cum_regret: 0.0,
                epoch: (t - 1) / cfg.epoch_length as u64 + 1,
                wall_ms: 0.0,
            })
        })();
        match step {
            Ok(mut row) => {
                cum_regret += row.inst_regret;
                row.cum_regret = cum_regret;
                row.wall_ms = if cfg.zero_wall_time {
                    0.0
                } else {
                    started.elapsed().as_secs_f64() * 1e3
                };
                trace.rows.push(row);
            }
            Err(e) => return (trace, Some(e)),
        }
    }
    (trace, None)
}

/// Runs one (algorithm, seed) pair over the configured environment,
/// recording the full regret trace. On failure the trace collected so far is
/// flushed to the output directory (if any) before the error is returned.
pub fn run_one(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> Result<RegretTrace> {
    run_one_with(cfg, algorithm, seed, None)
}

fn run_one_with(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    seed: u64,
    preloaded: Option<&RawDataset>,
) -> Result<RegretTrace> {
    cfg.validate()?;
    let rounds = build_rounds(cfg, seed, preloaded)?;
    if rounds.is_empty() {
        return Err(Error::Invalid("horizon must be at least 1".into()));
    }
    let arms = rounds[0].arms();
    if cfg.warm_start * arms > cfg.horizon {
        return Err(Error::Config(format!(
            "warm_start*arms = {} exceeds horizon {}",
            cfg.warm_start * arms,
            cfg.horizon
        )));
    }
    let (trace, failure) = run_loop(cfg, algorithm, seed, &rounds);
    match failure {
        None => Ok(trace),
        Some(e) => {
            if let Some(dir) = cfg.out_dir.as_ref() {
                let _ = std::fs::create_dir_all(dir);
                let path = dir.join(format!("trace_{}_{}.partial.csv", algorithm.tag(), seed));
                let _ = write_trace_csv(&trace, &path);
            }
            Err(e)
        }
    }
}

/// One failed run inside a suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub algorithm: String,
    pub seed: u64,
    pub message: String,
}

/// Everything a suite produced.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub traces: Vec<RegretTrace>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<SuiteFailure>,
    pub out_dir: Option<PathBuf>,
}

/// Mean/std of cumulative regret per round over runs, sorted by seed so the
/// result does not depend on completion order.
pub fn aggregate_traces(algorithm: &str, traces: &[&RegretTrace]) -> Result<Aggregate> {
    if traces.is_empty() {
        return Err(Error::Invalid("no traces to aggregate".into()));
    }
    let mut sorted: Vec<&RegretTrace> = traces.to_vec();
    sorted.sort_by_key(|t| t.seed);
    let horizon = sorted[0].rows.len();
    for t in &sorted {
        if t.rows.len() != horizon {
            return Err(Error::Invalid(
                "traces with different horizons cannot be aggregated".into(),
            ));
        }
    }
    let n = sorted.len() as f64;
    let mut mean = vec![0.0; horizon];
    let mut std = vec![0.0; horizon];
    for i in 0..horizon {
        let mut s = 0.0;
        for t in &sorted {
            s += t.rows[i].cum_regret;
        }
        let m = s / n;
        mean[i] = m;
        if sorted.len() > 1 {
            let mut ss = 0.0;
            for t in &sorted {
                let d = t.rows[i].cum_regret - m;
                ss += d * d;
            }
            std[i] = (ss / (n - 1.0)).sqrt();
        }
    }
    Ok(Aggregate {
        algorithm: algorithm.to_string(),
        mean_cum: mean,
        std_cum: std,
        runs: sorted.len(),
        config_hash: sorted[0].config_hash.clone(),
    })
}

/// Runs `repetitions` seeds for every configured algorithm, writes per-run
/// trace CSVs and per-algorithm aggregates into the output directory, and
/// returns everything. Individual run failures are recorded and the suite
/// continues.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutcome> {
    let mut cfg = cfg.clone();
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.out_dir = Some(PathBuf::from(dir));
        }
    }
    cfg.validate()?;
    let preloaded = match &cfg.environment {
        EnvSpec::Dataset { .. } => Some(cfg.load_dataset()?),
        _ => None,
    };
    if let Some(dir) = cfg.out_dir.as_ref() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }

    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for &algorithm in &cfg.algorithms {
        for rep in 0..cfg.repetitions {
            let seed = cfg.base_seed + rep as u64;
            match run_one_with(&cfg, algorithm, seed, preloaded.as_ref()) {
                Ok(trace) => {
                    if let Some(dir) = cfg.out_dir.as_ref() {
                        let path = dir.join(format!("trace_{}_{}.csv", algorithm.tag(), seed));
                        write_trace_csv(&trace, &path)?;
                    }
                    traces.push(trace);
                }
                Err(e) => failures.push(SuiteFailure {
                    algorithm: algorithm.tag().to_string(),
                    seed,
                    message: e.to_string(),
                }),
            }
        }
    }

    let mut aggregates = Vec::new();
    for &algorithm in &cfg.algorithms {
        let runs: Vec<&RegretTrace> = traces
            .iter()
            .filter(|t| t.algorithm == algorithm.tag())
            .collect();
        if runs.is_empty() {
            continue;
        }
        let agg = aggregate_traces(algorithm.tag(), &runs)?;
        if let Some(dir) = cfg.out_dir.as_ref() {
            let path = dir.join(format!("agg_{}.csv", algorithm.tag()));
            write_aggregate_csv(&agg, &path)?;
        }
        aggregates.push(agg);
    }
    Ok(SuiteOutcome {
        traces,
        aggregates,
        failures,
        out_dir: cfg.out_dir.clone(),
    })
}

/// Crash-resume snapshot: the serialized agent plus its round index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub version: u32,
    pub round: u64,
    pub agent: Agent,
}

const AGENT_SNAPSHOT_VERSION: u32 = 1;

pub fn save_agent_snapshot(path: &Path, agent: &Agent, round: u64) -> Result<()> {
    let snap = AgentSnapshot {
        version: AGENT_SNAPSHOT_VERSION,
        round,
        agent: agent.clone(),
    };
    let text = serde_json::to_string(&snap)
        .map_err(|e| Error::Invalid(format!("agent snapshot encode: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_agent_snapshot(path: &Path) -> Result<AgentSnapshot> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let snap: AgentSnapshot = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("agent snapshot decode: {e}")))?;
    if snap.version != AGENT_SNAPSHOT_VERSION {
        return Err(Error::Invalid(format!(
            "unsupported agent snapshot version {}",
            snap.version
        )));
    }
    Ok(snap)
}
