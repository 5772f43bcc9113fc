//! End-to-end harness behavior: regret accounting, determinism, suite
//! aggregation, snapshots and the wall-time bookkeeping.

mod support;

use std::time::Instant;

use nlucb::env::SyntheticKind;
use nlucb::harness::{
    aggregate_traces, load_agent_snapshot, read_trace_csv, run_one, run_suite,
    save_agent_snapshot, write_trace_csv, AlphaSpec, EnvSpec, ExperimentConfig,
};
use nlucb::network::HistoryMode;
use nlucb::policies::{Agent, Algorithm};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.environment = EnvSpec::Synthetic {
        kind: SyntheticKind::Cosine,
        d_raw: 4,
        arms: 3,
    };
    cfg.horizon = 300;
    cfg.epoch_length = 50;
    cfg.width = 16;
    cfg.depth = 2;
    cfg.alpha = AlphaSpec::Fixed(0.05);
    cfg.step_size = 1e-4;
    cfg.max_iters = 40;
    cfg.stop_tol = 1e-8;
    cfg.history = HistoryMode::EpochOnly;
    cfg.noise = 0.1;
    cfg.warm_start = 2;
    cfg.repetitions = 2;
    cfg.base_seed = 0;
    cfg.zero_wall_time = true;
    cfg
}

#[test]
fn oracle_agent_has_zero_regret() {
    let cfg = small_config();
    let trace = run_one(&cfg, Algorithm::Oracle, 1).unwrap();
    assert_eq!(trace.rows.len(), 300);
    assert_eq!(trace.final_cum_regret(), 0.0);
    assert!(trace.rows.iter().all(|r| r.inst_regret == 0.0));
}

#[test]
fn uniform_agent_matches_analytic_regret_on_classification() {
    // per-round regret of the uniform agent is (K-1)/K in expectation
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("blobs.csv");
    support::write_angular_dataset(&csv, 5, 4, 1200, 9);
    let mut cfg = small_config();
    cfg.environment = EnvSpec::Dataset {
        name: "blobs".into(),
        path: Some(csv),
    };
    cfg.horizon = 5000;
    cfg.cycle = true;
    cfg.noise = 0.0;
    cfg.warm_start = 0;
    let trace = run_one(&cfg, Algorithm::UniformRandom, 3).unwrap();
    let per_round = trace.final_cum_regret() / 5000.0;
    let want = 3.0 / 4.0;
    assert!(
        (per_round - want).abs() <= 0.05 * want,
        "per-round regret {per_round} vs {want}"
    );
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let a = run_one(&cfg, Algorithm::NeuralLinUcb, 5).unwrap();
    let b = run_one(&cfg, Algorithm::NeuralLinUcb, 5).unwrap();
    let pa = dir.path().join("a.csv");
    let pb = dir.path().join("b.csv");
    write_trace_csv(&a, &pa).unwrap();
    write_trace_csv(&b, &pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
}

#[test]
fn cumulative_regret_is_recomputable_and_monotone() {
    let cfg = small_config();
    let trace = run_one(&cfg, Algorithm::NeuralLinear, 2).unwrap();
    let mut cum = 0.0;
    let mut prev = 0.0;
    for row in &trace.rows {
        assert!(row.inst_regret >= 0.0);
        cum += row.inst_regret;
        assert_eq!(cum, row.cum_regret, "bookkeeping at t={}", row.t);
        assert!(row.cum_regret >= prev);
        prev = row.cum_regret;
        assert_eq!(row.epoch, (row.t - 1) / 50 + 1);
    }
    assert!(trace.final_cum_regret() <= 300.0);
}

#[test]
fn wall_time_sums_to_the_measured_elapsed_time() {
    let mut cfg = small_config();
    cfg.zero_wall_time = false;
    cfg.horizon = 200;
    cfg.max_iters = 60; // keep the loop dominated by real work
    let started = Instant::now();
    let trace = run_one(&cfg, Algorithm::NeuralLinUcb, 1).unwrap();
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    let summed: f64 = trace.rows.iter().map(|r| r.wall_ms).sum();
    assert!(trace.rows.iter().all(|r| r.wall_ms >= 0.0));
    assert!(
        summed <= elapsed_ms && summed >= 0.5 * elapsed_ms,
        "sum {summed:.1}ms vs elapsed {elapsed_ms:.1}ms"
    );
    // the loop itself should account for at least 90% of the elapsed time
    // minus environment construction; allow 10% slack per the contract
    let rounds_fraction = summed / elapsed_ms;
    assert!(rounds_fraction > 0.9, "rounds cover {rounds_fraction:.2} of the run");
}

#[test]
fn suite_writes_artifacts_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.algorithms = vec![Algorithm::LinUcb, Algorithm::Oracle];
    cfg.repetitions = 2;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let outcome = run_suite(&cfg).unwrap();
    assert_eq!(outcome.traces.len(), 4);
    assert!(outcome.failures.is_empty());
    assert_eq!(outcome.aggregates.len(), 2);
    for alg in ["linucb", "oracle"] {
        for seed in 0..2 {
            let p = dir.path().join(format!("trace_{alg}_{seed}.csv"));
            assert!(p.exists(), "{}", p.display());
            let trace = read_trace_csv(&p).unwrap();
            assert_eq!(trace.rows.len(), 300);
            assert_eq!(trace.config_hash, cfg.config_hash());
        }
        assert!(dir.path().join(format!("agg_{alg}.csv")).exists());
    }
    // single-trace aggregate equals the trace itself
    let one = aggregate_traces("x", &[&outcome.traces[0]]).unwrap();
    for (m, row) in one.mean_cum.iter().zip(outcome.traces[0].rows.iter()) {
        assert_eq!(*m, row.cum_regret);
    }
    assert!(one.std_cum.iter().all(|s| *s == 0.0));
}

#[test]
fn aggregation_is_permutation_invariant_and_degenerate_std_is_zero() {
    let cfg = small_config();
    let a = run_one(&cfg, Algorithm::LinUcb, 0).unwrap();
    let b = run_one(&cfg, Algorithm::LinUcb, 1).unwrap();
    let c = run_one(&cfg, Algorithm::LinUcb, 2).unwrap();
    let fwd = aggregate_traces("linucb", &[&a, &b, &c]).unwrap();
    let rev = aggregate_traces("linucb", &[&c, &a, &b]).unwrap();
    assert_eq!(fwd, rev);

    let twin = a.clone();
    let degenerate = aggregate_traces("linucb", &[&a, &twin]).unwrap();
    assert!(degenerate.std_cum.iter().all(|s| *s == 0.0));
}

#[test]
fn suite_records_partial_failures_and_continues() {
    // an odd network width is rejected when the neural agent is built; the
    // linear baseline never touches the network and completes normally
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.width = 17;
    cfg.algorithms = vec![Algorithm::NeuralLinUcb, Algorithm::LinUcb];
    cfg.repetitions = 1;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let outcome = run_suite(&cfg).unwrap();
    assert_eq!(outcome.traces.len(), 1, "linucb still completes");
    assert_eq!(outcome.traces[0].algorithm, "linucb");
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].algorithm, "neural-linucb");
    assert!(outcome.failures[0].message.contains("width"));
    // the trace-so-far (here: nothing happened yet) was flushed
    let partial = dir.path().join("trace_neural-linucb_0.partial.csv");
    assert!(partial.exists());
    assert!(read_trace_csv(&partial).unwrap().rows.is_empty());
}

#[test]
fn theorem_alpha_schedule_runs_end_to_end() {
    let mut cfg = small_config();
    cfg.environment = EnvSpec::Synthetic {
        kind: SyntheticKind::Quadratic,
        d_raw: 4,
        arms: 3,
    };
    cfg.alpha = AlphaSpec::Theorem {
        nu: 0.1,
        delta: 0.05,
        theta_norm: 1.0,
    };
    cfg.horizon = 150;
    let trace = run_one(&cfg, Algorithm::NeuralLinUcb, 4).unwrap();
    assert_eq!(trace.rows.len(), 150);
    assert!(trace.final_cum_regret().is_finite());
}

#[test]
fn manifest_resolves_the_dataset_path() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    support::write_angular_dataset(&csv, 4, 3, 400, 5);
    let manifest_path = dir.path().join("manifest.json");
    std::fs::write(
        &manifest_path,
        format!(
            r#"{{"datasets": {{"toy": {{"path": "{}"}}}}}}"#,
            csv.display()
        ),
    )
    .unwrap();
    let mut cfg = small_config();
    cfg.environment = EnvSpec::Dataset {
        name: "toy".into(),
        path: None,
    };
    cfg.manifest = Some(manifest_path);
    cfg.horizon = 200;
    cfg.noise = 0.0;
    let trace = run_one(&cfg, Algorithm::LinUcb, 0).unwrap();
    assert_eq!(trace.rows.len(), 200);

    // manifest-declared dimensions are enforced at load time
    let strict = dir.path().join("strict.json");
    std::fs::write(
        &strict,
        format!(
            r#"{{"datasets": {{"toy": {{"path": "{}", "attributes": 9, "arms": 3}}}}}}"#,
            csv.display()
        ),
    )
    .unwrap();
    cfg.manifest = Some(strict);
    let err = run_one(&cfg, Algorithm::LinUcb, 0).unwrap_err();
    assert!(err.to_string().contains("attributes"), "{err}");
}

#[test]
fn agent_snapshot_resumes_identically() {
    let rounds = nlucb::env::synth_rounds(SyntheticKind::Cosine, 4, 3, 60, 11).unwrap();
    let agent_cfg = nlucb::policies::AgentConfig {
        algorithm: Algorithm::NeuralLinear,
        arms: 3,
        feature_dim: 8,
        raw_dim: 4,
        epoch_length: 20,
        alpha: nlucb::ridge::AlphaSchedule::Fixed(0.05),
        lambda: 1.0,
        shape: nlucb::network::NetworkShape::new(8, 16, 2).unwrap(),
        train: nlucb::network::TrainConfig {
            step_size: 1e-4,
            max_iters: 30,
            stop_tol: 1e-8,
            history: HistoryMode::EpochOnly,
        },
        warm_start: 1,
        warm_start_updates: true,
        warm_restart: false,
        seed: 3,
    };
    let mut agent = Agent::new(agent_cfg).unwrap();
    for (i, ctx) in rounds.iter().take(30).enumerate() {
        let t = (i + 1) as u64;
        let arm = agent.select_arm(ctx, t).unwrap();
        agent.observe(ctx, t, arm, ctx.expected_rewards[arm]).unwrap();
        agent.maybe_retrain(t).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    save_agent_snapshot(&path, &agent, 30).unwrap();
    let snap = load_agent_snapshot(&path).unwrap();
    assert_eq!(snap.round, 30);
    let mut resumed = snap.agent;
    for (i, ctx) in rounds.iter().enumerate().skip(30) {
        let t = (i + 1) as u64;
        let a = agent.select_arm(ctx, t).unwrap();
        let b = resumed.select_arm(ctx, t).unwrap();
        assert_eq!(a, b, "diverged at t={t}");
        agent.observe(ctx, t, a, ctx.expected_rewards[a]).unwrap();
        resumed.observe(ctx, t, b, ctx.expected_rewards[b]).unwrap();
        agent.maybe_retrain(t).unwrap();
        resumed.maybe_retrain(t).unwrap();
    }
}
