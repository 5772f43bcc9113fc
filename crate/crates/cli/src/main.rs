//! Command-line harness: run experiment suites, evaluate kernel matrices,
//! plot regret curves and validate configuration files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ndarray::Array1;

use nlucb::harness::{
    read_aggregate_csv, read_trace_csv, render_regret_svg, run_suite, Aggregate, ExperimentConfig,
};
use nlucb::ntk;

#[derive(Parser)]
#[command(
    name = "nlucb",
    about = "Contextual bandits with deep representations and shallow exploration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment suite and write traces + aggregates.
    Run {
        /// Configuration file (flat key=value or JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kernel diagnostics: Gram matrix, minimum eigenvalue and an optional
    /// gradient-Gram width sweep over points read from a CSV file.
    Ntk {
        /// CSV of raw row vectors; rows are preprocessed into the unit-norm
        /// duplicated-halves geometry before kernel evaluation.
        #[arg(long)]
        points: PathBuf,
        /// Number of hidden layers.
        #[arg(long)]
        depth: usize,
        /// Comma-separated widths for the gradient-Gram sweep.
        #[arg(long, value_delimiter = ',')]
        widths: Option<Vec<usize>>,
        /// Networks per width in the sweep.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Render aggregate (or trace) CSVs into one SVG regret plot.
    Plot {
        /// Glob over CSV files produced by `run`.
        #[arg(long = "in")]
        input: String,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a configuration file, including referenced files.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_points(path: &Path) -> anyhow::Result<Vec<Array1<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading points file {}", path.display()))?;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let raw: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{}: non-numeric field", path.display(), idx + 1))?;
        let v = Array1::from_vec(raw);
        points.push(nlucb::preprocess(&v.view())?);
    }
    if points.is_empty() {
        bail!("{}: no points", path.display());
    }
    Ok(points)
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(dir) = out {
        cfg.out_dir = Some(dir);
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("runs"));
    }
    let outcome = run_suite(&cfg)?;
    let dir = outcome.out_dir.clone().unwrap();
    if !outcome.aggregates.is_empty() {
        render_regret_svg(&outcome.aggregates, &dir.join("regret.svg"))?;
    }
    println!(
        "suite complete: {} runs ok, {} failed, artifacts in {}",
        outcome.traces.len(),
        outcome.failures.len(),
        dir.display()
    );
    for f in &outcome.failures {
        eprintln!("run failed: {} seed {}: {}", f.algorithm, f.seed, f.message);
    }
    if outcome.traces.is_empty() {
        bail!("every run failed");
    }
    Ok(())
}

fn cmd_ntk(
    points_path: &Path,
    depth: usize,
    widths: Option<Vec<usize>>,
    seeds: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let points = load_points(points_path)?;
    std::fs::create_dir_all(out)?;
    let gram = ntk::ntk_matrix(&points, depth)?;
    let lambda_min = ntk::min_eigenvalue(&gram)?;

    let mut text = String::new();
    text.push_str("#schema=ntk-gram-v1\n");
    text.push_str(&format!("#depth={depth}\n"));
    text.push_str(&format!("#lambda_min={lambda_min:.8e}\n"));
    let n = gram.matrix.nrows();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.8e}", gram.matrix[[i, j]])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let gram_path = out.join("gram.csv");
    std::fs::write(&gram_path, text)?;
    println!("gram: {} (lambda_min = {lambda_min:.6e})", gram_path.display());

    if let Some(widths) = widths {
        let sweep = ntk::gram_convergence(&points, depth, &widths, seeds, 0)?;
        let mut text = String::new();
        text.push_str("#schema=ntk-sweep-v1\n");
        text.push_str("m,seed,frob_error\n");
        for row in &sweep.rows {
            text.push_str(&format!(
                "{},{},{:.8e}\n",
                row.width, row.seed, row.frobenius_error
            ));
        }
        let sweep_path = out.join("sweep.csv");
        std::fs::write(&sweep_path, text)?;
        let means = sweep.mean_errors(&widths);
        println!("sweep: {} (mean errors {:?})", sweep_path.display(), means);
    }
    Ok(())
}

fn cmd_plot(pattern: &str, out: &Path) -> anyhow::Result<()> {
    let mut aggregates: Vec<Aggregate> = Vec::new();
    let mut matched = 0;
    for entry in glob::glob(pattern).context("bad glob pattern")? {
        let path = entry?;
        matched += 1;
        if let Ok(agg) = read_aggregate_csv(&path) {
            aggregates.push(agg);
            continue;
        }
        let trace = read_trace_csv(&path)
            .with_context(|| format!("{} is neither an aggregate nor a trace", path.display()))?;
        let cum: Vec<f64> = trace.rows.iter().map(|r| r.cum_regret).collect();
        aggregates.push(Aggregate {
            algorithm: format!("{} (seed {})", trace.algorithm, trace.seed),
            std_cum: vec![0.0; cum.len()],
            mean_cum: cum,
            runs: 1,
            config_hash: trace.config_hash,
        });
    }
    if matched == 0 {
        bail!("glob '{pattern}' matched no files");
    }
    aggregates.sort_by(|a, b| a.algorithm.cmp(&b.algorithm));
    render_regret_svg(&aggregates, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_validate(config: &Path) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    cfg.validate()?;
    println!("config ok (hash {})", cfg.config_hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Ntk {
            points,
            depth,
            widths,
            seeds,
            out,
        } => cmd_ntk(&points, depth, widths, seeds, &out),
        Command::Plot { input, out } => cmd_plot(&input, &out),
        Command::Validate { config } => cmd_validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
