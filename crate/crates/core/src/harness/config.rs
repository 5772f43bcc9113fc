//! Experiment configuration: a flat key=value grammar (JSON accepted as an
//! alternative encoding of the same keys), validation, and a canonical hash
//! recorded in every artifact.
//!
//! Recognized keys:
//!
//! ```text
//! environment        linear | quadratic | cosine | statlog | magic | covertype | <name>
//! dataset_path       CSV path for dataset environments
//! manifest           JSON file mapping dataset names to paths
//! d_raw              raw dimension (synthetic environments)
//! arms               number of arms (synthetic environments)
//! t                  horizon
//! h                  epoch length
//! m                  network width
//! l                  network depth (hidden layers)
//! lambda             ridge regularizer
//! alpha_mode         fixed | theorem
//! alpha              fixed exploration level
//! nu delta theta_norm   theorem-mode parameters
//! eta                gradient step size
//! iters              max gradient steps per retraining
//! eps_stop           early-stopping threshold on the loss change
//! history            full | epoch
//! warm_start         round-robin pulls per arm
//! warm_start_updates true | false
//! warm_restart       true | false (retrain from previous weights)
//! noise              reward noise scale
//! algorithms         comma-separated agent tags
//! reps               repetitions
//! seed               base seed (per-run seeds are base..base+reps-1)
//! out                output directory
//! cycle              true | false (reuse dataset instances)
//! zero_wall_time     true | false (record 0 in the wall-time column)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::env::{self, RawDataset, SyntheticKind};
use crate::error::{Error, Result};
use crate::network::{HistoryMode, TrainConfig};
use crate::policies::Algorithm;
use crate::ridge::AlphaSchedule;

/// Where the bandit rounds come from.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Synthetic {
        kind: SyntheticKind,
        d_raw: usize,
        arms: usize,
    },
    Dataset {
        name: String,
        path: Option<PathBuf>,
    },
}

/// Exploration schedule selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSpec {
    Fixed(f64),
    Theorem {
        nu: f64,
        delta: f64,
        theta_norm: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub manifest: Option<PathBuf>,
    pub algorithms: Vec<Algorithm>,
    /// Horizon T (warm-start rounds included).
    pub horizon: usize,
    /// Epoch length H.
    pub epoch_length: usize,
    pub width: usize,
    pub depth: usize,
    pub lambda: f64,
    pub alpha: AlphaSpec,
    pub step_size: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub history: HistoryMode,
    pub warm_start: usize,
    pub warm_start_updates: bool,
    pub warm_restart: bool,
    pub noise: f64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub out_dir: Option<PathBuf>,
    pub cycle: bool,
    pub zero_wall_time: bool,
}

impl ExperimentConfig {
    /// Desk-scale defaults on the cosine synthetic environment: width 128,
    /// horizon 3000, epoch 100, up to 200 gradient steps per retraining.
    /// These are also the fallback values for keys omitted from a config
    /// file; `configs/desk.cfg` ships a faster tuned variant that sets its
    /// keys explicitly.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            environment: EnvSpec::Synthetic {
                kind: SyntheticKind::Cosine,
                d_raw: 8,
                arms: 4,
            },
            manifest: None,
            algorithms: vec![
                Algorithm::NeuralLinUcb,
                Algorithm::LinUcb,
                Algorithm::NeuralUcbDiag,
                Algorithm::NeuralLinear,
            ],
            horizon: 3000,
            epoch_length: 100,
            width: 128,
            depth: 2,
            lambda: 1.0,
            alpha: AlphaSpec::Fixed(0.02),
            step_size: 5e-5,
            max_iters: 200,
            stop_tol: 1e-6,
            history: HistoryMode::Full,
            warm_start: 3,
            warm_start_updates: true,
            warm_restart: false,
            noise: 0.1,
            repetitions: 10,
            base_seed: 0,
            out_dir: None,
            cycle: false,
            zero_wall_time: false,
        }
    }

    /// The full-scale profile: width 2000, depth 2, horizon 15000, epoch 100,
    /// step size 1e-5, 1000 iterations, lambda 1, alpha 0.02, full history.
    pub fn full_scale_default() -> Self {
        let mut cfg = Self::desk_default();
        cfg.horizon = 15_000;
        cfg.width = 2000;
        cfg.depth = 2;
        cfg.epoch_length = 100;
        cfg.step_size = 1e-5;
        cfg.max_iters = 1000;
        cfg.stop_tol = 1e-6;
        cfg.lambda = 1.0;
        cfg.alpha = AlphaSpec::Fixed(0.02);
        cfg.history = HistoryMode::Full;
        cfg
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let display = path.display().to_string();
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_flat(&text, &display)
        }
    }

    /// Parses the flat `key = value` grammar; `#` starts a comment.
    pub fn from_flat(text: &str, origin: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: format!("expected key=value, got '{line}'"),
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::from_map(map)
    }

    /// Parses the JSON encoding: one object with the same keys as the flat
    /// grammar.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("json config: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Config("json config must be an object".into()))?;
        let mut map = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(Error::Config(format!(
                        "key '{k}' must be a scalar, got {other}"
                    )))
                }
            };
            map.insert(k.clone(), s);
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self> {
        fn take(map: &mut BTreeMap<String, String>, key: &str) -> Option<String> {
            map.remove(key)
        }
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
        }

        let env_name = take(&mut map, "environment")
            .ok_or_else(|| Error::Config("missing required key 'environment'".into()))?;
        let environment = match env_name.parse::<SyntheticKind>() {
            Ok(kind) => {
                let d_raw = take(&mut map, "d_raw")
                    .ok_or_else(|| Error::Config("synthetic environment needs 'd_raw'".into()))?;
                let arms = take(&mut map, "arms")
                    .ok_or_else(|| Error::Config("synthetic environment needs 'arms'".into()))?;
                EnvSpec::Synthetic {
                    kind,
                    d_raw: parse("d_raw", &d_raw)?,
                    arms: parse("arms", &arms)?,
                }
            }
            Err(_) => EnvSpec::Dataset {
                name: env_name,
                path: take(&mut map, "dataset_path").map(PathBuf::from),
            },
        };

        let mut cfg = ExperimentConfig::desk_default();
        cfg.environment = environment;
        cfg.manifest = take(&mut map, "manifest").map(PathBuf::from);
        if let Some(v) = take(&mut map, "algorithms") {
            let mut algorithms = Vec::new();
            for tag in v.split(',') {
                let tag = tag.trim();
                if tag.is_empty() {
                    continue;
                }
                algorithms.push(tag.parse::<Algorithm>()?);
            }
            if algorithms.is_empty() {
                return Err(Error::Config("'algorithms' lists no agents".into()));
            }
            cfg.algorithms = algorithms;
        }
        if let Some(v) = take(&mut map, "t") {
            cfg.horizon = parse("t", &v)?;
        }
        if let Some(v) = take(&mut map, "h") {
            cfg.epoch_length = parse("h", &v)?;
        }
        if let Some(v) = take(&mut map, "m") {
            cfg.width = parse("m", &v)?;
        }
        if let Some(v) = take(&mut map, "l") {
            cfg.depth = parse("l", &v)?;
        }
        if let Some(v) = take(&mut map, "lambda") {
            cfg.lambda = parse("lambda", &v)?;
        }
        let alpha_mode = take(&mut map, "alpha_mode").unwrap_or_else(|| "fixed".into());
        match alpha_mode.as_str() {
            "fixed" => {
                let a = match take(&mut map, "alpha") {
                    Some(v) => parse("alpha", &v)?,
                    None => 0.02,
                };
                cfg.alpha = AlphaSpec::Fixed(a);
            }
            "theorem" => {
                let nu = match take(&mut map, "nu") {
                    Some(v) => parse("nu", &v)?,
                    None => cfg.noise,
                };
                let delta = match take(&mut map, "delta") {
                    Some(v) => parse("delta", &v)?,
                    None => 0.1,
                };
                let theta_norm = match take(&mut map, "theta_norm") {
                    Some(v) => parse("theta_norm", &v)?,
                    None => 1.0,
                };
                cfg.alpha = AlphaSpec::Theorem {
                    nu,
                    delta,
                    theta_norm,
                };
            }
            other => {
                return Err(Error::Config(format!(
                    "alpha_mode must be fixed|theorem, got '{other}'"
                )))
            }
        }
        if let Some(v) = take(&mut map, "eta") {
            cfg.step_size = parse("eta", &v)?;
        }
        if let Some(v) = take(&mut map, "iters") {
            cfg.max_iters = parse("iters", &v)?;
        }
        if let Some(v) = take(&mut map, "eps_stop") {
            cfg.stop_tol = parse("eps_stop", &v)?;
        }
        if let Some(v) = take(&mut map, "history") {
            cfg.history = match v.as_str() {
                "full" => HistoryMode::Full,
                "epoch" => HistoryMode::EpochOnly,
                other => {
                    return Err(Error::Config(format!(
                        "history must be full|epoch, got '{other}'"
                    )))
                }
            };
        }
        if let Some(v) = take(&mut map, "warm_start") {
            cfg.warm_start = parse("warm_start", &v)?;
        }
        if let Some(v) = take(&mut map, "warm_start_updates") {
            cfg.warm_start_updates = parse("warm_start_updates", &v)?;
        }
        if let Some(v) = take(&mut map, "warm_restart") {
            cfg.warm_restart = parse("warm_restart", &v)?;
        }
        if let Some(v) = take(&mut map, "noise") {
            cfg.noise = parse("noise", &v)?;
        } else if matches!(cfg.environment, EnvSpec::Dataset { .. }) {
            // classification rewards are noiseless 0/1 unless asked otherwise
            cfg.noise = 0.0;
        }
        if let Some(v) = take(&mut map, "reps") {
            cfg.repetitions = parse("reps", &v)?;
        }
        if let Some(v) = take(&mut map, "seed") {
            cfg.base_seed = parse("seed", &v)?;
        }
        if let Some(v) = take(&mut map, "out") {
            cfg.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = take(&mut map, "cycle") {
            cfg.cycle = parse("cycle", &v)?;
        }
        if let Some(v) = take(&mut map, "zero_wall_time") {
            cfg.zero_wall_time = parse("zero_wall_time", &v)?;
        }
        if let Some(key) = map.keys().next() {
            return Err(Error::Config(format!("unknown key '{key}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub(crate) fn train_config(&self) -> TrainConfig {
        TrainConfig {
            step_size: self.step_size,
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            history: self.history,
        }
    }

    pub(crate) fn alpha_schedule(&self, feature_dim: usize, arms: usize) -> Result<AlphaSchedule> {
        Ok(match self.alpha {
            AlphaSpec::Fixed(a) => AlphaSchedule::Fixed(a),
            AlphaSpec::Theorem {
                nu,
                delta,
                theta_norm,
            } => AlphaSchedule::Theorem {
                noise_scale: nu,
                dim: feature_dim,
                epoch_length: self.epoch_length,
                arms,
                lambda: self.lambda,
                delta,
                theta_norm_bound: theta_norm,
            },
        })
    }

    fn dataset_entry(&self) -> Result<(String, env::ManifestEntry)> {
        match &self.environment {
            EnvSpec::Synthetic { .. } => {
                Err(Error::Config("synthetic environment has no dataset".into()))
            }
            EnvSpec::Dataset { name, path } => {
                if let Some(p) = path {
                    return Ok((
                        name.clone(),
                        env::ManifestEntry {
                            path: p.clone(),
                            attributes: None,
                            arms: None,
                        },
                    ));
                }
                let manifest_path = self.manifest.as_ref().ok_or_else(|| {
                    Error::Config(format!(
                        "dataset '{name}' needs 'dataset_path' or a 'manifest'"
                    ))
                })?;
                let manifest = env::Manifest::load(manifest_path)?;
                let entry = manifest.resolve(name).ok_or_else(|| {
                    Error::Config(format!(
                        "dataset '{name}' not found in manifest {}",
                        manifest_path.display()
                    ))
                })?;
                Ok((name.clone(), entry.clone()))
            }
        }
    }

    /// Resolves the dataset path: explicit `dataset_path`, else the manifest.
    pub fn dataset_path(&self) -> Result<(String, PathBuf)> {
        let (name, entry) = self.dataset_entry()?;
        Ok((name, entry.path))
    }

    pub(crate) fn load_dataset(&self) -> Result<RawDataset> {
        let (name, entry) = self.dataset_entry()?;
        let known = env::known_dataset_spec(&name).map(|_| name.as_str());
        let ds = env::load_dataset(&entry.path, known)?;
        if let Some(want) = entry.attributes {
            if ds.n_attributes != want {
                return Err(Error::Config(format!(
                    "{name}: manifest expects {want} attributes, file has {}",
                    ds.n_attributes
                )));
            }
        }
        if let Some(want) = entry.arms {
            if ds.n_arms != want {
                return Err(Error::Config(format!(
                    "{name}: manifest expects {want} classes, file has {}",
                    ds.n_arms
                )));
            }
        }
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon t must be >= 1".into()));
        }
        if self.epoch_length == 0 {
            return Err(Error::Config("epoch length h must be >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("reps must be >= 1".into()));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("noise must be >= 0".into()));
        }
        if self.max_iters > 0 && (self.step_size.is_nan() || self.step_size <= 0.0) {
            return Err(Error::Config("eta must be positive when iters > 0".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms configured".into()));
        }
        match &self.environment {
            EnvSpec::Synthetic { d_raw, arms, kind } => {
                let _ = kind;
                if *d_raw == 0 || *arms == 0 {
                    return Err(Error::Config("d_raw and arms must be positive".into()));
                }
                if self.warm_start * arms > self.horizon {
                    return Err(Error::Config(format!(
                        "warm_start*arms = {} exceeds horizon {}",
                        self.warm_start * arms,
                        self.horizon
                    )));
                }
            }
            EnvSpec::Dataset { name, .. } => {
                let (_, path) = self.dataset_path()?;
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "dataset file {} does not exist",
                        path.display()
                    )));
                }
                if let Some((_, arms)) = env::known_dataset_spec(name) {
                    if self.warm_start * arms > self.horizon {
                        return Err(Error::Config(format!(
                            "warm_start*arms = {} exceeds horizon {}",
                            self.warm_start * arms,
                            self.horizon
                        )));
                    }
                }
            }
        }
        match self.alpha {
            AlphaSpec::Fixed(a) => {
                if a < 0.0 {
                    return Err(Error::Config("alpha must be >= 0".into()));
                }
            }
            AlphaSpec::Theorem {
                nu,
                delta,
                theta_norm,
            } => {
                if nu < 0.0 || theta_norm < 0.0 || !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::Config(
                        "theorem alpha needs nu >= 0, theta_norm >= 0, delta in (0,1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Canonical flat rendering: every effective field, fixed order.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        match &self.environment {
            EnvSpec::Synthetic { kind, d_raw, arms } => {
                s.push_str(&format!(
                    "environment={}\nd_raw={d_raw}\narms={arms}\n",
                    match kind {
                        SyntheticKind::Linear => "linear",
                        SyntheticKind::Quadratic => "quadratic",
                        SyntheticKind::Cosine => "cosine",
                    }
                ));
            }
            EnvSpec::Dataset { name, path } => {
                s.push_str(&format!("environment={name}\n"));
                if let Some(p) = path {
                    s.push_str(&format!("dataset_path={}\n", p.display()));
                }
            }
        }
        if let Some(m) = &self.manifest {
            s.push_str(&format!("manifest={}\n", m.display()));
        }
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.tag()).collect();
        s.push_str(&format!("algorithms={}\n", algs.join(",")));
        s.push_str(&format!(
            "t={}\nh={}\nm={}\nl={}\nlambda={:e}\n",
            self.horizon, self.epoch_length, self.width, self.depth, self.lambda
        ));
        match self.alpha {
            AlphaSpec::Fixed(a) => s.push_str(&format!("alpha_mode=fixed\nalpha={a:e}\n")),
            AlphaSpec::Theorem {
                nu,
                delta,
                theta_norm,
            } => s.push_str(&format!(
                "alpha_mode=theorem\nnu={nu:e}\ndelta={delta:e}\ntheta_norm={theta_norm:e}\n"
            )),
        }
        s.push_str(&format!(
            "eta={:e}\niters={}\neps_stop={:e}\nhistory={}\n",
            self.step_size,
            self.max_iters,
            self.stop_tol,
            match self.history {
                HistoryMode::Full => "full",
                HistoryMode::EpochOnly => "epoch",
            }
        ));
        s.push_str(&format!(
            "warm_start={}\nwarm_start_updates={}\nwarm_restart={}\nnoise={:e}\n",
            self.warm_start, self.warm_start_updates, self.warm_restart, self.noise
        ));
        s.push_str(&format!(
            "reps={}\nseed={}\ncycle={}\nzero_wall_time={}\n",
            self.repetitions, self.base_seed, self.cycle, self.zero_wall_time
        ));
        s
    }

    /// Hex SHA-256 of the canonical rendering. Equal hashes mean identical
    /// effective configurations.
    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical().as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_encode_the_same_config() {
        let flat = "\
# comment
environment = cosine
d_raw = 8
arms = 4
t = 100
h = 10
m = 16
l = 2
alpha = 0.05
algorithms = neural-linucb, linucb
seed = 3
";
        let json = r#"{
            "environment": "cosine", "d_raw": 8, "arms": 4,
            "t": 100, "h": 10, "m": 16, "l": 2, "alpha": 0.05,
            "algorithms": "neural-linucb, linucb", "seed": 3
        }"#;
        let a = ExperimentConfig::from_flat(flat, "test").unwrap();
        let b = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.horizon, 100);
        assert_eq!(a.alpha, AlphaSpec::Fixed(0.05));
        assert_eq!(
            a.algorithms,
            vec![Algorithm::NeuralLinUcb, Algorithm::LinUcb]
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err =
            ExperimentConfig::from_flat("environment=cosine\nd_raw=4\narms=2\nbogus=1\n", "test")
                .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn different_configs_hash_differently() {
        let mut a = ExperimentConfig::desk_default();
        let b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        a.horizon += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn shipped_profiles_are_valid() {
        ExperimentConfig::desk_default().validate().unwrap();
        let full = ExperimentConfig::full_scale_default();
        assert_eq!(full.width, 2000);
        assert_eq!(full.horizon, 15_000);
        assert_eq!(full.step_size, 1e-5);
        assert_eq!(full.max_iters, 1000);
        assert_eq!(full.history, HistoryMode::Full);
        full.validate().unwrap();
    }

    #[test]
    fn missing_dataset_file_names_the_path() {
        let cfg = ExperimentConfig {
            environment: EnvSpec::Dataset {
                name: "statlog".into(),
                path: Some(PathBuf::from("/nonexistent/shuttle.csv")),
            },
            ..ExperimentConfig::desk_default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/shuttle.csv"));
    }

    #[test]
    fn theorem_alpha_keys_parse() {
        let cfg = ExperimentConfig::from_flat(
            "environment=linear\nd_raw=4\narms=2\nalpha_mode=theorem\nnu=0.2\ndelta=0.05\ntheta_norm=2\n",
            "test",
        )
        .unwrap();
        assert_eq!(
            cfg.alpha,
            AlphaSpec::Theorem {
                nu: 0.2,
                delta: 0.05,
                theta_norm: 2.0
            }
        );
    }

    #[test]
    fn dataset_noise_defaults_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("toy.csv");
        std::fs::write(&csv, "1.0,2.0,0\n2.0,1.0,1\n").unwrap();
        let cfg = ExperimentConfig::from_flat(
            &format!(
                "environment=toy\ndataset_path={}\nt=2\nwarm_start=0\n",
                csv.display()
            ),
            "test",
        )
        .unwrap();
        assert_eq!(cfg.noise, 0.0);
    }
}
