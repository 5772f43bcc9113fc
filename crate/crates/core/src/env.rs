//! Bandit problem sources.
//!
//! Classification datasets become K-armed bandits by arm-block encoding: the
//! instance attributes are placed in the chosen arm's block of a `K * d_raw`
//! vector, which is then normalized and duplicated into the unit-norm
//! equal-halves feature geometry the network initialization relies on.
//! Synthetic generators draw per-arm contexts on the sphere and score them
//! with a fixed hidden target.

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A parsed classification dataset.
///
/// Attribute columns are min-max scaled into `[1e-6, 1]` at load time
/// (constant columns map to 0.5) so no instance collapses to the zero
/// vector, which [`preprocess`] must reject. Labels are remapped to the
/// contiguous range `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    /// Attribute count per instance.
    pub n_attributes: usize,
    /// Number of classes, i.e. arms.
    pub n_arms: usize,
    pub rows: Vec<(Array1<f64>, usize)>,
}

/// Expected (attributes, arms) for the bundled dataset names.
pub fn known_dataset_spec(name: &str) -> Option<(usize, usize)> {
    match name.to_ascii_lowercase().as_str() {
        "statlog" => Some((9, 7)),
        "magic" => Some((11, 2)),
        "covertype" => Some((54, 7)),
        _ => None,
    }
}

const SCALE_LO: f64 = 1e-6;

/// Parses a numeric CSV whose last column is an integer class label.
/// An initial non-numeric header line is skipped automatically. When `spec`
/// names a known dataset, the attribute count and class count are validated
/// against its expected values.
pub fn load_dataset(path: &Path, spec: Option<&str>) -> Result<RawDataset> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(display.clone(), e))?;
    let mut rows: Vec<(Vec<f64>, i64)> = Vec::new();
    let mut n_attributes = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        let values = match parsed {
            Some(v) => v,
            None if rows.is_empty() && n_attributes.is_none() => continue, // header
            None => {
                return Err(Error::Parse {
                    path: display,
                    line: line_no,
                    msg: format!("non-numeric field in '{trimmed}'"),
                })
            }
        };
        if values.len() < 2 {
            return Err(Error::Parse {
                path: display,
                line: line_no,
                msg: "need at least one attribute and a label".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: display,
                line: line_no,
                msg: "non-finite attribute".into(),
            });
        }
        let attr_count = values.len() - 1;
        match n_attributes {
            None => n_attributes = Some(attr_count),
            Some(n) if n != attr_count => {
                return Err(Error::Parse {
                    path: display,
                    line: line_no,
                    msg: format!("expected {n} attributes, found {attr_count}"),
                })
            }
            _ => {}
        }
        let label_f = values[values.len() - 1];
        if label_f.fract() != 0.0 {
            return Err(Error::Parse {
                path: display,
                line: line_no,
                msg: format!("label {label_f} is not an integer"),
            });
        }
        rows.push((values[..attr_count].to_vec(), label_f as i64));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let n_attributes = n_attributes.unwrap();

    let mut labels: Vec<i64> = rows.iter().map(|(_, l)| *l).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::Invalid(format!(
            "dataset {display} has a single class"
        )));
    }
    let label_index: BTreeMap<i64, usize> =
        labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    // per-column min-max scaling
    let mut lo = vec![f64::INFINITY; n_attributes];
    let mut hi = vec![f64::NEG_INFINITY; n_attributes];
    for (attrs, _) in &rows {
        for (j, v) in attrs.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let scaled: Vec<(Array1<f64>, usize)> = rows
        .into_iter()
        .map(|(attrs, label)| {
            let v = Array1::from_iter(attrs.iter().enumerate().map(|(j, x)| {
                if hi[j] > lo[j] {
                    SCALE_LO + (1.0 - SCALE_LO) * (x - lo[j]) / (hi[j] - lo[j])
                } else {
                    0.5
                }
            }));
            (v, label_index[&label])
        })
        .collect();

    let name = spec
        .map(str::to_string)
        .or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "dataset".into());
    let ds = RawDataset {
        name,
        n_attributes,
        n_arms: labels.len(),
        rows: scaled,
    };
    if let Some(spec_name) = spec {
        if let Some((want_attrs, want_arms)) = known_dataset_spec(spec_name) {
            if ds.n_attributes != want_attrs {
                return Err(Error::Invalid(format!(
                    "{spec_name}: expected {want_attrs} attributes, file has {}",
                    ds.n_attributes
                )));
            }
            if ds.n_arms != want_arms {
                return Err(Error::Invalid(format!(
                    "{spec_name}: expected {want_arms} classes, file has {}",
                    ds.n_arms
                )));
            }
        }
    }
    Ok(ds)
}

/// Maps a raw vector into the unit-norm equal-halves geometry:
/// l2-normalize, zero-pad to an even length, then emit `[v, v] / sqrt(2)`.
pub fn preprocess(x_raw: &ArrayView1<f64>) -> Result<Array1<f64>> {
    if x_raw.is_empty() {
        return Err(Error::Invalid("cannot preprocess an empty vector".into()));
    }
    if x_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("preprocess input".into()));
    }
    let norm = x_raw.dot(x_raw).sqrt();
    if norm == 0.0 {
        return Err(Error::Invalid("cannot preprocess the zero vector".into()));
    }
    let padded = x_raw.len() + x_raw.len() % 2;
    let inv = 1.0 / (norm * 2.0_f64.sqrt());
    let mut out = Array1::<f64>::zeros(2 * padded);
    for (j, v) in x_raw.iter().enumerate() {
        out[j] = v * inv;
        out[j + padded] = v * inv;
    }
    Ok(out)
}

/// Arm-block (disjoint) encoding: the instance vector occupies block `arm`
/// of a `k * d_raw` vector, all other blocks zero.
pub fn encode_arm_block(v: &ArrayView1<f64>, arms: usize, arm: usize) -> Array1<f64> {
    let d = v.len();
    let mut out = Array1::<f64>::zeros(arms * d);
    out.slice_mut(ndarray::s![arm * d..(arm + 1) * d]).assign(v);
    out
}

/// One round of a bandit problem: per-arm features, the raw contexts the
/// linear baseline sees, hidden expected rewards, and the optimal arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSet {
    pub round: u64,
    /// Preprocessed per-arm feature vectors (unit norm, equal halves).
    pub features: Vec<Array1<f64>>,
    /// Raw per-arm contexts (scaled attributes / sphere draws).
    pub raw: Vec<Array1<f64>>,
    pub expected_rewards: Vec<f64>,
    pub optimal_arm: usize,
}

impl ContextSet {
    pub fn arms(&self) -> usize {
        self.features.len()
    }
}

/// Kind of reward-generating function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    Classification,
    Linear,
    Quadratic,
    Cosine,
}

/// Synthetic reward families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticKind {
    Linear,
    Quadratic,
    Cosine,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(SyntheticKind::Linear),
            "quadratic" => Ok(SyntheticKind::Quadratic),
            "cosine" => Ok(SyntheticKind::Cosine),
            other => Err(Error::Invalid(format!("unknown synthetic kind '{other}'"))),
        }
    }
}

/// Descriptor of a reward-generating function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub kind: RewardKind,
    /// Hidden target for synthetic kinds; unit norm with equal halves.
    pub theta_star: Option<Array1<f64>>,
    /// Sub-Gaussian noise scale applied by [`draw_reward`].
    pub noise_scale: f64,
}

impl RewardModel {
    pub fn validate(&self) -> Result<()> {
        if self.noise_scale < 0.0 {
            return Err(Error::Invalid("noise scale must be >= 0".into()));
        }
        if let Some(t) = &self.theta_star {
            let norm = t.dot(t).sqrt();
            if (norm - 1.0).abs() > 1e-8 {
                return Err(Error::Invalid("synthetic target must be unit norm".into()));
            }
        }
        Ok(())
    }
}

/// The fixed hidden target used by every synthetic stream of a given raw
/// dimension: a seeded sphere draw pushed through [`preprocess`], so it has
/// unit norm and equal halves.
pub fn synthetic_target(d_raw: usize) -> Result<Array1<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x00c0_ffee);
    let raw = Array1::from_iter((0..d_raw).map(|_| rng.sample::<f64, _>(StandardNormal)));
    preprocess(&raw.view())
}

fn expected_reward(kind: SyntheticKind, dot: f64) -> f64 {
    match kind {
        // affine map keeps the range inside [0, 1]
        SyntheticKind::Linear => 0.5 * (1.0 + dot),
        SyntheticKind::Quadratic => dot * dot,
        SyntheticKind::Cosine => 0.5 * (1.0 + (3.0 * std::f64::consts::PI * dot).cos()),
    }
}

/// Builds `t` classification-bandit rounds from a dataset: instances are
/// shuffled by `seed`, each instance's attributes are arm-block encoded and
/// preprocessed, and the reward of arm k is `1 if k == label else 0`.
/// When `cycle` is set the shuffled order is replayed as often as needed.
pub fn make_rounds(
    dataset: &RawDataset,
    t: usize,
    seed: u64,
    cycle: bool,
) -> Result<Vec<ContextSet>> {
    if dataset.rows.is_empty() {
        return Err(Error::Invalid("empty dataset".into()));
    }
    if t > dataset.rows.len() && !cycle {
        return Err(Error::Invalid(format!(
            "horizon {t} exceeds dataset size {} (pass cycle=true to wrap)",
            dataset.rows.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let k = dataset.n_arms;
    let mut rounds = Vec::with_capacity(t);
    for i in 0..t {
        let (attrs, label) = &dataset.rows[order[i % order.len()]];
        let mut features = Vec::with_capacity(k);
        let mut raw = Vec::with_capacity(k);
        let mut rewards = Vec::with_capacity(k);
        for arm in 0..k {
            let block = encode_arm_block(&attrs.view(), k, arm);
            features.push(preprocess(&block.view())?);
            raw.push(attrs.clone());
            rewards.push(if arm == *label { 1.0 } else { 0.0 });
        }
        rounds.push(ContextSet {
            round: (i + 1) as u64,
            features,
            raw,
            expected_rewards: rewards,
            optimal_arm: *label,
        });
    }
    Ok(rounds)
}

/// Builds `t` synthetic rounds: per-arm contexts drawn uniformly on the
/// sphere in `d_raw` dimensions, preprocessed, and scored against the fixed
/// hidden target.
pub fn synth_rounds(
    kind: SyntheticKind,
    d_raw: usize,
    arms: usize,
    t: usize,
    seed: u64,
) -> Result<Vec<ContextSet>> {
    if d_raw == 0 || arms == 0 {
        return Err(Error::Invalid("d_raw and arms must be positive".into()));
    }
    let target = synthetic_target(d_raw)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rounds = Vec::with_capacity(t);
    for i in 0..t {
        let mut features = Vec::with_capacity(arms);
        let mut raw = Vec::with_capacity(arms);
        let mut rewards = Vec::with_capacity(arms);
        for _ in 0..arms {
            let mut v = Array1::from_iter((0..d_raw).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let mut norm = v.dot(&v).sqrt();
            while norm == 0.0 {
                v = Array1::from_iter((0..d_raw).map(|_| rng.sample::<f64, _>(StandardNormal)));
                norm = v.dot(&v).sqrt();
            }
            v /= norm;
            let x = preprocess(&v.view())?;
            rewards.push(expected_reward(kind, x.dot(&target)));
            features.push(x);
            raw.push(v);
        }
        let optimal_arm = rewards
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        rounds.push(ContextSet {
            round: (i + 1) as u64,
            features,
            raw,
            expected_rewards: rewards,
            optimal_arm,
        });
    }
    Ok(rounds)
}

/// Observed reward: the hidden expectation plus `N(0, noise^2)` when the
/// noise scale is positive.
pub fn draw_reward(
    ctx: &ContextSet,
    arm: usize,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if arm >= ctx.arms() {
        return Err(Error::Invalid(format!(
            "arm {arm} out of range for {} arms",
            ctx.arms()
        )));
    }
    let mean = ctx.expected_rewards[arm];
    if noise_scale > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        Ok(mean + noise_scale * z)
    } else {
        Ok(mean)
    }
}

/// Maps dataset names to CSV paths and expected dimensions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub datasets: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub attributes: Option<usize>,
    #[serde(default)]
    pub arms: Option<usize>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest decode: {e}")))
    }

    /// Resolves a dataset name to its CSV path.
    pub fn resolve(&self, name: &str) -> Option<&ManifestEntry> {
        self.datasets.get(&name.to_ascii_lowercase())
    }
}
