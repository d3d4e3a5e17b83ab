//! Datasets of precomputed feature vectors split by annotator agreement:
//! D1 (precise, labeled), D2 (ambiguous, unlabeled for training) and D3
//! (most ambiguous, labeled test set).
//!
//! On disk a dataset is JSON Lines: a header object followed by one sample
//! per line.

use std::cell::Cell;
use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IprError, Result};
use crate::numerics::{softmax_unchecked, RngStream};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    D1,
    D2,
    D3,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::D1 => "D1",
            Split::D2 => "D2",
            Split::D3 => "D3",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSample {
    pub id: String,
    pub split: Split,
    pub features: Vec<f64>,
    pub label: Option<usize>,
    pub votes: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: u32,
    #[serde(rename = "C")]
    num_classes: usize,
    d_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotators: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub num_classes: usize,
    pub dim: usize,
    /// Number of simulated annotators behind `votes`, when known.
    pub annotators: Option<u32>,
    pub samples: Vec<FeatureSample>,
    /// Generator config or source description.
    pub provenance: Option<serde_json::Value>,
}

/// Training-side view of D2: features only, with a read counter so tests can
/// prove which modes touch unlabeled data.
#[derive(Debug)]
pub struct AmbiguousView<'a> {
    features: Vec<&'a [f64]>,
    reads: Cell<usize>,
}

impl<'a> AmbiguousView<'a> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self, i: usize) -> &'a [f64] {
        self.reads.set(self.reads.get() + 1);
        self.features[i]
    }

    pub fn reads(&self) -> usize {
        self.reads.get()
    }
}

pub type Labeled<'a> = (&'a [f64], usize);

impl SplitDataset {
    pub fn split_len(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    pub fn iter_split(&self, split: Split) -> impl Iterator<Item = &FeatureSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Labeled D1 samples.
    pub fn precise(&self) -> Vec<Labeled<'_>> {
        self.labeled(Split::D1)
    }

    /// Labeled D3 samples.
    pub fn test_set(&self) -> Vec<Labeled<'_>> {
        self.labeled(Split::D3)
    }

    pub fn ambiguous_view(&self) -> AmbiguousView<'_> {
        AmbiguousView {
            features: self.iter_split(Split::D2).map(|s| s.features.as_slice()).collect(),
            reads: Cell::new(0),
        }
    }

    /// D2 with its hidden ground truth. Only evaluation code and the
    /// supervised reference mode may call this.
    pub fn ambiguous_with_truth(&self) -> Vec<(&str, &[f64], Option<usize>)> {
        self.iter_split(Split::D2)
            .map(|s| (s.id.as_str(), s.features.as_slice(), s.label))
            .collect()
    }

    fn labeled(&self, split: Split) -> Vec<Labeled<'_>> {
        self.iter_split(split)
            .filter_map(|s| s.label.map(|l| (s.features.as_slice(), l)))
            .collect()
    }

    /// Copy of the dataset without any D2 samples.
    pub fn without_ambiguous(&self) -> Self {
        Self {
            samples: self.samples.iter().filter(|s| s.split != Split::D2).cloned().collect(),
            ..self.clone()
        }
    }

    /// Full schema and invariant check; reports every violation.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_classes < 2 {
            problems.push(format!("header: C must be at least 2, got {}", self.num_classes));
        }
        if self.dim == 0 {
            problems.push("header: d_in must be positive".to_string());
        }
        let mut seen = HashSet::new();
        let mut d1_classes = vec![false; self.num_classes];
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                problems.push(format!("{}: duplicate id", s.id));
            }
            if s.features.len() != self.dim {
                problems.push(format!(
                    "{}: expected {} features, found {}",
                    s.id,
                    self.dim,
                    s.features.len()
                ));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                problems.push(format!("{}: non-finite feature", s.id));
            }
            match s.label {
                Some(l) if l >= self.num_classes => problems.push(format!(
                    "{}: label {l} out of range for C = {}",
                    s.id, self.num_classes
                )),
                Some(l) if s.split == Split::D1 => d1_classes[l] = true,
                None if s.split != Split::D2 => {
                    problems.push(format!("{}: {} sample must carry a label", s.id, s.split))
                }
                _ => {}
            }
            if let Some(votes) = &s.votes {
                if votes.len() != self.num_classes {
                    problems.push(format!(
                        "{}: vote histogram has {} bins, expected {}",
                        s.id,
                        votes.len(),
                        self.num_classes
                    ));
                }
                if let Some(a) = self.annotators {
                    let total: u32 = votes.iter().sum();
                    if total != a {
                        problems.push(format!("{}: votes sum to {total}, expected {a}", s.id));
                    }
                }
            }
        }
        for (c, present) in d1_classes.iter().enumerate() {
            if !present {
                problems.push(format!("class {c} has no D1 sample"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(IprError::Validation(problems))
        }
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            schema_version: SCHEMA_VERSION,
            num_classes: self.num_classes,
            d_in: self.dim,
            annotators: self.annotators,
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON Lines text. Blank lines are ignored.
    pub fn from_jsonl<R: BufRead>(reader: R, path: Option<&Path>) -> Result<Self> {
        let parse_err = |line: usize, message: String| IprError::Parse {
            path: path.map(Path::to_path_buf),
            line,
            message,
        };
        let mut header: Option<Header> = None;
        let mut samples = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match header {
                None => {
                    let h: Header = serde_json::from_str(&line)
                        .map_err(|e| parse_err(lineno, format!("invalid header: {e}")))?;
                    if h.schema_version != SCHEMA_VERSION {
                        return Err(parse_err(
                            lineno,
                            format!("unsupported schema_version {}", h.schema_version),
                        ));
                    }
                    header = Some(h);
                }
                Some(_) => {
                    let s: FeatureSample =
                        serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
                    samples.push(s);
                }
            }
        }
        let header = header.ok_or_else(|| parse_err(1, "missing header".into()))?;
        Ok(Self {
            num_classes: header.num_classes,
            dim: header.d_in,
            annotators: header.annotators,
            samples,
            provenance: header.provenance,
        })
    }
}

pub fn save_dataset(dataset: &SplitDataset, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(dataset.to_jsonl().as_bytes())?;
    Ok(())
}

/// Loads and validates a dataset file.
pub fn load_dataset(path: &Path) -> Result<SplitDataset> {
    let f = fs::File::open(path)?;
    let ds = SplitDataset::from_jsonl(BufReader::new(f), Some(path))?;
    ds.validate()?;
    Ok(ds)
}

/// Per-dimension affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits on D1 ∪ D2 features. Zero-variance dimensions keep `std = 1`.
    pub fn fit(dataset: &SplitDataset) -> Result<Self> {
        if dataset.split_len(Split::D1) == 0 {
            return Err(IprError::Input("cannot standardize without D1 samples".into()));
        }
        let rows: Vec<&[f64]> = dataset
            .samples
            .iter()
            .filter(|s| s.split != Split::D3)
            .map(|s| s.features.as_slice())
            .collect();
        let n = rows.len() as f64;
        let d = dataset.dim;
        let mut mean = vec![0.0; d];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for r in &rows {
            for j in 0..d {
                let c = r[j] - mean[j];
                var[j] += c * c;
            }
        }
        let std = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    log::warn!("feature dimension {j} has zero variance; leaving its scale at 1");
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, dataset: &SplitDataset) -> SplitDataset {
        let mut out = dataset.clone();
        for s in &mut out.samples {
            s.features = self.apply(&s.features);
        }
        out
    }
}

/// Fits a [`Standardizer`] on D1 ∪ D2 and applies it to every split.
pub fn standardize(dataset: &SplitDataset) -> Result<(SplitDataset, Standardizer)> {
    let st = Standardizer::fit(dataset)?;
    Ok((st.transform(dataset), st))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
}

/// Synthetic annotator-ambiguity task: Gaussian clusters labeled by a panel
/// of noisy simulated annotators whose agreement decides the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub d_in: usize,
    /// Distance of every cluster center from the origin at zero overlap.
    pub separation: f64,
    /// Fraction in `[0, 1)` by which centers are pulled toward the origin.
    pub overlap: f64,
    pub cluster_std: f64,
    /// Relative spread of per-class standard deviations: class `c` uses
    /// `cluster_std · (1 + std_spread · (2c/(C−1) − 1))`.
    pub std_spread: f64,
    /// Trailing coordinates that carry no class signal. Their per-sample
    /// std is drawn uniformly from `[0, nuisance_scale]`, so noisy samples
    /// also confuse the annotators.
    pub nuisance_dims: usize,
    pub nuisance_scale: f64,
    pub annotators: u32,
    /// Annotators vote from `softmax(−distance / temperature)`; zero makes
    /// them pick the nearest center deterministically.
    pub annotator_temperature: f64,
    pub t_high: f64,
    pub t_low: f64,
    pub sizes: SplitSizes,
    pub seed: u64,
    pub max_draws: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            d_in: 16,
            separation: 3.0,
            overlap: 0.4,
            cluster_std: 1.0,
            std_spread: 0.5,
            nuisance_dims: 0,
            nuisance_scale: 0.0,
            annotators: 6,
            annotator_temperature: 0.5,
            t_high: 0.99,
            t_low: 0.55,
            sizes: SplitSizes {
                d1: 600,
                d2: 1200,
                d3: 140,
            },
            seed: 4,
            max_draws: 2_000_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(IprError::config("num_classes", "need at least two classes"));
        }
        if self.d_in == 0 {
            return Err(IprError::config("d_in", "must be positive"));
        }
        if !(self.separation >= 0.0) {
            return Err(IprError::config("separation", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(IprError::config("overlap", "must lie in [0, 1)"));
        }
        if !(self.cluster_std > 0.0) {
            return Err(IprError::config("cluster_std", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.std_spread) {
            return Err(IprError::config("std_spread", "must lie in [0, 1)"));
        }
        if self.nuisance_dims >= self.d_in {
            return Err(IprError::config("nuisance_dims", "must leave at least one signal coordinate"));
        }
        if !(self.nuisance_scale >= 0.0) {
            return Err(IprError::config("nuisance_scale", "must be non-negative"));
        }
        if self.annotators == 0 {
            return Err(IprError::config("annotators", "must be positive"));
        }
        if !(self.annotator_temperature >= 0.0) {
            return Err(IprError::config("annotator_temperature", "must be non-negative"));
        }
        if !(0.5 < self.t_low && self.t_low < self.t_high && self.t_high <= 1.0) {
            return Err(IprError::config(
                "t_low/t_high",
                format!(
                    "need 0.5 < t_low < t_high <= 1, got t_low = {}, t_high = {}",
                    self.t_low, self.t_high
                ),
            ));
        }
        let s = self.sizes;
        if s.d1 == 0 || s.d2 == 0 || s.d3 == 0 {
            return Err(IprError::config("sizes", "every split size must be positive"));
        }
        Ok(())
    }

    pub fn class_std(&self, class: usize) -> f64 {
        let pos = if self.num_classes > 1 {
            2.0 * class as f64 / (self.num_classes - 1) as f64 - 1.0
        } else {
            0.0
        };
        self.cluster_std * (1.0 + self.std_spread * pos)
    }
}

/// One draw from the generator before split quotas are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub features: Vec<f64>,
    pub label: usize,
    pub votes: Vec<u32>,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    config: SynthConfig,
    centers: Vec<Vec<f64>>,
    rng: RngStream,
}

impl SyntheticGenerator {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut geometry = RngStream::derive(config.seed, 0);
        let radius = config.separation * (1.0 - config.overlap);
        let signal = config.d_in - config.nuisance_dims;
        let centers = random_directions(&mut geometry, config.num_classes, signal)
            .into_iter()
            .map(|dir| {
                let mut c: Vec<f64> = dir.into_iter().map(|v| v * radius).collect();
                c.resize(config.d_in, 0.0);
                c
            })
            .collect();
        let rng = RngStream::derive(config.seed, 1);
        Ok(Self {
            config,
            centers,
            rng,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn draw(&mut self) -> Draw {
        let c = self.rng.below(self.config.num_classes);
        let std = self.config.class_std(c);
        let signal = self.config.d_in - self.config.nuisance_dims;
        let mut features: Vec<f64> = self.centers[c][..signal].iter().map(|m| m + std * self.rng.normal()).collect();
        if self.config.nuisance_dims > 0 {
            let scale = self.rng.uniform_range(0.0, self.config.nuisance_scale);
            features.extend((0..self.config.nuisance_dims).map(|_| scale * self.rng.normal()));
        }
        let votes = self.vote(&features);
        let split = self.assign_split(&votes);
        Draw {
            features,
            label: c,
            votes,
            split,
        }
    }

    fn vote(&mut self, x: &[f64]) -> Vec<u32> {
        let neg_dist: Vec<f64> = self
            .centers
            .iter()
            .map(|m| -m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .collect();
        let mut votes = vec![0u32; self.centers.len()];
        let t = self.config.annotator_temperature;
        if t == 0.0 {
            votes[crate::numerics::argmax(&neg_dist)] = self.config.annotators;
            return votes;
        }
        let probs = softmax_unchecked(&neg_dist, t);
        for _ in 0..self.config.annotators {
            votes[self.rng.categorical(&probs)] += 1;
        }
        votes
    }

    /// Majority fraction `f`: D1 if `f ≥ t_high`, D3 if `f ≤ t_low`, else D2.
    pub fn assign_split(&self, votes: &[u32]) -> Split {
        let total: u32 = votes.iter().sum();
        let top = votes.iter().copied().max().unwrap_or(0);
        let f = top as f64 / total as f64;
        if f >= self.config.t_high {
            Split::D1
        } else if f <= self.config.t_low {
            Split::D3
        } else {
            Split::D2
        }
    }
}

fn random_directions(rng: &mut RngStream, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        loop {
            let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            // Orthogonalize while there is room so clusters are equidistant.
            if i < d {
                for u in &dirs {
                    let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    for (a, b) in v.iter_mut().zip(u) {
                        *a -= proj * b;
                    }
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-8 {
                dirs.push(v.into_iter().map(|a| a / norm).collect());
                break;
            }
        }
    }
    dirs
}

/// Draws until every split quota is filled. Samples keep their draw order.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SplitDataset> {
    let mut generator = SyntheticGenerator::new(config.clone())?;
    let quota = |s: Split| match s {
        Split::D1 => config.sizes.d1,
        Split::D2 => config.sizes.d2,
        Split::D3 => config.sizes.d3,
    };
    let mut filled = [0usize; 3];
    let idx = |s: Split| s as usize;
    let mut samples = Vec::with_capacity(config.sizes.d1 + config.sizes.d2 + config.sizes.d3);
    let mut draws = 0usize;
    while [Split::D1, Split::D2, Split::D3].iter().any(|&s| filled[idx(s)] < quota(s)) {
        if draws >= config.max_draws {
            let short: Vec<String> = [Split::D1, Split::D2, Split::D3]
                .iter()
                .filter(|&&s| filled[idx(s)] < quota(s))
                .map(|&s| format!("{s} ({}/{})", filled[idx(s)], quota(s)))
                .collect();
            return Err(IprError::Generation(format!(
                "split quota unfilled after {draws} draws: {}; adjust t_high/t_low, overlap or annotator_temperature",
                short.join(", ")
            )));
        }
        let d = generator.draw();
        draws += 1;
        if filled[idx(d.split)] >= quota(d.split) {
            continue;
        }
        filled[idx(d.split)] += 1;
        samples.push(FeatureSample {
            id: format!("s{draws:07}"),
            split: d.split,
            features: d.features,
            label: Some(d.label),
            votes: Some(d.votes),
        });
    }
    let provenance = serde_json::to_value(config)?;
    Ok(SplitDataset {
        num_classes: config.num_classes,
        dim: config.d_in,
        annotators: Some(config.annotators),
        samples,
        provenance: Some(serde_json::json!({ "generator": "synthetic", "config": provenance })),
    })
}

/// Fraction of raw draws landing in each split, before quotas.
pub fn split_fractions(config: &SynthConfig, draws: usize) -> Result<[f64; 3]> {
    let mut generator = SyntheticGenerator::new(config.clone())?;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[generator.draw().split as usize] += 1;
    }
    Ok(counts.map(|c| c as f64 / draws as f64))
}
