use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{IprError, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0-based epoch index.
    pub epoch: usize,
    /// D3 accuracy after this epoch.
    pub accuracy: f64,
    pub beta: f64,
    /// Mean per-step component values (unweighted).
    pub loss_precise: f64,
    pub loss_ambiguous: Option<f64>,
    pub loss_contrastive: Option<f64>,
    /// Classifier argmax vs D2 ground truth.
    pub agreement_model: Option<f64>,
    /// Nearest prototype vs D2 ground truth.
    pub agreement_prototype: Option<f64>,
    pub prototype_similarity: Option<Matrix>,
    /// Gated updates applied / attempted during the epoch.
    pub prototype_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub mode: Mode,
    pub epochs: Vec<EpochRecord>,
    /// Pairwise prototype similarity right after initialization.
    pub initial_prototype_similarity: Option<Matrix>,
}

impl RunMetrics {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map(|e| e.accuracy).unwrap_or(f64::NAN)
    }
}

pub const METRIC_COLUMNS: [&str; 7] = [
    "accuracy",
    "beta",
    "loss_precise",
    "loss_ambiguous",
    "loss_contrastive",
    "agreement_model",
    "agreement_prototype",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-epoch metrics as CSV. Missing values are empty cells; floats use the
/// shortest round-trip representation.
pub fn metrics_csv(metrics: &RunMetrics) -> String {
    let mut out = String::from("epoch");
    for c in METRIC_COLUMNS {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for e in &metrics.epochs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.epoch,
            e.accuracy,
            e.beta,
            e.loss_precise,
            opt(e.loss_ambiguous),
            opt(e.loss_contrastive),
            opt(e.agreement_model),
            opt(e.agreement_prototype),
        );
    }
    out
}

/// Flattened prototype-similarity matrix per epoch (`s_i_j` columns), with
/// empty cells for epochs before the prototypes exist. Returns `None` when
/// the run never had prototypes.
pub fn similarity_csv(metrics: &RunMetrics) -> Option<String> {
    let first = metrics.epochs.iter().find_map(|e| e.prototype_similarity.as_ref())?;
    let c = first.rows();
    let mut out = String::from("epoch");
    for i in 0..c {
        for j in 0..c {
            let _ = write!(out, ",s_{i}_{j}");
        }
    }
    out.push('\n');
    for e in &metrics.epochs {
        out.push_str(&e.epoch.to_string());
        match &e.prototype_similarity {
            Some(m) => {
                for v in m.as_slice() {
                    let _ = write!(out, ",{v}");
                }
            }
            None => out.push_str(&",".repeat(c * c)),
        }
        out.push('\n');
    }
    Some(out)
}

/// One row of a tidy long-format curve table. `value` is `None` where the
/// metric does not exist at that epoch (e.g. ambiguous loss during warm-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub seed: u64,
    pub metric: String,
    pub value: Option<f64>,
}

/// Parses a metrics CSV (and optional similarity CSV) back into long format.
pub fn curves_from_csv(seed: u64, metrics: &str, similarity: Option<&str>) -> Result<Vec<CurvePoint>> {
    let mut points = Vec::new();
    parse_wide(seed, metrics, &mut points, "metrics")?;
    if let Some(sim) = similarity {
        parse_wide(seed, sim, &mut points, "similarity")?;
    }
    Ok(points)
}

fn parse_wide(seed: u64, text: &str, out: &mut Vec<CurvePoint>, what: &str) -> Result<()> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| IprError::Input(format!("{what} CSV is empty")))?
        .split(',')
        .collect();
    if header.first() != Some(&"epoch") {
        return Err(IprError::Input(format!("{what} CSV must start with an epoch column")));
    }
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(IprError::Parse {
                path: None,
                line: n + 2,
                message: format!("{what} CSV row has {} cells, header has {}", cells.len(), header.len()),
            });
        }
        let bad = |m: String| IprError::Parse {
            path: None,
            line: n + 2,
            message: m,
        };
        let epoch: usize = cells[0].parse().map_err(|e| bad(format!("bad epoch {:?}: {e}", cells[0])))?;
        for (name, cell) in header.iter().zip(&cells).skip(1) {
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| bad(format!("bad value {cell:?}: {e}")))?)
            };
            out.push(CurvePoint {
                epoch,
                seed,
                metric: (*name).to_string(),
                value,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: Mode,
    pub seeds: Vec<SeedSummary>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1); zero for a single run.
    pub std_accuracy: f64,
    pub completed: usize,
    pub failed: usize,
}

impl Aggregate {
    pub fn from_summaries(mode: Mode, seeds: Vec<SeedSummary>) -> Self {
        let accs: Vec<f64> = seeds.iter().filter_map(|s| s.final_accuracy).collect();
        let (mean, std) = mean_std(&accs);
        let failed = seeds.len() - accs.len();
        Self {
            mode,
            mean_accuracy: mean,
            std_accuracy: std,
            completed: accs.len(),
            failed,
            seeds,
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean absolute epoch-to-epoch change of the off-diagonal prototype
/// similarities over the last `window` transitions, divided by the same
/// quantity over the first `window` transitions. The first transition starts
/// at the similarity recorded right after initialization. `None` when the run
/// has fewer than `window` transitions or the early changes are all zero.
pub fn similarity_stabilization(metrics: &RunMetrics, window: usize) -> Option<f64> {
    let mut seq: Vec<&Matrix> = metrics.initial_prototype_similarity.iter().collect();
    seq.extend(metrics.epochs.iter().filter_map(|e| e.prototype_similarity.as_ref()));
    if window == 0 || seq.len() < window + 1 {
        return None;
    }
    let changes: Vec<f64> = seq
        .windows(2)
        .map(|w| {
            let c = w[0].rows();
            let mut total = 0.0;
            for i in 0..c {
                for j in 0..c {
                    if i != j {
                        total += (w[1][(i, j)] - w[0][(i, j)]).abs();
                    }
                }
            }
            total / (c * (c - 1)).max(1) as f64
        })
        .collect();
    let early = changes[..window].iter().sum::<f64>() / window as f64;
    let late = changes[changes.len() - window..].iter().sum::<f64>() / window as f64;
    (early > 0.0).then(|| late / early)
}

/// Assignment for one D2 sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelRow {
    pub id: String,
    pub soft_label: Vec<f64>,
    pub similarities: Vec<f64>,
    pub pseudo_label: usize,
    pub classifier_label: usize,
    /// Evaluation-only ground truth, when the dataset carries one.
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelReport {
    pub rows: Vec<PseudoLabelRow>,
}

impl PseudoLabelReport {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| IprError::Parse {
                    path: None,
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}
