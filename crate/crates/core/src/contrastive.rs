//! Feature-space augmentation and the pseudo-label-supervised contrastive
//! loss over a batch of `2N` unit embeddings.
//!
//! Batch layout: rows `0..N` are the original samples, rows `N..2N` their
//! augmented views, so row `i` is paired with row `i ± N`.

use serde::{Deserialize, Serialize};

use crate::error::{IprError, Result};
use crate::numerics::{dot_unchecked, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// Additive N(0, std²) noise on every coordinate.
    Noise { std: f64 },
    /// Multiplies the whole vector by a factor drawn from `[min, max]`.
    Scale { min: f64, max: f64 },
    /// Zeroes each coordinate independently with probability `rate`.
    Dropout { rate: f64 },
    /// Convex mix `(1 − λ) x + λ partner`, λ drawn from `[min, max]`.
    Mix { min: f64, max: f64 },
}

impl Transform {
    fn validate(&self) -> Result<()> {
        match *self {
            Transform::Noise { std } if !(std >= 0.0) => {
                Err(IprError::config("augmentation.noise.std", "must be non-negative"))
            }
            Transform::Scale { min, max } if !(min > 0.0 && max >= min) => Err(IprError::config(
                "augmentation.scale",
                "range must be positive with min <= max",
            )),
            Transform::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                Err(IprError::config("augmentation.dropout.rate", "must lie in [0, 1)"))
            }
            Transform::Mix { min, max } if !(0.0 <= min && min <= max && max <= 1.0) => Err(
                IprError::config("augmentation.mix", "λ range must satisfy 0 <= min <= max <= 1"),
            ),
            _ => Ok(()),
        }
    }
}

/// Ordered transforms, each applied independently with `apply_probability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub transforms: Vec<Transform>,
    pub apply_probability: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            transforms: vec![
                Transform::Noise { std: 0.3 },
                Transform::Scale { min: 0.8, max: 1.2 },
                Transform::Mix { min: 0.0, max: 0.2 },
                Transform::Dropout { rate: 0.1 },
            ],
            apply_probability: 0.5,
        }
    }
}

impl AugmentationPolicy {
    pub fn identity() -> Self {
        Self {
            transforms: Vec::new(),
            apply_probability: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(IprError::config(
                "augmentation.apply_probability",
                "must lie in [0, 1]",
            ));
        }
        self.transforms.iter().try_for_each(Transform::validate)
    }
}

/// Returns a stochastic view of `x`. `partner` feeds the mixing transform;
/// without one, mixing is skipped.
pub fn augment(x: &[f64], policy: &AugmentationPolicy, rng: &mut RngStream, partner: Option<&[f64]>) -> Vec<f64> {
    let mut out = x.to_vec();
    for t in &policy.transforms {
        if rng.uniform() >= policy.apply_probability {
            continue;
        }
        match *t {
            Transform::Noise { std } => {
                for v in &mut out {
                    *v += std * rng.normal();
                }
            }
            Transform::Scale { min, max } => {
                let f = rng.uniform_range(min, max);
                for v in &mut out {
                    *v *= f;
                }
            }
            Transform::Dropout { rate } => {
                for v in &mut out {
                    if rng.uniform() < rate {
                        *v = 0.0;
                    }
                }
            }
            Transform::Mix { min, max } => {
                let lambda = rng.uniform_range(min, max);
                if let Some(p) = partner.filter(|p| p.len() == out.len()) {
                    for (v, q) in out.iter_mut().zip(p) {
                        *v = (1.0 - lambda) * *v + lambda * q;
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveMode {
    /// Positives are every other embedding with the same pseudo label, plus
    /// the paired view.
    #[default]
    Supervised,
    /// Positive is the paired view only; all other rows are negatives.
    PairwiseNtxent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    /// `2N` unit embeddings: originals then augmentations.
    pub embeddings: Vec<Vec<f64>>,
    /// Pseudo label of every row.
    pub labels: Vec<usize>,
    pub temperature: f64,
}

impl ContrastiveBatch {
    pub fn pairs(&self) -> usize {
        self.embeddings.len() / 2
    }

    fn validate(&self) -> Result<()> {
        let n = self.embeddings.len();
        if n < 2 || n % 2 != 0 {
            return Err(IprError::Input(format!(
                "contrastive batch needs an even number (>= 2) of rows, got {n}"
            )));
        }
        if self.labels.len() != n {
            return Err(IprError::dim("contrastive labels", n, self.labels.len()));
        }
        if !(self.temperature > 0.0) {
            return Err(IprError::config("tau", "temperature must be positive"));
        }
        let d = self.embeddings[0].len();
        if let Some(e) = self.embeddings.iter().find(|e| e.len() != d) {
            return Err(IprError::dim("contrastive embedding", d, e.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutput {
    pub loss: f64,
    /// Gradient of `loss` with respect to each row.
    pub grads: Vec<Vec<f64>>,
    /// Anchors without any positive; excluded from the mean.
    pub skipped_anchors: usize,
}

/// Mean over anchors `a` of
/// `−(1/|P(a)|) Σ_{p∈P(a)} log[ exp(a·p/τ) / Σ_{b≠a} exp(a·b/τ) ]`.
pub fn contrastive_loss(batch: &ContrastiveBatch, mode: ContrastiveMode) -> Result<ContrastiveOutput> {
    batch.validate()?;
    let rows = batch.embeddings.len();
    let half = rows / 2;
    let tau = batch.temperature;
    let z = &batch.embeddings;
    let d = z[0].len();

    let mut sim = vec![0.0; rows * rows];
    for a in 0..rows {
        for b in a..rows {
            let s = dot_unchecked(&z[a], &z[b]) / tau;
            sim[a * rows + b] = s;
            sim[b * rows + a] = s;
        }
    }

    let mut grads = vec![vec![0.0; d]; rows];
    let mut total = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    let mut weights = vec![0.0; rows];
    let mut positive = vec![false; rows];

    for a in 0..rows {
        let pair = if a < half { a + half } else { a - half };
        let mut n_pos = 0usize;
        for b in 0..rows {
            positive[b] = b != a
                && (b == pair
                    || (mode == ContrastiveMode::Supervised && batch.labels[b] == batch.labels[a]));
            n_pos += positive[b] as usize;
        }
        if n_pos == 0 {
            skipped += 1;
            continue;
        }
        let row = &sim[a * rows..(a + 1) * rows];
        let max = (0..rows).filter(|&b| b != a).map(|b| row[b]).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for b in 0..rows {
            weights[b] = if b == a { 0.0 } else { (row[b] - max).exp() };
            denom += weights[b];
        }
        let log_denom = max + denom.ln();
        let inv_pos = 1.0 / n_pos as f64;
        let mut pos_sum = 0.0;
        for b in 0..rows {
            if positive[b] {
                pos_sum += row[b];
            }
            weights[b] /= denom;
        }
        total += log_denom - inv_pos * pos_sum;
        counted += 1;

        for b in 0..rows {
            if b == a {
                continue;
            }
            let coef = (weights[b] - if positive[b] { inv_pos } else { 0.0 }) / tau;
            if coef == 0.0 {
                continue;
            }
            let (za, zb) = (&z[a], &z[b]);
            for j in 0..d {
                grads[a][j] += coef * zb[j];
            }
            for j in 0..d {
                grads[b][j] += coef * za[j];
            }
        }
    }

    if counted == 0 {
        return Ok(ContrastiveOutput {
            loss: 0.0,
            grads,
            skipped_anchors: skipped,
        });
    }
    let scale = 1.0 / counted as f64;
    for g in &mut grads {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok(ContrastiveOutput {
        loss: total * scale,
        grads,
        skipped_anchors: skipped,
    })
}
