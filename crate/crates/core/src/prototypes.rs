//! Class prototypes: initialization from precise samples, soft and pseudo
//! label assignment for ambiguous samples, and the gated moving-average
//! refinement.
//!
//! Every prototype is kept at unit L2 norm, so `k · p_c` is the cosine
//! similarity between a unit embedding `k` and class `c`.

use serde::{Deserialize, Serialize};

use crate::error::{IprError, Result};
use crate::numerics::{argmax, dot_unchecked, l2_normalize, softmax_unchecked, Matrix};

/// How similarities are turned into the per-class weights of a soft label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftLabelMode {
    /// `softmax(σ / T_s)`: a proper probability vector.
    #[default]
    Softmax,
    /// The raw similarity clamped to `[0, 1]`.
    RawClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    /// Per-class weights used by the update rule.
    pub weights: Vec<f64>,
    /// Raw similarities `k · p_c`.
    pub similarities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub class: usize,
    /// Winning similarity.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    GateClosed,
    /// The moving average collapsed to the zero vector; the prototype is kept.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    prototypes: Vec<Vec<f64>>,
    gamma: f64,
    update_counts: Vec<u64>,
    degenerate_updates: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format: String,
    gamma: f64,
    prototypes: Vec<Vec<f64>>,
    update_counts: Vec<u64>,
    degenerate_updates: u64,
}

const SNAPSHOT_FORMAT: &str = "ipr-prototypes";

impl PrototypeBank {
    /// JSON snapshot; floats round-trip exactly.
    pub fn to_json(&self) -> String {
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            gamma: self.gamma,
            prototypes: self.prototypes.clone(),
            update_counts: self.update_counts.clone(),
            degenerate_updates: self.degenerate_updates,
        };
        serde_json::to_string_pretty(&snap).expect("snapshot serializes")
    }

    /// Restores a bank written by [`PrototypeBank::to_json`] without
    /// renormalizing, after checking shapes and unit norms.
    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(text)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(IprError::Input(format!("not a prototype snapshot: {:?}", snap.format)));
        }
        if snap.prototypes.len() < 2 || snap.update_counts.len() != snap.prototypes.len() {
            return Err(IprError::Input("prototype snapshot has inconsistent class counts".into()));
        }
        if !(0.0..=1.0).contains(&snap.gamma) {
            return Err(IprError::config("gamma", format!("must lie in [0, 1], got {}", snap.gamma)));
        }
        let dim = snap.prototypes[0].len();
        for (c, p) in snap.prototypes.iter().enumerate() {
            if p.len() != dim {
                return Err(IprError::dim("prototype snapshot", dim, p.len()));
            }
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(IprError::Input(format!("prototype {c} has norm {norm}, expected 1")));
            }
        }
        Ok(Self {
            prototypes: snap.prototypes,
            gamma: snap.gamma,
            update_counts: snap.update_counts,
            degenerate_updates: snap.degenerate_updates,
        })
    }

    /// Prototype `c` is the normalized mean of the normalized class-`c`
    /// embeddings.
    pub fn init<'a, I>(embeddings: I, num_classes: usize, gamma: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], usize)>,
    {
        if num_classes < 2 {
            return Err(IprError::config("num_classes", "need at least two classes"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(IprError::config("gamma", format!("must lie in [0, 1], got {gamma}")));
        }
        let mut sums: Vec<Option<Vec<f64>>> = vec![None; num_classes];
        let mut counts = vec![0usize; num_classes];
        let mut dim = None;
        for (emb, class) in embeddings {
            if class >= num_classes {
                return Err(IprError::Input(format!(
                    "class {class} out of range for {num_classes} classes"
                )));
            }
            match dim {
                None => dim = Some(emb.len()),
                Some(d) if d != emb.len() => return Err(IprError::dim("prototype init", d, emb.len())),
                _ => {}
            }
            let unit = l2_normalize(emb)?;
            let acc = sums[class].get_or_insert_with(|| vec![0.0; unit.len()]);
            for (a, u) in acc.iter_mut().zip(&unit) {
                *a += u;
            }
            counts[class] += 1;
        }
        let mut prototypes = Vec::with_capacity(num_classes);
        for (class, sum) in sums.into_iter().enumerate() {
            let Some(sum) = sum else {
                return Err(IprError::EmptyClass { class });
            };
            let n = counts[class] as f64;
            let mean: Vec<f64> = sum.iter().map(|v| v / n).collect();
            let proto = l2_normalize(&mean).map_err(|_| {
                IprError::Degenerate(format!("class {class} embeddings average to the zero vector"))
            })?;
            prototypes.push(proto);
        }
        Ok(Self {
            prototypes,
            gamma,
            update_counts: vec![0; num_classes],
            degenerate_updates: 0,
        })
    }

    /// Builds a bank from explicit prototypes, normalizing each.
    pub fn from_prototypes(prototypes: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(IprError::config("num_classes", "need at least two classes"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(IprError::config("gamma", format!("must lie in [0, 1], got {gamma}")));
        }
        let d = prototypes[0].len();
        let prototypes = prototypes
            .iter()
            .map(|p| {
                if p.len() != d {
                    return Err(IprError::dim("prototype", d, p.len()));
                }
                l2_normalize(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let c = prototypes.len();
        Ok(Self {
            prototypes,
            gamma,
            update_counts: vec![0; c],
            degenerate_updates: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn prototype(&self, class: usize) -> &[f64] {
        &self.prototypes[class]
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn update_counts(&self) -> &[u64] {
        &self.update_counts
    }

    pub fn degenerate_updates(&self) -> u64 {
        self.degenerate_updates
    }

    pub fn similarities(&self, k: &[f64]) -> Result<Vec<f64>> {
        if k.len() != self.dim() {
            return Err(IprError::dim("prototype similarity", self.dim(), k.len()));
        }
        Ok(self.prototypes.iter().map(|p| dot_unchecked(k, p)).collect())
    }

    pub fn soft_label(&self, k: &[f64], mode: SoftLabelMode, temperature: f64) -> Result<SoftLabel> {
        let similarities = self.similarities(k)?;
        let weights = match mode {
            SoftLabelMode::Softmax => {
                if !(temperature > 0.0) {
                    return Err(IprError::config(
                        "soft_label_temperature",
                        format!("must be positive, got {temperature}"),
                    ));
                }
                softmax_unchecked(&similarities, temperature)
            }
            SoftLabelMode::RawClamped => similarities.iter().map(|s| s.clamp(0.0, 1.0)).collect(),
        };
        Ok(SoftLabel {
            weights,
            similarities,
        })
    }

    /// Nearest prototype by similarity; ties go to the lowest class index.
    pub fn pseudo_label(&self, k: &[f64]) -> Result<PseudoLabel> {
        let sims = self.similarities(k)?;
        let class = argmax(&sims);
        Ok(PseudoLabel {
            class,
            confidence: sims[class],
        })
    }

    /// Moving-average refinement gated on classifier agreement.
    ///
    /// When `pred == pred_aug == c`, prototype `c` becomes
    /// `normalize(γ p_c + (1 − γ) s_c k)`; with `update_all` every class `c′`
    /// is moved with its own weight `s_c′`. A closed gate leaves the bank
    /// untouched.
    pub fn gated_update(
        &mut self,
        k: &[f64],
        soft: &SoftLabel,
        pred: usize,
        pred_aug: usize,
        update_all: bool,
    ) -> Result<UpdateOutcome> {
        if k.len() != self.dim() {
            return Err(IprError::dim("prototype update", self.dim(), k.len()));
        }
        if soft.weights.len() != self.num_classes() {
            return Err(IprError::dim("soft label", self.num_classes(), soft.weights.len()));
        }
        if pred >= self.num_classes() || pred_aug >= self.num_classes() {
            return Err(IprError::Input(format!(
                "predicted classes ({pred}, {pred_aug}) out of range"
            )));
        }
        if pred != pred_aug {
            return Ok(UpdateOutcome::GateClosed);
        }
        let classes: Vec<usize> = if update_all {
            (0..self.num_classes()).collect()
        } else {
            vec![pred]
        };
        let mut outcome = UpdateOutcome::Applied;
        for c in classes {
            let moved = update_direction(&self.prototypes[c], k, soft.weights[c], self.gamma);
            // Renormalizing an unchanged unit vector can still flip its last bit.
            if moved == self.prototypes[c] {
                self.update_counts[c] += 1;
                continue;
            }
            match l2_normalize(&moved) {
                Ok(p) => {
                    self.prototypes[c] = p;
                    self.update_counts[c] += 1;
                }
                Err(_) => {
                    self.degenerate_updates += 1;
                    outcome = UpdateOutcome::Degenerate;
                }
            }
        }
        Ok(outcome)
    }

    /// `S[i][j] = p_i · p_j`.
    pub fn pairwise_similarity(&self) -> Matrix {
        let c = self.num_classes();
        let mut m = Matrix::zeros(c, c);
        for i in 0..c {
            for j in i..c {
                let s = dot_unchecked(&self.prototypes[i], &self.prototypes[j]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}

/// Pre-normalization moving average `γ p + (1 − γ) s k`.
pub fn update_direction(p: &[f64], k: &[f64], s: f64, gamma: f64) -> Vec<f64> {
    p.iter()
        .zip(k)
        .map(|(pi, ki)| gamma * pi + (1.0 - gamma) * ki * s)
        .collect()
}
