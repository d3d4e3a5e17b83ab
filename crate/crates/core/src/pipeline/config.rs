use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrastive::{AugmentationPolicy, ContrastiveMode};
use crate::error::{IprError, Result};
use crate::model::{AdamWConfig, ModelConfig};
use crate::prototypes::SoftLabelMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Prototype refinement with contrastive learning.
    #[default]
    Ipr,
    /// Cross-entropy on D1 only.
    Baseline,
    /// D1 plus D2 self-labeled by the classifier's own argmax.
    BaselinePlus,
    /// D1 plus D2 with its ground-truth labels.
    Supervised,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::BaselinePlus, Mode::Ipr, Mode::Supervised];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ipr => "ipr",
            Mode::Baseline => "baseline",
            Mode::BaselinePlus => "baseline_plus",
            Mode::Supervised => "supervised",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = IprError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipr" => Ok(Mode::Ipr),
            "baseline" => Ok(Mode::Baseline),
            "baseline_plus" | "baseline-plus" | "baseline+" => Ok(Mode::BaselinePlus),
            "supervised" => Ok(Mode::Supervised),
            other => Err(IprError::config("mode", format!("unknown mode {other:?}"))),
        }
    }
}

/// Targets for the cross-entropy term on ambiguous samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguousTarget {
    /// Hard pseudo label (nearest prototype).
    #[default]
    Hard,
    /// Soft label weights as a target distribution.
    Soft,
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · (1 + cos(π · epoch / epochs)) / 2`.
    Cosine,
}

/// Encoder/classifier widths; input and class counts come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub encoder_hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub classifier_hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            encoder_hidden: m.encoder_hidden,
            embedding_dim: m.embedding_dim,
            classifier_hidden: m.classifier_hidden,
        }
    }
}

impl ArchConfig {
    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            embedding_dim: self.embedding_dim,
            classifier_hidden: self.classifier_hidden.clone(),
            num_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight of the precise cross-entropy term.
    pub alpha: f64,
    /// Weight of the contrastive term.
    pub mu: f64,
    /// Ceiling of the ambiguous-term weight β.
    pub weight_m: f64,
    /// Growth factor of the exponential β ramp.
    pub growth_factor: f64,
    /// Use a linear β ramp instead of the exponential one.
    pub linear_ramp: bool,
    /// Prototype momentum.
    pub gamma: f64,
    /// Contrastive temperature.
    pub tau: f64,
    pub soft_label_temperature: f64,
    pub soft_label_mode: SoftLabelMode,
    pub update_all_classes: bool,
    pub contrastive_mode: ContrastiveMode,
    pub ambiguous_target: AmbiguousTarget,
    /// Re-initialize prototypes from D1 at the start of every post-warm-up
    /// epoch.
    pub reinit_prototypes: bool,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate.
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    /// Standardize features on D1 ∪ D2 before training (applied by the
    /// caller that owns the dataset, e.g. the CLI).
    pub standardize: bool,
    pub model: ArchConfig,
    pub augmentation: AugmentationPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = AdamWConfig::default();
        Self {
            mode: Mode::Ipr,
            alpha: 1.0,
            mu: 0.2,
            weight_m: 0.5,
            growth_factor: 5.0,
            linear_ramp: false,
            gamma: 0.99,
            tau: 0.1,
            soft_label_temperature: 0.1,
            soft_label_mode: SoftLabelMode::Softmax,
            update_all_classes: false,
            contrastive_mode: ContrastiveMode::Supervised,
            ambiguous_target: AmbiguousTarget::Hard,
            reinit_prototypes: false,
            epochs: 50,
            warmup_epochs: 10,
            batch_size: 8,
            learning_rate: opt.learning_rate,
            lr_schedule: LrSchedule::Constant,
            adam_beta1: opt.beta1,
            adam_beta2: opt.beta2,
            adam_epsilon: opt.epsilon,
            weight_decay: opt.weight_decay,
            seeds: vec![0, 1, 2, 3, 4],
            standardize: true,
            model: ArchConfig::default(),
            augmentation: AugmentationPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("mu", self.mu), ("weight_m", self.weight_m)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(IprError::config(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(IprError::config("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        for (name, v) in [
            ("tau", self.tau),
            ("soft_label_temperature", self.soft_label_temperature),
            ("growth_factor", self.growth_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(IprError::config(name, format!("must be positive, got {v}")));
            }
        }
        if self.growth_factor == 1.0 && !self.linear_ramp {
            return Err(IprError::config(
                "growth_factor",
                "r = 1 makes the exponential ramp undefined; set linear_ramp instead",
            ));
        }
        if self.epochs == 0 {
            return Err(IprError::config("epochs", "must be positive"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(IprError::config(
                "warmup_epochs",
                format!("must be < epochs ({}), got {}", self.epochs, self.warmup_epochs),
            ));
        }
        if self.batch_size == 0 {
            return Err(IprError::config("batch_size", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(IprError::config("seeds", "need at least one seed"));
        }
        if self.model.embedding_dim == 0 {
            return Err(IprError::config("model.embedding_dim", "must be positive"));
        }
        self.optimizer().validate()?;
        self.augmentation.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_serialize() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"mode":"baseline_plus","epochs":3,"warmup_epochs":1}"#).unwrap();
        assert_eq!(c.mode, Mode::BaselinePlus);
        assert_eq!(c.gamma, 0.99);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"gama":0.5}"#).is_err());
    }

    #[test]
    fn rejects_invalid_fields() {
        let bad = |f: fn(&mut TrainConfig)| {
            let mut c = TrainConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.gamma = 1.5));
        assert!(bad(|c| c.tau = 0.0));
        assert!(bad(|c| c.growth_factor = 1.0));
        assert!(bad(|c| c.warmup_epochs = 50));
        assert!(bad(|c| c.alpha = -1.0));
        let mut ok = TrainConfig::default();
        ok.growth_factor = 1.0;
        ok.linear_ramp = true;
        ok.validate().unwrap();
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }
}
