//! Iterative prototype refinement for semi-supervised classification of
//! ambiguously labeled data.
//!
//! Class prototypes are initialized from precisely labeled samples, refined
//! by gated moving-average updates from pseudo-labeled ambiguous samples,
//! and reinforced by a pseudo-label-supervised contrastive loss. Inputs are
//! precomputed feature vectors; [`data::generate_synthetic`] builds a
//! desk-scale task with simulated annotator disagreement.

pub mod contrastive;
pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod prototypes;

pub use contrastive::{augment, contrastive_loss, AugmentationPolicy, ContrastiveBatch, ContrastiveMode};
pub use data::{generate_synthetic, load_dataset, save_dataset, standardize, Split, SplitDataset, SynthConfig};
pub use error::{IprError, Result};
pub use model::{ModelConfig, ModelParams};
pub use numerics::{Matrix, RngStream};
pub use pipeline::{Mode, RunMetrics, RunOutput, TrainConfig};
pub use prototypes::{PrototypeBank, PseudoLabel, SoftLabel, SoftLabelMode};
