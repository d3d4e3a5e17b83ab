//! Training orchestration: warm-up on precise data, prototype initialization,
//! the scheduled three-term objective, gated prototype refinement, the
//! reference systems and multi-seed aggregation.

mod config;
pub mod metrics;
mod objective;
mod schedule;
mod train;

pub use config::{AmbiguousTarget, ArchConfig, LrSchedule, Mode, TrainConfig};
pub use metrics::{
    curves_from_csv, metrics_csv, similarity_csv, similarity_stabilization, Aggregate, CurvePoint, EpochRecord, PseudoLabelReport,
    PseudoLabelRow, RunMetrics, SeedSummary,
};
pub use objective::{objective_from_caches, total_loss, AmbiguousInputs, AmbiguousPart, LossOutput, Objective, Targets};
pub use schedule::{beta_schedule, learning_rate_at};
pub use train::{
    agreement_rates, evaluate, multi_seed, pseudo_label_report, train, train_baseline, train_ipr, MultiSeedResult,
    RunOutput,
};
