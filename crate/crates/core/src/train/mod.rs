//! Loss composition, the training loop, evaluation metrics and ablations.

mod ablation;
mod augment;
mod check;
mod config;
mod loss;
mod metrics;
mod trainer;

pub use ablation::{
    leave_one_out_grid, median, run_ablation, run_experiment, table_grid, AblationReport, AblationRow,
    AblationVariant, MedianMetrics, RunMetrics,
};
pub use augment::data_augment;
pub use check::{check_total_loss, miniature_problem};
pub use config::{AugmentConfig, ModulationScope, Switches, TrainConfig};
pub use loss::{total_loss, LossTerms, LossValues};
pub use metrics::{argmax_rows, ConfusionMatrix, MetricsReport, UndefinedMetric};
pub use trainer::{evaluate, BatchRecord, BatchSink, EpochLog, Evaluation, JsonLinesLog, NullSink, Trainer};
