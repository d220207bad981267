//! Training, evaluation and the leave-one-dataset-out experiment driver.

mod checkpoint;
mod evaluate;
mod experiment;
mod metrics;
mod optim;
mod report;
mod train;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use evaluate::{evaluate, evaluate_model, train_mean_baseline, Evaluation};
pub use experiment::{
    run_ablation, run_experiment, run_variants, AblationVariant, ExperimentReport, RunRecord, SummaryRow, Variant,
    TRAIN_MEAN,
};
pub use metrics::{mae_loss, mae_part, mean_std, metrics, TargetMetrics};
pub use optim::{Adam, AdamConfig};
pub use report::{summary_table, write_report, write_runs_csv, write_summary_csv};
pub use train::{
    batch_gradients, predict_refs, prepare_training_data, train, EpochRecord, LossKind, PreparedData, TrainConfig,
    TrainHistory, TrainOutcome,
};
