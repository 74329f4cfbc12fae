//! Experiments: pre-training with optional mining, linear evaluation,
//! metrics, reports and sweeps.

mod config;
mod metrics;
mod probe;
mod report;
mod sweep;
mod train;

pub use config::{apply_override, DataSource, ExperimentConfig, Method};
pub use metrics::{
    accuracy, argmax_rows, auprc, average_precision, identification_metrics, rank_auc, Auprc, IdentificationMetrics,
    Summary, TypeMetrics,
};
pub use probe::{linear_evaluation, linear_probe, ProbeConfig, ProbeMetrics};
pub use report::{
    prepare_data, run_experiment, run_seed, seed_dir, write_seed_outputs, PreparedData, RunReport, SeedResult, SeedRun,
    CHECKPOINT_FILE, REPORT_FILE, TRAJECTORY_FILE,
};
pub use sweep::{
    robustness_sweep, sensitivity_sweep, summarize_robustness, write_robustness_csv, write_sensitivity_csv,
    RobustnessRow, RobustnessSummary, SensitivityCell, ROBUSTNESS_HEADER, SENSITIVITY_HEADER,
};
pub use train::{batches, train_contrastive, train_contrastive_with, TrainOutcome};

use thiserror::Error;

use crate::contrastive::ContrastiveError;
use crate::datagen::DataError;
use crate::diffcore::DiffError;
use crate::encoder::EncoderError;
use crate::mining::MiningError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("training failed at epoch {epoch}, batch {batch}: {source}")]
    Training { epoch: usize, batch: usize, source: Box<ExperimentError> },
    #[error("class {0} is absent from the training split")]
    ClassMissing(usize),
    #[error("no ground-truth pair types; identification needs simulated or injected data")]
    NoGroundTruth,
    #[error("metric: {0}")]
    Metric(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

#[cfg(test)]
mod tests;
