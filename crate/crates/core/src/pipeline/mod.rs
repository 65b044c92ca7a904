//! End-to-end experiments: configuration, data preparation, the train /
//! head / evaluate stages, model persistence and reports.

mod artifact;
mod config;
mod data;
mod report;
mod run;

pub use artifact::{ArtifactError, MetricSnapshot, ModelArtifact, Prediction, FORMAT_VERSION, MAGIC};
pub use config::{ExperimentConfig, Preprocessing, SyntheticSource, TrainSettings};
pub use data::{
    load_dataset, manifest_dataset, prepare_for_model, prepare_input, preprocess_image, read_manifest,
    synthetic_dataset, synthetic_split, Dataset, Sample,
};
pub use report::{compare_reports, MethodResult, Report};
pub use run::{
    evaluate, fit_head, run_experiment, run_in_memory, train_cnn, ExperimentOutput, TrainedCnn, MODEL_FILE, REPORT_FILE,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::clustering::ClusterError;
use crate::heads::HeadError;
use crate::imageio::{ManifestError, PgmError};
use crate::metrics::MetricsError;
use crate::nn::NnError;

/// Errors carry the stage they came from.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data: manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("data: image {id}: {source}")]
    Image { id: String, source: PgmError },
    #[error("preprocess: {id}: {source}")]
    Preprocess { id: String, source: ClusterError },
    #[error("train: {0}")]
    Train(NnError),
    #[error("head: {0}")]
    Head(HeadError),
    #[error("evaluate: {0}")]
    Metrics(#[from] MetricsError),
    #[error("model file: {0}")]
    Artifact(#[from] ArtifactError),
    #[error("report: {0}")]
    Report(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 1 for invalid input or configuration, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Manifest(_) | PipelineError::Report(_) => 1,
            PipelineError::Metrics(MetricsError::DuplicateMethod(_)) => 1,
            _ => 2,
        }
    }
}
