//! Classifier heads over CNN feature vectors: the network's own SoftMax
//! layer, a Gaussian RBF network and a CART decision tree.

mod rbf;
mod tree;

pub use rbf::{rbf_predict, train_rbf, RbfModel};
pub use tree::{dt_predict, train_dt, DecisionTree, Node};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::ClusterError;
use crate::nn::{NetworkSpec, NnError, Parameters, Tensor};

#[derive(Debug, Error, PartialEq)]
pub enum HeadError {
    #[error("no training samples")]
    EmptyInput,
    #[error("{features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("class {class} has {have} samples, need at least {need}")]
    InsufficientSamples { class: usize, have: usize, need: usize },
    #[error("normal equations are singular at ridge {ridge}; use a positive ridge")]
    Singular { ridge: f64 },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Clustering(#[from] ClusterError),
}

/// Penultimate-layer activation of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The activation entering the network's final (classification) layer,
/// i.e. the output of the last hidden fully connected layer's ReLU.
pub fn extract_features(spec: &NetworkSpec, params: &Parameters, input: &Tensor) -> Result<FeatureVector, HeadError> {
    params.check_against(spec)?;
    let out = crate::nn::forward_to_final_layer(spec, params, input)?;
    Ok(FeatureVector(out.into_data()))
}

pub const DEFAULT_K_PER_CLASS: usize = 4;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const DEFAULT_MAX_DEPTH: usize = 12;
pub const DEFAULT_MIN_SAMPLES_SPLIT: usize = 2;

/// Which head classifies, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadConfig {
    Softmax,
    Rbf {
        #[serde(default = "default_k_per_class")]
        k_per_class: usize,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Dt {
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_samples_split")]
        min_samples_split: usize,
    },
}

fn default_k_per_class() -> usize {
    DEFAULT_K_PER_CLASS
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}
fn default_max_depth() -> usize {
    DEFAULT_MAX_DEPTH
}
fn default_min_samples_split() -> usize {
    DEFAULT_MIN_SAMPLES_SPLIT
}

impl HeadConfig {
    pub fn rbf_default() -> Self {
        HeadConfig::Rbf {
            k_per_class: DEFAULT_K_PER_CLASS,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn dt_default() -> Self {
        HeadConfig::Dt {
            max_depth: DEFAULT_MAX_DEPTH,
            min_samples_split: DEFAULT_MIN_SAMPLES_SPLIT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HeadConfig::Softmax => "softmax",
            HeadConfig::Rbf { .. } => "rbf",
            HeadConfig::Dt { .. } => "dt",
        }
    }

    /// Method label as used in comparison tables, e.g. `CNN+RBF`.
    pub fn method_name(&self) -> &'static str {
        match self {
            HeadConfig::Softmax => "CNN+SoftMax",
            HeadConfig::Rbf { .. } => "CNN+RBF",
            HeadConfig::Dt { .. } => "CNN+DT",
        }
    }
}

/// A fitted head. The SoftMax head is the network's own final layer and
/// carries no extra state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum TrainedHead {
    Softmax,
    Rbf(RbfModel),
    Dt(DecisionTree),
}

impl TrainedHead {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedHead::Softmax => "softmax",
            TrainedHead::Rbf(_) => "rbf",
            TrainedHead::Dt(_) => "dt",
        }
    }

    /// Fits the configured head on penultimate features; `Softmax` needs no fitting.
    pub fn fit(cfg: &HeadConfig, features: &[FeatureVector], labels: &[usize], seed: u64) -> Result<Self, HeadError> {
        Ok(match *cfg {
            HeadConfig::Softmax => TrainedHead::Softmax,
            HeadConfig::Rbf { k_per_class, ridge } => {
                TrainedHead::Rbf(train_rbf(features, labels, k_per_class, ridge, seed)?)
            }
            HeadConfig::Dt {
                max_depth,
                min_samples_split,
            } => TrainedHead::Dt(train_dt(features, labels, max_depth, min_samples_split)?),
        })
    }
}

pub(crate) fn check_training_set(features: &[FeatureVector], labels: &[usize]) -> Result<usize, HeadError> {
    if features.is_empty() {
        return Err(HeadError::EmptyInput);
    }
    if features.len() != labels.len() {
        return Err(HeadError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let d = features[0].dim();
    for f in features {
        if f.dim() != d {
            return Err(HeadError::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
        if f.0.iter().any(|v| !v.is_finite()) {
            return Err(HeadError::NonFinite("features"));
        }
    }
    Ok(d)
}
