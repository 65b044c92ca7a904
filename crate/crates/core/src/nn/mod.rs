//! Convolutional network machinery: tensors, layer kernels with explicit
//! backward passes, network assembly, SGD training and gradient checking.

mod gradcheck;
pub mod layers;
mod network;
mod spec;
mod tensor;
mod train;

pub use gradcheck::{
    grad_check, grad_check_sampled, preset_grad_check, GradCheckOptions, GradCheckReport, LayerCheck,
    PRESET_COORDS_PER_TENSOR,
};
pub use network::{
    backward, forward, forward_to_final_layer, forward_trace, init_parameters, loss_and_grad, predict_probs,
    ForwardTrace, LayerParams, Parameters,
};
pub use spec::{build_preset, LayerSpec, NetworkSpec, LRN_DEFAULT, PRESETS};
pub(crate) use tensor::argmax;
pub use tensor::Tensor;
pub use train::{train, train_step, EpochRecord, StepOutcome, TrainConfig, TrainHistory};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("unknown preset {0:?} (known: alexnet-227, tiny-32)")]
    UnknownPreset(String),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("layer {index}: {msg}")]
    InvalidLayer { index: usize, msg: String },
    #[error("shape mismatch at layer {layer}: {msg}")]
    ShapeMismatch { layer: usize, msg: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("parameters do not match the network: {0}")]
    ParameterMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("training diverged at layer {layer} ({kind}){}", epoch.map(|e| format!(" in epoch {e}")).unwrap_or_default())]
    Divergence {
        layer: usize,
        kind: &'static str,
        epoch: Option<usize>,
    },
}
