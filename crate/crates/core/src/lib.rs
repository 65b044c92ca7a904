//! Brain-tumor MRI classification pipeline built from scratch.
//!
//! Images are optionally quantized by per-image intensity k-means, resized
//! and fed to an AlexNet-style CNN trained by SGD. The CNN's own SoftMax
//! output or one of two alternative heads (an RBF network or a CART tree on
//! penultimate-layer features) produces the diagnosis, which is scored by
//! accuracy, sensitivity, specificity and precision.

pub mod cli;
pub mod clustering;
pub mod heads;
pub mod imageio;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
