//! The `.btdm` model container.
//!
//! Layout: `b"BTDM"`, format version (`u32` LE), header length in bytes
//! (`u64` LE), a UTF-8 JSON header, then every parameter tensor (weights then
//! bias, layer by layer) as `f64` LE. The header declares each tensor's length
//! and the blob's byte length.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Preprocessing;
use super::data::prepare_input;
use super::PipelineError;
use crate::heads::{extract_features, rbf_predict, DecisionTree, HeadError, Node, RbfModel, TrainedHead};
use crate::imageio::{GrayImage, Label};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::nn::{predict_probs, NetworkSpec, Parameters, Tensor};

pub const MAGIC: [u8; 4] = *b"BTDM";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model file truncated: need {need} bytes, have {have}")]
    Truncated { need: u64, have: u64 },
    #[error("parameter blob length mismatch: header declares {expected} bytes, found {actual}")]
    LengthMismatch { expected: u64, actual: u64 },
    #[error("model header: {0}")]
    Header(String),
}

/// Test-split outcome recorded alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSnapshot {
    pub method: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub network: NetworkSpec,
    pub params: Parameters,
    pub preprocessing: Preprocessing,
    pub head: TrainedHead,
    pub seed: u64,
    pub metrics: Option<MetricSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct HeadHeader {
    kind: String,
    payload: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    network: NetworkSpec,
    preprocessing: Preprocessing,
    head: HeadHeader,
    seed: u64,
    metrics: Option<MetricSnapshot>,
    tensor_lengths: Vec<usize>,
    blob_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub label: Label,
    pub class: usize,
    /// Softmax probabilities, RBF output scores, or the reached leaf's class
    /// frequencies, depending on the head.
    pub scores: Vec<f64>,
}

fn header_err(e: impl std::fmt::Display) -> ArtifactError {
    ArtifactError::Header(e.to_string())
}

impl ModelArtifact {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensor_lengths: Vec<usize> = self.params.tensors().map(Tensor::len).collect();
        let blob_len = 8 * tensor_lengths.iter().sum::<usize>() as u64;
        let payload = match &self.head {
            TrainedHead::Softmax => None,
            TrainedHead::Rbf(m) => Some(serde_json::to_value(m).expect("rbf model serializes")),
            TrainedHead::Dt(t) => Some(serde_json::to_value(t).expect("tree serializes")),
        };
        let header = Header {
            network: self.network.clone(),
            preprocessing: self.preprocessing,
            head: HeadHeader {
                kind: self.head.kind().to_string(),
                payload,
            },
            seed: self.seed,
            metrics: self.metrics.clone(),
            tensor_lengths,
            blob_len,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + blob_len as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ArtifactError> {
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(ArtifactError::BadMagic);
        }
        if bytes.len() < PREFIX_LEN {
            return Err(ArtifactError::Truncated {
                need: PREFIX_LEN as u64,
                have: bytes.len() as u64,
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ArtifactError::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let rest = (bytes.len() - PREFIX_LEN) as u64;
        if header_len > rest {
            return Err(ArtifactError::Truncated {
                need: PREFIX_LEN as u64 + header_len,
                have: bytes.len() as u64,
            });
        }
        let header_end = PREFIX_LEN + header_len as usize;
        let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..header_end]).map_err(header_err)?;
        let blob = &bytes[header_end..];
        if header.blob_len != blob.len() as u64 {
            return Err(ArtifactError::LengthMismatch {
                expected: header.blob_len,
                actual: blob.len() as u64,
            });
        }
        let declared: u64 = header.tensor_lengths.iter().map(|&n| 8 * n as u64).sum();
        if declared != header.blob_len {
            return Err(ArtifactError::LengthMismatch {
                expected: declared,
                actual: header.blob_len,
            });
        }

        header.network.validate().map_err(header_err)?;
        let mut params = Parameters::zeros_like(&header.network).map_err(header_err)?;
        let expected: Vec<usize> = params.tensors().map(Tensor::len).collect();
        if expected != header.tensor_lengths {
            return Err(header_err(format!(
                "tensor lengths {:?} do not fit the network (expected {:?})",
                header.tensor_lengths, expected
            )));
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for t in params.tensors_mut() {
            for slot in t.data_mut() {
                *slot = values.next().expect("length checked above");
            }
        }

        let head = match (header.head.kind.as_str(), header.head.payload) {
            ("softmax", None) => TrainedHead::Softmax,
            ("rbf", Some(v)) => TrainedHead::Rbf(serde_json::from_value::<RbfModel>(v).map_err(header_err)?),
            ("dt", Some(v)) => TrainedHead::Dt(serde_json::from_value::<DecisionTree>(v).map_err(header_err)?),
            (kind, payload) => {
                return Err(header_err(format!(
                    "head kind {kind:?} with{} payload",
                    if payload.is_some() { "" } else { "out" }
                )))
            }
        };
        let artifact = Self {
            network: header.network,
            params,
            preprocessing: header.preprocessing,
            head,
            seed: header.seed,
            metrics: header.metrics,
        };
        artifact.check_head().map_err(header_err)?;
        Ok(artifact)
    }

    /// Head dimensions and class count agree with the network.
    fn check_head(&self) -> Result<(), HeadError> {
        let width = self.network.feature_width()?;
        let classes = self.network.num_classes;
        match &self.head {
            TrainedHead::Softmax => Ok(()),
            TrainedHead::Rbf(m) => {
                m.validate()?;
                if m.dim() != width || m.num_classes != classes {
                    return Err(HeadError::DimensionMismatch {
                        expected: width,
                        got: m.dim(),
                    });
                }
                Ok(())
            }
            TrainedHead::Dt(t) => {
                t.validate()?;
                if t.min_dim() > width || t.num_classes != classes {
                    return Err(HeadError::DimensionMismatch {
                        expected: width,
                        got: t.min_dim(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<u64, PipelineError> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| PipelineError::io(path, e))?;
        Ok(bytes.len() as u64)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    /// Table label, as [`ExperimentConfig::method_name`](super::ExperimentConfig::method_name).
    pub fn method_name(&self) -> String {
        let head = match self.head {
            TrainedHead::Softmax => "CNN+SoftMax",
            TrainedHead::Rbf(_) => "CNN+RBF",
            TrainedHead::Dt(_) => "CNN+DT",
        };
        match self.preprocessing {
            Preprocessing::None => head.to_string(),
            Preprocessing::Cluster { .. } => format!("Clustering+{head}"),
        }
    }

    /// Class index and score vector for an already prepared input tensor.
    pub fn classify(&self, input: &Tensor) -> Result<(usize, Vec<f64>), HeadError> {
        match &self.head {
            TrainedHead::Softmax => {
                let probs = predict_probs(&self.network, &self.params, input)?;
                Ok((probs.argmax(), probs.into_data()))
            }
            TrainedHead::Rbf(m) => rbf_predict(m, &extract_features(&self.network, &self.params, input)?),
            TrainedHead::Dt(t) => {
                let leaf = t.route(&extract_features(&self.network, &self.params, input)?)?;
                match &t.nodes[leaf] {
                    Node::Leaf { class, counts } => {
                        let n: usize = counts.iter().sum();
                        let scores = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
                        Ok((*class, scores))
                    }
                    Node::Internal { .. } => unreachable!("route ends at a leaf"),
                }
            }
        }
    }

    /// Replays the stored preprocessing, resizes to the network input and classifies.
    pub fn predict_image(&self, img: &GrayImage) -> Result<Prediction, PipelineError> {
        let input =
            prepare_input(img, &self.preprocessing, self.seed, &self.network.input_shape).map_err(|source| {
                PipelineError::Preprocess {
                    id: "input".into(),
                    source,
                }
            })?;
        let (class, scores) = self.classify(&input).map_err(PipelineError::Head)?;
        let label = Label::from_index(class)
            .ok_or_else(|| PipelineError::Config(format!("class {class} has no diagnostic label")))?;
        Ok(Prediction { label, class, scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::{train_dt, FeatureVector};
    use crate::nn::{build_preset, init_parameters};

    fn tiny() -> ModelArtifact {
        let network = build_preset("tiny-32", 2).unwrap();
        let params = init_parameters(&network, 3).unwrap();
        ModelArtifact {
            network,
            params,
            preprocessing: Preprocessing::cluster_default(),
            head: TrainedHead::Softmax,
            seed: 11,
            metrics: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = tiny();
        let bytes = a.to_bytes();
        let b = ModelArtifact::from_bytes(&bytes).unwrap();
        assert_eq!(b, a);
        assert_eq!(b.to_bytes(), bytes);
    }

    #[test]
    fn distinct_errors() {
        let bytes = tiny().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ModelArtifact::from_bytes(&bad), Err(ArtifactError::BadMagic)));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            ModelArtifact::from_bytes(&bad),
            Err(ArtifactError::UnsupportedVersion(9))
        ));
        let bad = &bytes[..bytes.len() - 8];
        assert!(matches!(
            ModelArtifact::from_bytes(bad),
            Err(ArtifactError::LengthMismatch { .. })
        ));
        let mut bad = bytes.clone();
        bad[PREFIX_LEN] = b'[';
        assert!(matches!(ModelArtifact::from_bytes(&bad), Err(ArtifactError::Header(_))));
        assert!(matches!(
            ModelArtifact::from_bytes(&bytes[..10]),
            Err(ArtifactError::Truncated { .. })
        ));
    }

    #[test]
    fn dt_head_survives_and_predicts() {
        let mut a = tiny();
        let f: Vec<FeatureVector> = (0..6).map(|i| FeatureVector(vec![i as f64; 64])).collect();
        a.head = TrainedHead::Dt(train_dt(&f, &[0, 0, 0, 1, 1, 1], 4, 2).unwrap());
        let b = ModelArtifact::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(a, b);
        let img = GrayImage::filled(40, 40, 0).unwrap();
        let p = b.predict_image(&img).unwrap();
        assert_eq!(p, a.predict_image(&img).unwrap());
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn black_image_through_fresh_network() {
        let p = tiny().predict_image(&GrayImage::filled(32, 32, 0).unwrap()).unwrap();
        assert!(p.scores.iter().all(|s| s.is_finite()));
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
