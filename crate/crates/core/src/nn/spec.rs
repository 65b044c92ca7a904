//! Declarative layer stacks and the two built-in presets.

use serde::{Deserialize, Serialize};

use super::NnError;

/// Local response normalization constants used by AlexNet.
pub const LRN_DEFAULT: LayerSpec = LayerSpec::Lrn {
    n: 5,
    k: 2.0,
    alpha: 1e-4,
    beta: 0.75,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Lrn {
        n: usize,
        k: f64,
        alpha: f64,
        beta: f64,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    FullyConnected {
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            pad,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::Lrn { .. } => "lrn",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::FullyConnected { .. } => "fc",
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. })
    }

    fn check_hyperparameters(&self, index: usize) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidLayer { index, msg });
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => {
                if out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                    return bad("conv channels, kernel and stride must be >= 1".into());
                }
            }
            LayerSpec::Lrn { n, k, alpha, beta } => {
                if n == 0 || n % 2 == 0 {
                    return bad(format!("lrn window n must be odd and >= 1, got {n}"));
                }
                if !(k > 0.0 && alpha >= 0.0 && beta > 0.0) || !(k.is_finite() && alpha.is_finite() && beta.is_finite())
                {
                    return bad("lrn needs k > 0, alpha >= 0, beta > 0".into());
                }
            }
            LayerSpec::MaxPool { size, stride } => {
                if size == 0 || stride == 0 {
                    return bad("pool size and stride must be >= 1".into());
                }
            }
            LayerSpec::FullyConnected { out_features } => {
                if out_features == 0 {
                    return bad("fc needs at least one output".into());
                }
            }
            LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = |msg: String| NnError::ShapeMismatch { layer: index, msg };
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                pad,
            } => {
                let [_, h, w] =
                    three_d(input).ok_or_else(|| mismatch(format!("conv expects [c,h,w], got {input:?}")))?;
                if h + 2 * pad < kernel_h || w + 2 * pad < kernel_w {
                    return Err(mismatch(format!(
                        "kernel {kernel_h}x{kernel_w} larger than padded input {input:?}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * pad - kernel_h) / stride + 1,
                    (w + 2 * pad - kernel_w) / stride + 1,
                ])
            }
            LayerSpec::MaxPool { size, stride } => {
                let [c, h, w] =
                    three_d(input).ok_or_else(|| mismatch(format!("maxpool expects [c,h,w], got {input:?}")))?;
                if h < size || w < size {
                    return Err(mismatch(format!("pool window {size} larger than input {input:?}")));
                }
                Ok(vec![c, (h - size) / stride + 1, (w - size) / stride + 1])
            }
            LayerSpec::Lrn { .. } => {
                three_d(input).ok_or_else(|| mismatch(format!("lrn expects [c,h,w], got {input:?}")))?;
                Ok(input.to_vec())
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::FullyConnected { out_features } => {
                if input.len() != 1 {
                    return Err(mismatch(format!("fc expects a flat vector, got {input:?}")));
                }
                Ok(vec![out_features])
            }
        }
    }

    /// `(weights shape, bias shape, fan_in)` for parameterized layers.
    pub fn parameter_shapes(&self, input: &[usize]) -> Option<(Vec<usize>, Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let c = input[0];
                Some((
                    vec![out_channels, c, kernel_h, kernel_w],
                    vec![out_channels],
                    c * kernel_h * kernel_w,
                ))
            }
            LayerSpec::FullyConnected { out_features } => {
                let d = input[0];
                Some((vec![out_features, d], vec![out_features], d))
            }
            _ => None,
        }
    }
}

fn three_d(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `[channels, height, width]`
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_name: Option<String>,
}

pub const PRESETS: [&str; 2] = ["alexnet-227", "tiny-32"];

impl NetworkSpec {
    /// Checks hyperparameters and shape chaining.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.num_classes < 2 {
            return Err(NnError::InvalidSpec(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.len() != 3 || self.input_shape.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "input_shape must be [c,h,w] with positive entries, got {:?}",
                self.input_shape
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check_hyperparameters(i)?;
        }
        let shapes = self.layer_shapes()?;
        match self.layers.last() {
            Some(LayerSpec::FullyConnected { out_features }) if *out_features == self.num_classes => {}
            _ => {
                return Err(NnError::InvalidSpec(format!(
                    "final layer must be fc with {} outputs",
                    self.num_classes
                )))
            }
        }
        debug_assert_eq!(shapes.last().map(Vec::as_slice), Some(&[self.num_classes][..]));
        Ok(())
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Width of the activation fed into the final layer.
    pub fn feature_width(&self) -> Result<usize, NnError> {
        let shapes = self.layer_shapes()?;
        Ok(shapes[shapes.len() - 2].iter().product())
    }

    pub fn count(&self, pred: impl Fn(&LayerSpec) -> bool) -> usize {
        self.layers.iter().filter(|l| pred(l)).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec always serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let spec: Self = serde_json::from_str(s).map_err(|e| NnError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Builds a named preset: `"alexnet-227"` or the desk-scale `"tiny-32"`.
pub fn build_preset(name: &str, num_classes: usize) -> Result<NetworkSpec, NnError> {
    use LayerSpec::{Flatten, FullyConnected as Fc, MaxPool, Relu};
    let pool = |size, stride| MaxPool { size, stride };
    let (input_shape, layers) = match name {
        "alexnet-227" => (
            vec![1, 227, 227],
            vec![
                LayerSpec::conv(96, 11, 4, 0),
                Relu,
                LRN_DEFAULT,
                pool(3, 2),
                LayerSpec::conv(256, 5, 1, 2),
                Relu,
                LRN_DEFAULT,
                pool(3, 2),
                LayerSpec::conv(384, 3, 1, 1),
                Relu,
                LayerSpec::conv(384, 3, 1, 1),
                Relu,
                LayerSpec::conv(256, 3, 1, 1),
                Relu,
                pool(3, 2),
                Flatten,
                Fc { out_features: 4096 },
                Relu,
                Fc { out_features: 4096 },
                Relu,
                Fc {
                    out_features: num_classes,
                },
            ],
        ),
        "tiny-32" => (
            vec![1, 32, 32],
            vec![
                LayerSpec::conv(8, 3, 1, 1),
                Relu,
                LRN_DEFAULT,
                pool(2, 2),
                LayerSpec::conv(16, 3, 1, 1),
                Relu,
                LRN_DEFAULT,
                pool(2, 2),
                LayerSpec::conv(16, 3, 1, 1),
                Relu,
                LayerSpec::conv(16, 3, 1, 1),
                Relu,
                LayerSpec::conv(16, 3, 1, 1),
                Relu,
                pool(2, 2),
                Flatten,
                Fc { out_features: 64 },
                Relu,
                Fc { out_features: 64 },
                Relu,
                Fc {
                    out_features: num_classes,
                },
            ],
        ),
        other => return Err(NnError::UnknownPreset(other.to_string())),
    };
    let spec = NetworkSpec {
        input_shape,
        layers,
        num_classes,
        preset_name: Some(name.to_string()),
    };
    spec.validate()?;
    Ok(spec)
}
