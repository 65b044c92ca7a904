use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, cross_entropy, fc_backward, fc_forward, lrn_backward, lrn_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax, softmax_cross_entropy_grad,
};
use super::{LayerSpec, NetworkSpec, NnError, Tensor};
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Learned weights, one entry per parameterized layer in network order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

impl Parameters {
    /// Zero tensors with the shapes `spec` requires.
    pub fn zeros_like(spec: &NetworkSpec) -> Result<Self, NnError> {
        let shapes = spec.layer_shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .filter_map(|(l, input)| l.parameter_shapes(input))
            .map(|(w, b, _)| LayerParams {
                weights: Tensor::zeros(&w),
                bias: Tensor::zeros(&b),
            })
            .collect();
        Ok(Self { layers })
    }

    /// Errors unless every tensor has the shape `spec` requires and is finite.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<(), NnError> {
        let expected = Self::zeros_like(spec)?;
        if expected.layers.len() != self.layers.len() {
            return Err(NnError::ParameterMismatch(format!(
                "network has {} parameterized layers, parameters cover {}",
                expected.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (e, p)) in expected.layers.iter().zip(&self.layers).enumerate() {
            if e.weights.shape() != p.weights.shape() || e.bias.shape() != p.bias.shape() {
                return Err(NnError::ParameterMismatch(format!(
                    "parameter block {i}: expected {:?}/{:?}, found {:?}/{:?}",
                    e.weights.shape(),
                    e.bias.shape(),
                    p.weights.shape(),
                    p.bias.shape()
                )));
            }
            if !p.weights.is_finite() || !p.bias.is_finite() {
                return Err(NnError::ParameterMismatch(format!("parameter block {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    pub fn count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }
}

/// He initialization: weights ~ N(0, sqrt(2 / fan_in)), biases 0.
pub fn init_parameters(spec: &NetworkSpec, seed: u64) -> Result<Parameters, NnError> {
    spec.validate()?;
    let shapes = spec.layer_shapes()?;
    let mut rng = Prng::new(seed);
    let layers = spec
        .layers
        .iter()
        .zip(&shapes)
        .filter_map(|(l, input)| l.parameter_shapes(input))
        .map(|(w, b, fan_in)| {
            let std = (2.0 / fan_in as f64).sqrt();
            let n = w.iter().product();
            let data = (0..n).map(|_| std * rng.next_gaussian()).collect();
            LayerParams {
                weights: Tensor::from_parts(w, data),
                bias: Tensor::zeros(&b),
            }
        })
        .collect();
    Ok(Parameters { layers })
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer.
    pub inputs: Vec<Tensor>,
    /// Argmax indices for pooling layers.
    pub pool_indices: Vec<Option<Vec<usize>>>,
    pub logits: Tensor,
}

impl ForwardTrace {
    /// ReLU on/off pattern and pooling argmaxes; two inputs with the same
    /// pattern lie in the same smooth piece of the network function.
    pub fn activation_pattern(&self, spec: &NetworkSpec) -> (Vec<bool>, Vec<usize>) {
        let mut signs = Vec::new();
        let mut pools = Vec::new();
        for (i, layer) in spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Relu => signs.extend(self.inputs[i].data().iter().map(|&v| v > 0.0)),
                LayerSpec::MaxPool { .. } => pools.extend(self.pool_indices[i].iter().flatten()),
                _ => {}
            }
        }
        (signs, pools)
    }
}

fn check_input(spec: &NetworkSpec, input: &Tensor) -> Result<(), NnError> {
    if input.shape() != spec.input_shape.as_slice() {
        return Err(NnError::DimensionMismatch(format!(
            "network expects input {:?}, got {:?}",
            spec.input_shape,
            input.shape()
        )));
    }
    Ok(())
}

/// Runs `spec.layers[..upto]` and records what backward needs.
fn run_layers(spec: &NetworkSpec, params: &Parameters, input: &Tensor, upto: usize) -> Result<ForwardTrace, NnError> {
    check_input(spec, input)?;
    let start = ForwardTrace {
        inputs: Vec::with_capacity(upto),
        pool_indices: Vec::with_capacity(upto),
        logits: input.clone(),
    };
    resume_layers(spec, params, start, upto)
}

/// Continues a partial trace: `prefix.inputs` covers the layers already run
/// and `prefix.logits` holds the activation entering the next one.
fn resume_layers(
    spec: &NetworkSpec,
    params: &Parameters,
    prefix: ForwardTrace,
    upto: usize,
) -> Result<ForwardTrace, NnError> {
    if params.layers.len() != spec.count(LayerSpec::has_parameters) {
        return Err(NnError::ParameterMismatch(
            "parameter block count differs from the network".into(),
        ));
    }
    let ForwardTrace {
        mut inputs,
        mut pool_indices,
        logits: mut x,
    } = prefix;
    let first = inputs.len();
    let mut slot = spec.layers[..first].iter().filter(|l| l.has_parameters()).count();
    for (i, layer) in spec.layers.iter().enumerate().take(upto).skip(first) {
        let mut indices = None;
        let shape_err = |e: NnError| match e {
            NnError::DimensionMismatch(msg) => NnError::ShapeMismatch { layer: i, msg },
            other => other,
        };
        let y = match *layer {
            LayerSpec::Conv { stride, pad, .. } => {
                let p = &params.layers[slot];
                slot += 1;
                conv2d_forward(&x, &p.weights, &p.bias, stride, pad).map_err(shape_err)?
            }
            LayerSpec::FullyConnected { .. } => {
                let p = &params.layers[slot];
                slot += 1;
                fc_forward(&x, &p.weights, &p.bias).map_err(shape_err)?
            }
            LayerSpec::Relu => relu_forward(&x),
            LayerSpec::Lrn { n, k, alpha, beta } => lrn_forward(&x, n, k, alpha, beta).map_err(shape_err)?,
            LayerSpec::MaxPool { size, stride } => {
                let (y, idx) = maxpool_forward(&x, size, stride).map_err(shape_err)?;
                indices = Some(idx);
                y
            }
            LayerSpec::Flatten => {
                let n = x.len();
                x.clone().reshaped(vec![n])
            }
        };
        inputs.push(std::mem::replace(&mut x, y));
        pool_indices.push(indices);
    }
    Ok(ForwardTrace {
        inputs,
        pool_indices,
        logits: x,
    })
}

pub fn forward_trace(spec: &NetworkSpec, params: &Parameters, input: &Tensor) -> Result<ForwardTrace, NnError> {
    run_layers(spec, params, input, spec.layers.len())
}

/// Re-runs layers `from..` of a complete trace with different parameters,
/// reusing the cached activations of the earlier layers.
pub(crate) fn forward_trace_from(
    spec: &NetworkSpec,
    params: &Parameters,
    base: &ForwardTrace,
    from: usize,
) -> Result<ForwardTrace, NnError> {
    let prefix = ForwardTrace {
        inputs: base.inputs[..from].to_vec(),
        pool_indices: base.pool_indices[..from].to_vec(),
        logits: base.inputs[from].clone(),
    };
    resume_layers(spec, params, prefix, spec.layers.len())
}

/// Logits for one input.
pub fn forward(spec: &NetworkSpec, params: &Parameters, input: &Tensor) -> Result<Tensor, NnError> {
    Ok(forward_trace(spec, params, input)?.logits)
}

/// Activation entering the final layer (the penultimate representation).
pub fn forward_to_final_layer(spec: &NetworkSpec, params: &Parameters, input: &Tensor) -> Result<Tensor, NnError> {
    let upto = spec.layers.len().saturating_sub(1);
    Ok(run_layers(spec, params, input, upto)?.logits)
}

pub fn predict_probs(spec: &NetworkSpec, params: &Parameters, input: &Tensor) -> Result<Tensor, NnError> {
    Ok(softmax(&forward(spec, params, input)?))
}

/// Parameter gradients given the gradient of the loss at the logits.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    trace: &ForwardTrace,
    grad_logits: Tensor,
) -> Result<Parameters, NnError> {
    let mut grads: Vec<Option<LayerParams>> = vec![None; params.layers.len()];
    let mut slot = params.layers.len();
    let mut g = grad_logits;
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let x = &trace.inputs[i];
        g = match *layer {
            LayerSpec::Conv { stride, pad, .. } => {
                slot -= 1;
                let (gx, gw, gb) = conv2d_backward(&g, x, &params.layers[slot].weights, stride, pad)?;
                grads[slot] = Some(LayerParams { weights: gw, bias: gb });
                gx
            }
            LayerSpec::FullyConnected { .. } => {
                slot -= 1;
                let (gx, gw, gb) = fc_backward(&g, x, &params.layers[slot].weights)?;
                grads[slot] = Some(LayerParams { weights: gw, bias: gb });
                gx
            }
            LayerSpec::Relu => relu_backward(&g, x),
            LayerSpec::Lrn { n, k, alpha, beta } => lrn_backward(&g, x, n, k, alpha, beta)?,
            LayerSpec::MaxPool { .. } => {
                let idx = trace.pool_indices[i].as_ref().expect("pool layers record indices");
                maxpool_backward(&g, idx, x.shape())?
            }
            LayerSpec::Flatten => g.reshaped(x.shape().to_vec()),
        };
    }
    Ok(Parameters {
        layers: grads.into_iter().map(|g| g.expect("every block visited")).collect(),
    })
}

/// Cross-entropy loss, class probabilities and parameter gradients for one example.
pub fn loss_and_grad(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &Tensor,
    label: usize,
) -> Result<(f64, Tensor, Parameters), NnError> {
    let trace = forward_trace(spec, params, input)?;
    let probs = softmax(&trace.logits);
    let loss = cross_entropy(&probs, label)?;
    let grad_logits = softmax_cross_entropy_grad(&probs, label)?;
    let grads = backward(spec, params, &trace, grad_logits)?;
    Ok((loss, probs, grads))
}
