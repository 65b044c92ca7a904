//! Central-difference verification of the analytic parameter gradients.

use serde::{Deserialize, Serialize};

use super::layers::{cross_entropy, softmax};
use super::network::{forward_trace, forward_trace_from, loss_and_grad};
use super::{NetworkSpec, NnError, Parameters, Tensor};
use crate::rng::{derive_seed, Prng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Check at most this many coordinates per tensor (chosen at random);
    /// `None` checks every coordinate.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    /// Index into `spec.layers`.
    pub layer: usize,
    pub kind: String,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU or pooling boundary.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks every parameter coordinate.
pub fn grad_check(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &Tensor,
    label: usize,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport, NnError> {
    grad_check_sampled(
        spec,
        params,
        input,
        label,
        &GradCheckOptions {
            eps,
            tolerance,
            ..GradCheckOptions::default()
        },
    )
}

/// Compares backprop gradients of the cross-entropy loss (no weight decay)
/// against `(L(w + eps) - L(w - eps)) / (2 eps)`. Coordinates where either
/// perturbation changes the ReLU/pooling pattern sit on a kink and are
/// counted as skipped instead of compared.
pub fn grad_check_sampled(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &Tensor,
    label: usize,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, NnError> {
    params.check_against(spec)?;
    let (_, _, analytic) = loss_and_grad(spec, params, input, label)?;
    let base = forward_trace(spec, params, input)?;
    let base_pattern = base.activation_pattern(spec);
    let mut rng = Prng::new(opts.seed);

    let mut probe = params.clone();
    // only layers at or after the perturbed one need recomputing
    let eval = |p: &Parameters, from: usize| -> Result<(f64, bool), NnError> {
        let trace = forward_trace_from(spec, p, &base, from)?;
        let same = trace.activation_pattern(spec) == base_pattern;
        Ok((cross_entropy(&softmax(&trace.logits), label)?, same))
    };

    let layer_ids: Vec<(usize, &'static str)> = spec
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.has_parameters())
        .map(|(i, l)| (i, l.name()))
        .collect();

    let mut layers = Vec::new();
    for (block, &(layer, kind)) in layer_ids.iter().enumerate() {
        let mut check = LayerCheck {
            layer,
            kind: kind.to_string(),
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
        };
        for which in 0..2 {
            let len = if which == 0 {
                params.layers[block].weights.len()
            } else {
                params.layers[block].bias.len()
            };
            let coords = match opts.max_coords_per_tensor {
                Some(m) if m < len => rng.sample_indices(len, m),
                _ => (0..len).collect(),
            };
            for i in coords {
                let original = if which == 0 {
                    params.layers[block].weights.data()[i]
                } else {
                    params.layers[block].bias.data()[i]
                };
                let set = |p: &mut Parameters, v: f64| {
                    let t = if which == 0 {
                        &mut p.layers[block].weights
                    } else {
                        &mut p.layers[block].bias
                    };
                    t.data_mut()[i] = v;
                };
                set(&mut probe, original + opts.eps);
                let (plus, same_plus) = eval(&probe, layer)?;
                set(&mut probe, original - opts.eps);
                let (minus, same_minus) = eval(&probe, layer)?;
                set(&mut probe, original);
                if !(same_plus && same_minus) {
                    check.skipped_kinks += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * opts.eps);
                let a = if which == 0 {
                    analytic.layers[block].weights.data()[i]
                } else {
                    analytic.layers[block].bias.data()[i]
                };
                check.max_rel_error = check.max_rel_error.max(relative_error(a, numeric));
                check.checked += 1;
            }
        }
        layers.push(check);
    }
    let passed = layers.iter().all(|l| l.max_rel_error <= opts.tolerance);
    Ok(GradCheckReport {
        layers,
        tolerance: opts.tolerance,
        passed,
    })
}

/// Coordinates sampled per tensor by [`preset_grad_check`].
pub const PRESET_COORDS_PER_TENSOR: usize = 200;

/// The standard check behind `btd gradcheck`: a freshly initialized preset
/// network, a zero-mean uniform `[-1, 1]` input and label `seed % 2`, all
/// derived from `seed`; eps 1e-5, tolerance 1e-4.
pub fn preset_grad_check(preset: &str, seed: u64) -> Result<GradCheckReport, NnError> {
    let spec = super::build_preset(preset, 2)?;
    let params = super::init_parameters(&spec, derive_seed(seed, "gradcheck-init"))?;
    let mut rng = Prng::for_stage(seed, "gradcheck-input");
    let n = spec.input_shape.iter().product();
    let input = Tensor::from_parts(
        spec.input_shape.clone(),
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    );
    let opts = GradCheckOptions {
        max_coords_per_tensor: Some(PRESET_COORDS_PER_TENSOR),
        seed: derive_seed(seed, "gradcheck-coords"),
        ..GradCheckOptions::default()
    };
    grad_check_sampled(&spec, &params, &input, (seed % 2) as usize, &opts)
}
