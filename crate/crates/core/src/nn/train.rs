//! Minibatch SGD with momentum and weight decay.

use serde::{Deserialize, Serialize};

use super::network::loss_and_grad;
use super::{LayerSpec, NetworkSpec, NnError, Parameters, Tensor};
use crate::rng::Prng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 10,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidTrainConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of examples classified correctly during the epoch's forward passes.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub mean_loss: f64,
    pub correct: usize,
}

/// Maps a parameter block back to its index in `spec.layers`.
fn layer_of_block(spec: &NetworkSpec, block: usize) -> (usize, &'static str) {
    spec.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.has_parameters())
        .nth(block)
        .map(|(i, l)| (i, l.name()))
        .unwrap_or((spec.layers.len().saturating_sub(1), "fc"))
}

/// One SGD update on `batch`:
/// `v <- momentum * v - lr * (grad + weight_decay * w)`, `w <- w + v`,
/// where `grad` is the mean over the batch, accumulated in batch order.
pub fn train_step(
    spec: &NetworkSpec,
    params: &mut Parameters,
    velocity: &mut Parameters,
    batch: &[(Tensor, usize)],
    cfg: &TrainConfig,
) -> Result<StepOutcome, NnError> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(NnError::InvalidTrainConfig("empty batch".into()));
    }
    let mut total_loss = 0.0;
    let mut correct = 0;
    let mut sum: Option<Parameters> = None;
    for (x, label) in batch {
        let (loss, probs, grads) = loss_and_grad(spec, params, x, *label)?;
        total_loss += loss;
        if probs.argmax() == *label {
            correct += 1;
        }
        match sum.as_mut() {
            None => sum = Some(grads),
            Some(acc) => {
                for (a, g) in acc.tensors_mut().zip(grads.tensors()) {
                    a.add_scaled(g, 1.0);
                }
            }
        }
    }
    let mean_loss = total_loss / batch.len() as f64;
    if !mean_loss.is_finite() {
        let (layer, kind) = (spec.layers.len() - 1, "fc");
        return Err(NnError::Divergence {
            layer,
            kind,
            epoch: None,
        });
    }
    let mut grad = sum.expect("non-empty batch");
    let inv = 1.0 / batch.len() as f64;
    for (block, lp) in grad.layers.iter_mut().enumerate() {
        lp.weights.scale(inv);
        lp.bias.scale(inv);
        if !lp.weights.is_finite() || !lp.bias.is_finite() {
            let (layer, kind) = layer_of_block(spec, block);
            return Err(NnError::Divergence {
                layer,
                kind,
                epoch: None,
            });
        }
    }

    for (block, ((p, v), g)) in params
        .layers
        .iter_mut()
        .zip(velocity.layers.iter_mut())
        .zip(&grad.layers)
        .enumerate()
    {
        for (pt, vt, gt) in [
            (&mut p.weights, &mut v.weights, &g.weights),
            (&mut p.bias, &mut v.bias, &g.bias),
        ] {
            for ((w, vel), gr) in pt.data_mut().iter_mut().zip(vt.data_mut()).zip(gt.data()) {
                *vel = cfg.momentum * *vel - cfg.learning_rate * (gr + cfg.weight_decay * *w);
                *w += *vel;
            }
        }
        if !p.weights.is_finite() || !p.bias.is_finite() {
            let (layer, kind) = layer_of_block(spec, block);
            return Err(NnError::Divergence {
                layer,
                kind,
                epoch: None,
            });
        }
    }
    Ok(StepOutcome { mean_loss, correct })
}

/// Trains for `cfg.epochs` passes over `data`, reshuffling every epoch from a
/// stream seeded by `cfg.seed`. Calls `on_epoch` after each epoch.
pub fn train(
    spec: &NetworkSpec,
    params: &mut Parameters,
    data: &[(Tensor, usize)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory, NnError> {
    cfg.validate()?;
    params.check_against(spec)?;
    if data.is_empty() {
        return Err(NnError::InvalidTrainConfig("no training data".into()));
    }
    debug_assert!(matches!(spec.layers.last(), Some(LayerSpec::FullyConnected { .. })));
    let mut velocity = Parameters::zeros_like(spec)?;
    let mut rng = Prng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Tensor, usize)> = chunk.iter().map(|&i| data[i].clone()).collect();
            let out = train_step(spec, params, &mut velocity, &batch, cfg).map_err(|e| match e {
                NnError::Divergence { layer, kind, .. } => NnError::Divergence {
                    layer,
                    kind,
                    epoch: Some(epoch),
                },
                other => other,
            })?;
            loss_sum += out.mean_loss * batch.len() as f64;
            correct += out.correct;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_preset, init_parameters, loss_and_grad};

    fn tiny_batch(seed: u64, n: usize) -> Vec<(Tensor, usize)> {
        let mut rng = Prng::new(seed);
        (0..n)
            .map(|i| {
                let data = (0..1024).map(|_| rng.next_f64()).collect();
                (Tensor::from_parts(vec![1, 32, 32], data), i % 2)
            })
            .collect()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let spec = build_preset("tiny-32", 2).unwrap();
        let mut p = init_parameters(&spec, 1).unwrap();
        let before = p.clone();
        let mut v = Parameters::zeros_like(&spec).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        train_step(&spec, &mut p, &mut v, &tiny_batch(2, 3), &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn plain_sgd_update() {
        let spec = build_preset("tiny-32", 2).unwrap();
        let mut p = init_parameters(&spec, 1).unwrap();
        let before = p.clone();
        let batch = tiny_batch(3, 2);
        // mean gradient, accumulated in batch order
        let (_, _, mut g) = loss_and_grad(&spec, &p, &batch[0].0, batch[0].1).unwrap();
        let (_, _, g2) = loss_and_grad(&spec, &p, &batch[1].0, batch[1].1).unwrap();
        for (a, b) in g.tensors_mut().zip(g2.tensors()) {
            a.add_scaled(b, 1.0);
            a.scale(0.5);
        }
        let mut v = Parameters::zeros_like(&spec).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            momentum: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        train_step(&spec, &mut p, &mut v, &batch, &cfg).unwrap();
        for ((after, w0), gr) in p.tensors().zip(before.tensors()).zip(g.tensors()) {
            for ((a, w), d) in after.data().iter().zip(w0.data()).zip(gr.data()) {
                assert_eq!(*a, w - 0.05 * d);
            }
        }
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        let spec = build_preset("tiny-32", 2).unwrap();
        let mut p = init_parameters(&spec, 8).unwrap();
        let batch = tiny_batch(9, 4);
        let loss = |p: &Parameters| -> f64 {
            batch
                .iter()
                .map(|(x, l)| loss_and_grad(&spec, p, x, *l).unwrap().0)
                .sum::<f64>()
                / batch.len() as f64
        };
        let before = loss(&p);
        let mut v = Parameters::zeros_like(&spec).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            ..TrainConfig::default()
        };
        let out = train_step(&spec, &mut p, &mut v, &batch, &cfg).unwrap();
        assert_eq!(out.mean_loss, before);
        assert!(loss(&p) <= before);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = build_preset("tiny-32", 2).unwrap();
        let mut p = init_parameters(&spec, 1).unwrap();
        p.layers[7].weights.data_mut()[0] = f64::MAX;
        p.layers[7].weights.data_mut()[1] = f64::MAX;
        let mut v = Parameters::zeros_like(&spec).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        let err = train_step(&spec, &mut p, &mut v, &tiny_batch(1, 2), &cfg).unwrap_err();
        assert!(matches!(err, NnError::Divergence { .. }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            momentum: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn training_is_deterministic() {
        let spec = build_preset("tiny-32", 2).unwrap();
        let data = tiny_batch(4, 6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut p = init_parameters(&spec, 2).unwrap();
            let h = train(&spec, &mut p, &data, &cfg, |_| {}).unwrap();
            (p, h)
        };
        let (p1, h1) = run();
        let (p2, h2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.epochs.len(), 2);
    }
}
