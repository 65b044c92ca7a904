//! Gaussian radial-basis-function network.
//!
//! Prototypes come from per-class k-means, unit widths from the spacing of
//! neighbouring prototypes, and the linear output layer from ridge-regularized
//! least squares against one-hot targets.

use serde::{Deserialize, Serialize};

use super::{check_training_set, FeatureVector, HeadError};
use crate::clustering::kmeans_nd;
use crate::nn::argmax;
use crate::rng::derive_seed;

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    /// `m` prototypes of dimension `d`, grouped by class.
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<f64>,
    /// `(m + 1) x num_classes`; the last row is the bias.
    pub output_weights: Vec<Vec<f64>>,
    pub num_classes: usize,
    pub train_accuracy: f64,
}

impl RbfModel {
    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// `phi_j(x) = exp(-|x - c_j|^2 / (2 width_j^2))`
    pub fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(|(c, w)| {
                let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                (-d2 / (2.0 * w * w)).exp()
            })
            .collect()
    }

    fn scores_from_hidden(&self, phi: &[f64]) -> Vec<f64> {
        let m = self.centers.len();
        let mut scores = self.output_weights[m].clone();
        for (row, &p) in self.output_weights[..m].iter().zip(phi) {
            for (s, w) in scores.iter_mut().zip(row) {
                *s += p * w;
            }
        }
        scores
    }

    pub fn validate(&self) -> Result<(), HeadError> {
        let m = self.centers.len();
        let bad = |s: &str| Err(HeadError::Malformed(s.to_string()));
        if m == 0 {
            return bad("rbf model has no centers");
        }
        if self.widths.len() != m || self.output_weights.len() != m + 1 {
            return bad("rbf widths/output weights do not match the center count");
        }
        let d = self.dim();
        if self.centers.iter().any(|c| c.len() != d) || self.output_weights.iter().any(|r| r.len() != self.num_classes)
        {
            return bad("ragged rbf tensors");
        }
        if self.widths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("rbf widths must be positive");
        }
        if self
            .centers
            .iter()
            .chain(&self.output_weights)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("rbf model has non-finite values");
        }
        Ok(())
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean distance to the two nearest other centers, or the mean pairwise
/// distance when fewer than three centers exist. Degenerate zero widths fall
/// back to the pairwise mean, then to 1.
fn widths(centers: &[Vec<f64>]) -> Vec<f64> {
    let m = centers.len();
    let mut pairwise_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..m {
        for j in i + 1..m {
            pairwise_sum += distance(&centers[i], &centers[j]);
            pairs += 1;
        }
    }
    let global = if pairs > 0 && pairwise_sum > 0.0 {
        pairwise_sum / pairs as f64
    } else {
        1.0
    };
    if m < 3 {
        return vec![global; m];
    }
    centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut d: Vec<f64> = centers
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, o)| distance(c, o))
                .collect();
            d.sort_by(f64::total_cmp);
            let w = (d[0] + d[1]) / 2.0;
            if w > 0.0 {
                w
            } else {
                global
            }
        })
        .collect()
}

/// Solves `a x = b` for symmetric positive definite `a` (row-major `n x n`)
/// with several right-hand sides; `None` when a pivot is not clearly positive.
#[allow(clippy::needless_range_loop)]
fn cholesky_solve(a: &[f64], n: usize, b: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(1.0, f64::max);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s.is_nan() || s <= 1e-12 * scale {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let cols = b.first().map_or(0, Vec::len);
    let mut x = b.to_vec();
    for c in 0..cols {
        for i in 0..n {
            let mut s = x[i][c];
            for k in 0..i {
                s -= l[i * n + k] * x[k][c];
            }
            x[i][c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i][c];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k][c];
            }
            x[i][c] = s / l[i * n + i];
        }
    }
    Some(x)
}

/// Fits an RBF network. Class `c` gets `k_per_class` prototypes from k-means
/// seeded with `derive_seed(seed, "rbf-class-c")`. The output weights `W`
/// satisfy `(Phi^T Phi + ridge I) W = Phi^T Y` where `Phi` carries a trailing
/// column of ones; `ridge = +inf` yields all-zero weights.
pub fn train_rbf(
    features: &[FeatureVector],
    labels: &[usize],
    k_per_class: usize,
    ridge: f64,
    seed: u64,
) -> Result<RbfModel, HeadError> {
    check_training_set(features, labels)?;
    if k_per_class == 0 {
        return Err(HeadError::InvalidHyperparameter(
            "k_per_class must be at least 1".into(),
        ));
    }
    if ridge.is_nan() || ridge < 0.0 {
        return Err(HeadError::InvalidHyperparameter(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    let mut centers = Vec::new();
    for class in 0..num_classes {
        let points: Vec<Vec<f64>> = features
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(f, _)| f.0.clone())
            .collect();
        if points.len() < k_per_class {
            return Err(HeadError::InsufficientSamples {
                class,
                have: points.len(),
                need: k_per_class,
            });
        }
        let clusters = kmeans_nd(
            &points,
            k_per_class,
            derive_seed(seed, &format!("rbf-class-{class}")),
            KMEANS_MAX_ITER,
            0.0,
        )?;
        centers.extend(clusters.centers);
    }
    let m = centers.len();
    let mut model = RbfModel {
        widths: widths(&centers),
        centers,
        output_weights: vec![vec![0.0; num_classes]; m + 1],
        num_classes,
        train_accuracy: 0.0,
    };

    let design: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            let mut row = model.hidden(&f.0);
            row.push(1.0);
            row
        })
        .collect();

    if ridge.is_finite() {
        let n = m + 1;
        let mut gram = vec![0.0; n * n];
        let mut rhs = vec![vec![0.0; num_classes]; n];
        for (row, &label) in design.iter().zip(labels) {
            for i in 0..n {
                for j in 0..=i {
                    gram[i * n + j] += row[i] * row[j];
                }
                rhs[i][label] += row[i];
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[j * n + i] = gram[i * n + j];
            }
            gram[i * n + i] += ridge;
        }
        model.output_weights = cholesky_solve(&gram, n, &rhs).ok_or(HeadError::Singular { ridge })?;
    }
    if model.output_weights.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HeadError::NonFinite("rbf output weights"));
    }

    let correct = design
        .iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(&model.scores_from_hidden(&row[..m])) == l)
        .count();
    model.train_accuracy = correct as f64 / labels.len() as f64;
    Ok(model)
}

/// Class (argmax, ties to the lowest index) and raw output scores.
pub fn rbf_predict(model: &RbfModel, x: &FeatureVector) -> Result<(usize, Vec<f64>), HeadError> {
    if x.dim() != model.dim() {
        return Err(HeadError::DimensionMismatch {
            expected: model.dim(),
            got: x.dim(),
        });
    }
    let scores = model.scores_from_hidden(&model.hidden(&x.0));
    Ok((argmax(&scores), scores))
}
