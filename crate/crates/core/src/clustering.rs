//! Lloyd's k-means over pixel intensities, image quantization, and
//! first-order statistics of the resulting clusters.
//!
//! The 1-D variant drives image preprocessing; [`kmeans_nd`] runs the same
//! scheme with Euclidean distance for the RBF head's prototypes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{round_to_u8, GrayImage};
use crate::rng::Prng;

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("cannot cluster an empty input")]
    EmptyInput,
    #[error("k = {k} exceeds the {distinct} distinct input values")]
    InfeasibleK { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("max_iter must be at least 1")]
    ZeroMaxIter,
    #[error("tolerance must be finite and non-negative, got {0}")]
    BadTolerance(f64),
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("points have inconsistent dimensions")]
    RaggedInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    /// Strictly ascending.
    pub centers: Vec<f64>,
    pub seed: u64,
    pub iterations_run: usize,
    pub inertia: f64,
}

/// Outcome of a Lloyd run including the inertia after every update step.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub model: ClusterModel,
    pub inertia_trace: Vec<f64>,
}

impl ClusterModel {
    /// Nearest center; ties go to the smaller center.
    pub fn assign(&self, value: f64) -> usize {
        nearest_center(&self.centers, value).0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("cluster model always serializes")
    }
}

fn nearest_center(centers: &[f64], value: f64) -> (usize, f64) {
    let mut best = (0, (value - centers[0]).powi(2));
    for (i, &c) in centers.iter().enumerate().skip(1) {
        let d = (value - c).powi(2);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn validate(values: &[f64], k: usize, max_iter: usize, tol: f64) -> Result<Vec<f64>, ClusterError> {
    if values.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if max_iter == 0 {
        return Err(ClusterError::ZeroMaxIter);
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(ClusterError::BadTolerance(tol));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    let distinct = distinct_sorted(values);
    if k > distinct.len() {
        return Err(ClusterError::InfeasibleK {
            k,
            distinct: distinct.len(),
        });
    }
    Ok(distinct)
}

/// k-means on scalar values with `k` distinct starting values drawn uniformly
/// without replacement from the distinct input values.
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel, ClusterError> {
    let distinct = validate(values, k, max_iter, tol)?;
    let mut rng = Prng::new(seed);
    let init: Vec<f64> = rng
        .sample_indices(distinct.len(), k)
        .into_iter()
        .map(|i| distinct[i])
        .collect();
    let mut run = lloyd_1d(values, &init, max_iter, tol)?;
    run.model.seed = seed;
    Ok(run.model)
}

/// Lloyd iteration from explicit starting centers.
///
/// Each step assigns every value to its nearest center, then moves each
/// center to the mean of its members (summed in input order). A center that
/// lost all members jumps to the value currently farthest from its own
/// center. Stops once the largest center movement is below `tol` (or zero)
/// or after `max_iter` updates.
pub fn lloyd_1d(values: &[f64], init: &[f64], max_iter: usize, tol: f64) -> Result<LloydRun, ClusterError> {
    validate(values, init.len(), max_iter, tol)?;
    let mut centers = init.to_vec();
    centers.sort_by(f64::total_cmp);
    let k = centers.len();

    let mut assignment = vec![0usize; values.len()];
    let mut dist = vec![0.0f64; values.len()];
    let assign = |centers: &[f64], assignment: &mut [usize], dist: &mut [f64]| -> f64 {
        let mut inertia = 0.0;
        for (i, &v) in values.iter().enumerate() {
            let (c, d) = nearest_center(centers, v);
            assignment[i] = c;
            dist[i] = d;
            inertia += d;
        }
        inertia
    };

    let mut inertia = assign(&centers, &mut assignment, &mut dist);
    let mut trace = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![0.0f64; k];
        let mut counts = vec![0usize; k];
        for (&v, &c) in values.iter().zip(&assignment) {
            sums[c] += v;
            counts[c] += 1;
        }
        let mut updated: Vec<f64> = (0..k)
            .map(|c| {
                if counts[c] > 0 {
                    sums[c] / counts[c] as f64
                } else {
                    centers[c]
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] == 0 {
                // lowest index wins among equally far values
                let mut far = 0;
                for i in 1..values.len() {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                updated[c] = values[far];
                dist[far] = 0.0;
            }
        }
        let movement = centers
            .iter()
            .zip(&updated)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        updated.sort_by(f64::total_cmp);
        centers = updated;
        let next = assign(&centers, &mut assignment, &mut dist);
        debug_assert!(
            next <= inertia + 1e-9 * inertia.max(1.0),
            "Lloyd inertia increased from {inertia} to {next}"
        );
        inertia = next;
        trace.push(inertia);
        if movement < tol || movement == 0.0 {
            break;
        }
    }

    centers.dedup();
    Ok(LloydRun {
        model: ClusterModel {
            k: centers.len(),
            centers,
            seed: 0,
            iterations_run: iterations,
            inertia,
        },
        inertia_trace: trace,
    })
}

/// Convenience: cluster an image's own pixel intensities.
pub fn kmeans_image(
    img: &GrayImage,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel, ClusterError> {
    let values: Vec<f64> = img.pixels().iter().map(|&p| f64::from(p)).collect();
    kmeans_1d(&values, k, seed, max_iter, tol)
}

/// Replaces every pixel by its nearest center, rounded half up.
pub fn quantize_image(img: &GrayImage, model: &ClusterModel) -> GrayImage {
    let palette: Vec<u8> = model.centers.iter().map(|&c| round_to_u8(c)).collect();
    // 256-entry lookup: every pixel value maps through the same nearest-center rule
    let lut: Vec<u8> = (0..=255u8).map(|p| palette[model.assign(f64::from(p))]).collect();
    let pixels = img.pixels().iter().map(|&p| lut[p as usize]).collect();
    GrayImage::new(img.width(), img.height(), pixels).expect("same dimensions as input")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance; 0 for empty or singleton clusters.
    pub variance: f64,
}

/// Per-center member count, mean and variance, in center order.
pub fn first_order_stats(img: &GrayImage, model: &ClusterModel) -> Vec<ClusterStats> {
    let k = model.centers.len();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for &p in img.pixels() {
        let v = f64::from(p);
        members[model.assign(v)].push(v);
    }
    members
        .iter()
        .map(|m| {
            if m.is_empty() {
                return ClusterStats {
                    count: 0,
                    mean: 0.0,
                    variance: 0.0,
                };
            }
            let n = m.len() as f64;
            let mean = m.iter().sum::<f64>() / n;
            let variance = if m.len() == 1 {
                0.0
            } else {
                m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
            };
            ClusterStats {
                count: m.len(),
                mean,
                variance,
            }
        })
        .collect()
}

/// Result of [`kmeans_nd`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorClusters {
    pub centers: Vec<Vec<f64>>,
    pub iterations_run: usize,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's k-means on d-dimensional points with squared Euclidean distance.
///
/// Initial centers are `k` distinct points drawn uniformly without
/// replacement; when fewer than `k` distinct points exist, every distinct
/// point becomes a center. Ties in assignment go to the lower center index.
pub fn kmeans_nd(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<VectorClusters, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if max_iter == 0 {
        return Err(ClusterError::ZeroMaxIter);
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(ClusterError::RaggedInput);
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClusterError::NonFinite);
    }

    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct
            .iter()
            .any(|q| q.iter().zip(p.iter()).all(|(a, b)| a.to_bits() == b.to_bits()))
        {
            distinct.push(p);
        }
    }
    let k = k.min(distinct.len());
    let mut rng = Prng::new(seed);
    let mut centers: Vec<Vec<f64>> = rng
        .sample_indices(distinct.len(), k)
        .into_iter()
        .map(|i| distinct[i].clone())
        .collect();

    let assign = |centers: &[Vec<f64>], assignment: &mut [usize], dist: &mut [f64]| -> f64 {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = (0, sq_dist(p, &centers[0]));
            for (c, center) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(p, center);
                if dd < best.1 {
                    best = (c, dd);
                }
            }
            assignment[i] = best.0;
            dist[i] = best.1;
            inertia += best.1;
        }
        inertia
    };

    let mut assignment = vec![0usize; points.len()];
    let mut dist = vec![0.0; points.len()];
    let mut inertia = assign(&centers, &mut assignment, &mut dist);
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
            counts[c] += 1;
        }
        let mut movement = 0.0f64;
        for c in 0..k {
            let next = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                let mut far = 0;
                for i in 1..points.len() {
                    if dist[i] > dist[far] {
                        far = i;
                    }
                }
                dist[far] = 0.0;
                points[far].clone()
            };
            movement = movement.max(sq_dist(&centers[c], &next).sqrt());
            centers[c] = next;
        }
        inertia = assign(&centers, &mut assignment, &mut dist);
        if movement < tol || movement == 0.0 {
            break;
        }
    }
    Ok(VectorClusters {
        centers,
        iterations_run: iterations,
        inertia,
    })
}
