//! Loading, preprocessing and tensor preparation of datasets.

use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Preprocessing, SyntheticSource};
use super::PipelineError;
use crate::clustering::{kmeans_image, quantize_image, ClusterError};
use crate::imageio::{
    generate_synthetic, load_manifest, read_pgm_file, resize_bilinear, to_tensor, DatasetManifest, GrayImage, Label,
    Split,
};
use crate::nn::Tensor;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Manifest path as written, or `synthetic:<generation index>`.
    pub id: String,
    pub image: GrayImage,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Split of the `index`-th generated synthetic image: the last
/// `test_per_class` images of each label are held out.
pub fn synthetic_split(n_per_class: usize, test_per_class: usize, index: usize) -> Split {
    if index / 2 >= n_per_class - test_per_class {
        Split::Test
    } else {
        Split::Train
    }
}

pub fn synthetic_dataset(src: &SyntheticSource) -> Dataset {
    let mut ds = Dataset::default();
    for (i, (image, label)) in generate_synthetic(src.seed, src.n_per_class, src.size)
        .into_iter()
        .enumerate()
    {
        let sample = Sample {
            id: format!("synthetic:{i}"),
            image,
            label,
        };
        match synthetic_split(src.n_per_class, src.test_count(), i) {
            Split::Train => ds.train.push(sample),
            Split::Test => ds.test.push(sample),
        }
    }
    ds
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(load_manifest(&bytes)?)
}

/// Image files are resolved relative to the manifest's directory.
pub fn manifest_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut ds = Dataset::default();
    for e in manifest.entries() {
        let file: PathBuf = base.join(&e.path);
        let image = read_pgm_file(&file).map_err(|source| PipelineError::Image {
            id: e.path.display().to_string(),
            source,
        })?;
        let sample = Sample {
            id: e.path.display().to_string(),
            image,
            label: e.label,
        };
        match e.split {
            Split::Train => ds.train.push(sample),
            Split::Test => ds.test.push(sample),
        }
    }
    Ok(ds)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, PipelineError> {
    match (&cfg.manifest, &cfg.synthetic) {
        (Some(path), None) => manifest_dataset(path),
        (None, Some(src)) => Ok(synthetic_dataset(src)),
        _ => Err(PipelineError::Config("exactly one data source is required".into())),
    }
}

/// Per-image k-means quantization, seeded by the `preprocess` stage of the
/// global seed. `k` is capped at the number of distinct intensities.
pub fn preprocess_image(img: &GrayImage, pre: &Preprocessing, global_seed: u64) -> Result<GrayImage, ClusterError> {
    match *pre {
        Preprocessing::None => Ok(img.clone()),
        Preprocessing::Cluster { k, max_iter, tol } => {
            let mut present = [false; 256];
            for &p in img.pixels() {
                present[p as usize] = true;
            }
            let distinct = present.iter().filter(|&&b| b).count();
            let model = kmeans_image(
                img,
                k.min(distinct),
                derive_seed(global_seed, "preprocess"),
                max_iter,
                tol,
            )?;
            Ok(quantize_image(img, &model))
        }
    }
}

/// Preprocess, resize to the network's `[1, h, w]` input and scale to `[0, 1]`.
pub fn prepare_input(
    img: &GrayImage,
    pre: &Preprocessing,
    global_seed: u64,
    input_shape: &[usize],
) -> Result<Tensor, ClusterError> {
    let img = preprocess_image(img, pre, global_seed)?;
    let (h, w) = (input_shape[1], input_shape[2]);
    if img.width() == w && img.height() == h {
        Ok(to_tensor(&img))
    } else {
        Ok(to_tensor(&resize_bilinear(&img, w, h)))
    }
}

pub(crate) fn prepare_all(
    samples: &[Sample],
    pre: &Preprocessing,
    global_seed: u64,
    input_shape: &[usize],
) -> Result<Vec<(Tensor, usize)>, PipelineError> {
    samples
        .iter()
        .map(|s| {
            prepare_input(&s.image, pre, global_seed, input_shape)
                .map(|t| (t, s.label.index()))
                .map_err(|source| PipelineError::Preprocess {
                    id: s.id.clone(),
                    source,
                })
        })
        .collect()
}

/// Training tensors for `model`, replaying its preprocessing.
pub fn prepare_for_model(
    samples: &[Sample],
    model: &super::ModelArtifact,
) -> Result<Vec<(Tensor, usize)>, PipelineError> {
    prepare_all(samples, &model.preprocessing, model.seed, &model.network.input_shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_split_counts() {
        let src = SyntheticSource {
            seed: 7,
            n_per_class: 130,
            size: 16,
            test_per_class: Some(30),
        };
        let ds = synthetic_dataset(&src);
        assert_eq!(ds.train.len(), 200);
        assert_eq!(ds.test.len(), 60);
        assert_eq!(ds.test.iter().filter(|s| s.label == Label::Tumor).count(), 30);
        assert_eq!(ds.train.iter().filter(|s| s.label == Label::Tumor).count(), 100);
        assert_eq!(ds.test[0].id, "synthetic:200");
    }

    #[test]
    fn quantization_limits_palette() {
        let img = &generate_synthetic(1, 1, 32)[1].0;
        let q = preprocess_image(img, &Preprocessing::cluster_default(), 3).unwrap();
        let mut palette: Vec<u8> = q.pixels().to_vec();
        palette.sort_unstable();
        palette.dedup();
        assert!(palette.len() <= 4);
        // a flat image has one intensity; k is capped rather than rejected
        let flat = GrayImage::filled(8, 8, 0).unwrap();
        assert_eq!(
            preprocess_image(&flat, &Preprocessing::cluster_default(), 0).unwrap(),
            flat
        );
    }

    #[test]
    fn prepared_tensor_shape() {
        let img = &generate_synthetic(2, 1, 64)[0].0;
        let t = prepare_input(img, &Preprocessing::None, 0, &[1, 32, 32]).unwrap();
        assert_eq!(t.shape(), &[1, 32, 32]);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
