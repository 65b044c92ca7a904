//! Grayscale image ingestion: PGM codec, resizing, tensor conversion,
//! dataset manifests and the synthetic corpus generator.

mod manifest;
mod pgm;
mod resize;
mod synthetic;

pub use manifest::{load_manifest, DatasetManifest, Label, ManifestEntry, ManifestError, Split, SplitCounts};
pub use pgm::{load_pgm, read_pgm_file, save_pgm, write_pgm_file, PgmError};
pub use resize::resize_bilinear;
pub use synthetic::generate_synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Tensor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values but {width}x{height} needs {expected}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
}

/// 8-bit grayscale raster, row-major with a top-left origin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        let expected = width * height;
        if pixels.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn mean_intensity(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / self.pixels.len() as f64
    }
}

/// `[1, height, width]` tensor with values `pixel / 255`.
pub fn to_tensor(img: &GrayImage) -> Tensor {
    let data = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Tensor::from_parts(vec![1, img.height, img.width], data)
}

/// Round half up, then clamp into the 8-bit range.
pub(crate) fn round_to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}
