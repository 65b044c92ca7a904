//! Stand-in corpus: noisy dark backgrounds, with one bright ellipse for tumor images.

use super::{round_to_u8, GrayImage, Label};
use crate::rng::Prng;

const BACKGROUND_MEAN: f64 = 60.0;
const BACKGROUND_SIGMA: f64 = 20.0;
const BLOB_LOW: f64 = 200.0;
const BLOB_HIGH: f64 = 255.0;
const BLOB_SIGMA: f64 = 10.0;

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    level: f64,
}

impl Ellipse {
    fn random(rng: &mut Prng, size: f64) -> Self {
        let cx = rng.uniform(0.25 * size, 0.75 * size);
        let cy = rng.uniform(0.25 * size, 0.75 * size);
        let a = rng.uniform(0.08 * size, 0.2 * size);
        let b = rng.uniform(0.08 * size, 0.2 * size);
        let theta = rng.uniform(0.0, std::f64::consts::PI);
        let level = rng.uniform(210.0, 245.0);
        Self {
            cx,
            cy,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
            level,
        }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = y as f64 + 0.5 - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

fn render(rng: &mut Prng, size: usize, blob: Option<&Ellipse>) -> GrayImage {
    let mut pixels = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        pixels.push(round_to_u8(BACKGROUND_MEAN + BACKGROUND_SIGMA * rng.next_gaussian()));
    }
    if let Some(e) = blob {
        for y in 0..size {
            for x in 0..size {
                if e.contains(x, y) {
                    let v = (e.level + BLOB_SIGMA * rng.next_gaussian()).clamp(BLOB_LOW, BLOB_HIGH);
                    pixels[y * size + x] = round_to_u8(v);
                }
            }
        }
    }
    GrayImage::new(size, size, pixels).expect("square buffer")
}

/// `2 * n_per_class` square images, alternating healthy/tumor, drawn from one
/// stream seeded by `seed`. Generating more images extends the sequence
/// without changing its prefix.
pub fn generate_synthetic(seed: u64, n_per_class: usize, size: usize) -> Vec<(GrayImage, Label)> {
    assert!(n_per_class >= 1, "n_per_class must be at least 1");
    assert!(size >= 16, "synthetic images must be at least 16 pixels wide");
    let mut rng = Prng::new(seed);
    let mut out = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        out.push((render(&mut rng, size, None), Label::Healthy));
        let blob = Ellipse::random(&mut rng, size as f64);
        out.push((render(&mut rng, size, Some(&blob)), Label::Tumor));
    }
    out
}
