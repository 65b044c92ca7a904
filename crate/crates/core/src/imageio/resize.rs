use super::{round_to_u8, GrayImage};

/// Source sample positions and blend weights for one axis.
///
/// Half-pixel-centre convention: `src = (dst + 0.5) * (src_len / dst_len) - 0.5`,
/// clamped to `[0, src_len - 1]`.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src_len - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resampling with half-up rounding back to 8 bits.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> GrayImage {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be positive");
    let xs = axis_taps(img.width(), out_w);
    let ys = axis_taps(img.height(), out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p = |x, y| f64::from(img.get(x, y));
            let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
            let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
            out.push(round_to_u8(top * (1.0 - fy) + bottom * fy));
        }
    }
    GrayImage::new(out_w, out_h, out).expect("output buffer sized from requested dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use proptest::prelude::*;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = Prng::new(seed);
        GrayImage::new(w, h, (0..w * h).map(|_| rng.next_below(256) as u8).collect()).unwrap()
    }

    #[test]
    fn identity_resize() {
        let img = random_image(17, 9, 1);
        assert_eq!(resize_bilinear(&img, 17, 9), img);
    }

    #[test]
    fn upsample_two_pixels() {
        // 2x1 -> 4x1: source coords -0.25(->0), 0.25, 0.75, 1.25(->1)
        let img = GrayImage::new(2, 1, vec![0, 100]).unwrap();
        assert_eq!(resize_bilinear(&img, 4, 1).pixels(), &[0, 25, 75, 100]);
    }

    proptest! {
        #[test]
        fn constant_stays_constant(v in any::<u8>(), w in 1usize..30, h in 1usize..30,
                                   ow in 1usize..50, oh in 1usize..50) {
            let img = GrayImage::filled(w, h, v).unwrap();
            let out = resize_bilinear(&img, ow, oh);
            prop_assert_eq!((out.width(), out.height()), (ow, oh));
            prop_assert!(out.pixels().iter().all(|&p| p == v));
        }
    }
}
