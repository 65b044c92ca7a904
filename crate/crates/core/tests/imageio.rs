use btd_core::imageio::{
    generate_synthetic, load_manifest, load_pgm, read_pgm_file, resize_bilinear, save_pgm, to_tensor, write_pgm_file,
    GrayImage, Label,
};
use btd_core::rng::Prng;

fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = Prng::new(seed);
    GrayImage::new(w, h, (0..w * h).map(|_| rng.next_below(256) as u8).collect()).unwrap()
}

/// Direct per-pixel evaluation of the half-pixel-center bilinear formula.
fn oracle_resize(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<u8> {
    let mut out = vec![0u8; dw * dh];
    for dy in 0..dh {
        for dx in 0..dw {
            let sx = ((dx as f64 + 0.5) * (sw as f64 / dw as f64) - 0.5)
                .max(0.0)
                .min((sw - 1) as f64);
            let sy = ((dy as f64 + 0.5) * (sh as f64 / dh as f64) - 0.5)
                .max(0.0)
                .min((sh - 1) as f64);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = if x0 + 1 < sw { x0 + 1 } else { sw - 1 };
            let y1 = if y0 + 1 < sh { y0 + 1 } else { sh - 1 };
            let ax = sx - x0 as f64;
            let ay = sy - y0 as f64;
            let at = |x: usize, y: usize| src[y * sw + x] as f64;
            let upper = at(x0, y0) * (1.0 - ax) + at(x1, y0) * ax;
            let lower = at(x0, y1) * (1.0 - ax) + at(x1, y1) * ax;
            let v = upper * (1.0 - ay) + lower * ay;
            out[dy * dw + dx] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[test]
fn resize_512_to_227_matches_scalar_oracle() {
    let img = random_image(512, 512, 227);
    let out = resize_bilinear(&img, 227, 227);
    assert_eq!((out.width(), out.height()), (227, 227));
    assert_eq!(out.pixels(), oracle_resize(img.pixels(), 512, 512, 227, 227).as_slice());
}

#[test]
fn resize_assorted_shapes_match_oracle() {
    let mut rng = Prng::new(5);
    for case in 0..40 {
        let (sw, sh) = (1 + rng.next_below(40) as usize, 1 + rng.next_below(40) as usize);
        let (dw, dh) = (1 + rng.next_below(40) as usize, 1 + rng.next_below(40) as usize);
        let img = random_image(sw, sh, case);
        let out = resize_bilinear(&img, dw, dh);
        assert_eq!(
            out.pixels(),
            oracle_resize(img.pixels(), sw, sh, dw, dh).as_slice(),
            "case {case}"
        );
    }
}

#[test]
fn constant_image_stays_constant() {
    let img = GrayImage::filled(512, 512, 137).unwrap();
    assert!(resize_bilinear(&img, 227, 227).pixels().iter().all(|&p| p == 137));
}

#[test]
fn full_size_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.pgm");
    let img = random_image(512, 512, 1);
    write_pgm_file(&path, &img).unwrap();
    let back = read_pgm_file(&path).unwrap();
    assert_eq!((back.width(), back.height()), (512, 512));
    assert_eq!(back, img);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(save_pgm(&load_pgm(&bytes).unwrap()), bytes);
}

#[test]
fn tensor_values() {
    let t = to_tensor(&GrayImage::new(2, 2, vec![0, 51, 102, 255]).unwrap());
    assert_eq!(t.shape(), &[1, 2, 2]);
    assert_eq!(t.data(), &[0.0, 0.2, 0.4, 1.0]);
}

#[test]
fn synthetic_tumor_images_are_brighter() {
    let set = generate_synthetic(21, 100, 32);
    let mean = |label: Label| {
        let xs: Vec<f64> = set
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(i, _)| i.mean_intensity())
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    assert!(mean(Label::Tumor) > mean(Label::Healthy));
}

#[test]
fn manifest_with_published_split() {
    let mut entries = Vec::new();
    for (split, healthy, tumor) in [("train", 515, 1151), ("test", 56, 170)] {
        for (label, n) in [("healthy", healthy), ("tumor", tumor)] {
            for i in 0..n {
                entries.push(format!(
                    r#"{{"path":"{split}/{label}/{i}.pgm","label":"{label}","split":"{split}"}}"#
                ));
            }
        }
    }
    let json = format!("[{}]", entries.join(","));
    let counts = load_manifest(json.as_bytes()).unwrap().counts();
    assert_eq!((counts.train_total(), counts.test_total()), (1666, 226));
    assert_eq!((counts.test_healthy, counts.test_tumor), (56, 170));
}
