use btd_core::heads::extract_features;
use btd_core::nn::{build_preset, forward, init_parameters, LayerSpec, Tensor};
use btd_core::rng::Prng;

#[test]
fn alexnet_forward_shapes() {
    let spec = build_preset("alexnet-227", 2).unwrap();
    let shapes = spec.layer_shapes().unwrap();
    let flatten = spec
        .layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Flatten))
        .unwrap();
    assert_eq!(shapes[flatten], vec![256, 6, 6]);
    assert_eq!(spec.feature_width().unwrap(), 4096);

    let params = init_parameters(&spec, 1).unwrap();
    let mut rng = Prng::new(2);
    let x = Tensor::from_parts(vec![1, 227, 227], (0..227 * 227).map(|_| rng.next_f64()).collect());
    let logits = forward(&spec, &params, &x).unwrap();
    assert_eq!(logits.shape(), &[2]);
    assert!(logits.is_finite());
    let features = extract_features(&spec, &params, &x).unwrap();
    assert_eq!(features.dim(), 4096);
}
