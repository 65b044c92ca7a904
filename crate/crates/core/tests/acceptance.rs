//! Acceptance criteria A1-A8. Each criterion is one test named `aN_*`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use num_rational::Ratio;

use btd_core::clustering::lloyd_1d;
use btd_core::heads::{train_dt, FeatureVector, HeadConfig, RbfModel, TrainedHead};
use btd_core::imageio::{generate_synthetic, load_pgm, save_pgm, GrayImage};
use btd_core::metrics::{compare, ComparisonTable, ConfusionMatrix, MetricsReport};
use btd_core::nn::{
    build_preset, forward, init_parameters, preset_grad_check, train, LayerSpec, NetworkSpec, Tensor, TrainConfig,
};
use btd_core::pipeline::{
    prepare_input, run_in_memory, ExperimentConfig, ExperimentOutput, MetricSnapshot, ModelArtifact, Preprocessing,
    SyntheticSource,
};
use btd_core::rng::{derive_seed, Prng};

/// Heavy criteria run one at a time so their runtime bounds measure their
/// own work on a single core.
fn exclusive() -> std::sync::MutexGuard<'static, ()> {
    static HEAVY: Mutex<()> = Mutex::new(());
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

// ---------------------------------------------------------------- A1

#[test]
fn a1_gradient_check_tiny_preset() {
    let _serial = exclusive();
    let start = Instant::now();
    for seed in 1..=5 {
        let report = preset_grad_check("tiny-32", seed).unwrap();
        assert_eq!(report.tolerance, 1e-4);
        assert!(report.layers.iter().all(|l| l.checked > 0), "seed {seed}: {report:?}");
        assert!(
            report.passed && report.max_rel_error() <= 1e-4,
            "seed {seed}: max relative error {:e}",
            report.max_rel_error()
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
}

// ---------------------------------------------------------------- A2

type Q = Ratio<i64>;

/// Sum of squared deviations of integer points from their group means.
fn group_inertia(groups: &[Vec<i64>]) -> Q {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let n = g.len() as i64;
            let s: i64 = g.iter().sum();
            let s2: i64 = g.iter().map(|x| x * x).sum();
            Q::from_integer(s2) - Q::new(s * s, n)
        })
        .sum()
}

/// Minimum inertia over every assignment of points to k non-empty groups.
fn exhaustive_optimum(points: &[i64], k: usize) -> Q {
    let n = points.len();
    let mut best: Option<Q> = None;
    let mut labels = vec![0usize; n];
    loop {
        let mut groups = vec![Vec::new(); k];
        for (p, &l) in points.iter().zip(&labels) {
            groups[l].push(*p);
        }
        if groups.iter().all(|g| !g.is_empty()) {
            let q = group_inertia(&groups);
            if best.is_none_or(|b| q < b) {
                best = Some(q);
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return best.expect("k <= distinct count admits a partition");
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

fn k_subsets(items: &[i64], k: usize) -> Vec<Vec<i64>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        for mut rest in k_subsets(&items[i + 1..], k - 1) {
            rest.insert(0, items[i]);
            out.push(rest);
        }
    }
    out
}

#[test]
fn a2_kmeans_matches_exhaustive_optimum() {
    let _serial = exclusive();
    let start = Instant::now();
    let mut rng = Prng::new(2024);
    for instance in 0..200 {
        let n = 1 + rng.next_below(10) as usize;
        let points: Vec<i64> = (0..n).map(|_| rng.next_below(21) as i64).collect();
        let mut distinct = points.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let k = 1 + rng.next_below(distinct.len().min(3) as u64) as usize;
        let optimum = exhaustive_optimum(&points, k);

        let values: Vec<f64> = points.iter().map(|&p| p as f64).collect();
        let mut best: Option<Q> = None;
        for init in k_subsets(&distinct, k) {
            let init: Vec<f64> = init.iter().map(|&c| c as f64).collect();
            let run = lloyd_1d(&values, &init, 1000, 0.0).unwrap();
            let mut groups = vec![Vec::new(); run.model.centers.len()];
            for &p in &points {
                groups[run.model.assign(p as f64)].push(p);
            }
            let q = group_inertia(&groups);
            let as_f64 = *q.numer() as f64 / *q.denom() as f64;
            assert!((run.model.inertia - as_f64).abs() <= 1e-9 * as_f64.max(1.0));
            assert!(q >= optimum, "instance {instance}: single run below the optimum");
            if best.is_none_or(|b| q < b) {
                best = Some(q);
            }
        }
        assert_eq!(best, Some(optimum), "instance {instance}: points {points:?}, k {k}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
}

// ---------------------------------------------------------------- A3

#[test]
fn a3_metrics_reconstruction_exact() {
    let baseline = MetricsReport::from_confusion(&ConfusionMatrix::new(170, 3, 53, 0));
    assert_eq!(baseline.sensitivity.ratio(), Some(Ratio::new(170, 170)));
    assert_eq!(baseline.specificity.ratio(), Some(Ratio::new(53, 56)));
    assert_eq!(baseline.precision.ratio(), Some(Ratio::new(170, 173)));
    assert_eq!(baseline.accuracy.ratio(), Some(Ratio::new(223, 226)));
    assert_eq!(baseline.sensitivity.to_string(), "100.00");
    assert_eq!(baseline.specificity.to_string(), "94.64");
    // printed tables show 98.26 and 98.77; the counts force these values
    assert_eq!(baseline.precision.to_string(), "98.27");
    assert_eq!(baseline.accuracy.to_string(), "98.67");

    let proposed = MetricsReport::from_confusion(&ConfusionMatrix::new(170, 2, 54, 0));
    assert_eq!(proposed.specificity.ratio(), Some(Ratio::new(54, 56)));
    assert_eq!(proposed.precision.ratio(), Some(Ratio::new(170, 172)));
    assert_eq!(proposed.accuracy.ratio(), Some(Ratio::new(224, 226)));
    // printed: 96.44 / 98.83 / 99.32
    assert_eq!(proposed.specificity.to_string(), "96.43");
    assert_eq!(proposed.precision.to_string(), "98.84");
    assert_eq!(proposed.accuracy.to_string(), "99.12");
}

// ---------------------------------------------------------------- A4

fn overfit_set() -> Vec<(Tensor, usize)> {
    generate_synthetic(4, 10, 64)
        .iter()
        .map(|(img, label)| {
            (
                prepare_input(img, &Preprocessing::None, 0, &[1, 32, 32]).unwrap(),
                label.index(),
            )
        })
        .collect()
}

fn overfit_run() -> (NetworkSpec, btd_core::nn::Parameters, btd_core::nn::TrainHistory) {
    let spec = build_preset("tiny-32", 2).unwrap();
    let mut params = init_parameters(&spec, derive_seed(0, "init")).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        seed: derive_seed(0, "train"),
        ..TrainConfig::default()
    };
    let history = train(&spec, &mut params, &overfit_set(), &cfg, |_| {}).unwrap();
    (spec, params, history)
}

#[test]
fn a4_overfit_twenty_images() {
    let _serial = exclusive();
    let start = Instant::now();
    let data = overfit_set();
    assert_eq!(data.len(), 20);
    let (spec, params, history) = overfit_run();
    let first_perfect = history.epochs.iter().position(|e| e.train_accuracy == 1.0);
    assert!(first_perfect.is_some(), "never reached 100% during training");
    let correct = data
        .iter()
        .filter(|(x, y)| forward(&spec, &params, x).unwrap().argmax() == *y)
        .count();
    assert_eq!(correct, 20);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
}

// ---------------------------------------------------------------- A5

fn a5_config(head: HeadConfig, preprocessing: Preprocessing) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(
        SyntheticSource {
            seed: 7,
            n_per_class: 130,
            size: 64,
            test_per_class: Some(30),
        },
        "unused",
    );
    cfg.head = head;
    cfg.preprocessing = preprocessing;
    cfg
}

/// A5 runs are shared with A6/A7; each configuration is computed once.
fn a5_run(head: HeadConfig, preprocessing: Preprocessing) -> (ExperimentOutput, Duration) {
    static CACHE: OnceLock<Mutex<HashMap<String, (ExperimentOutput, Duration)>>> = OnceLock::new();
    let cfg = a5_config(head, preprocessing);
    let mut cache = CACHE
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    cache
        .entry(cfg.to_json())
        .or_insert_with(|| {
            let start = Instant::now();
            let out = run_in_memory(&cfg, |_| {}).unwrap();
            (out, start.elapsed())
        })
        .clone()
}

fn test_accuracy(out: &ExperimentOutput) -> f64 {
    let m = &out.report.methods[0];
    assert_eq!(m.confusion.total(), 60);
    m.metrics.accuracy.value().unwrap()
}

#[test]
fn a5_desk_scale_three_heads() {
    let _serial = exclusive();
    let mut total = Duration::ZERO;
    for (head, floor) in [
        (HeadConfig::Softmax, 0.95),
        (HeadConfig::rbf_default(), 0.95),
        (HeadConfig::dt_default(), 0.85),
    ] {
        let (out, took) = a5_run(head, Preprocessing::None);
        total += took;
        assert_eq!(out.report.methods[0].name, head.method_name());
        let acc = test_accuracy(&out);
        assert!(acc >= floor, "{}: test accuracy {acc} < {floor}", head.method_name());
        assert!(out.report.is_consistent());
        let m = &out.report.methods[0].metrics;
        assert!([m.accuracy, m.sensitivity, m.specificity, m.precision]
            .iter()
            .all(|v| v.ratio().is_some()));
    }
    assert!(total < Duration::from_secs(600), "took {total:?}");
}

// ---------------------------------------------------------------- A6

#[test]
fn a6_repeat_runs_are_identical() {
    let _serial = exclusive();
    let (_, _, first) = overfit_run();
    let (_, _, second) = overfit_run();
    let bits = |h: &btd_core::nn::TrainHistory| -> Vec<(u64, u64)> {
        h.epochs
            .iter()
            .map(|e| (e.mean_loss.to_bits(), e.train_accuracy.to_bits()))
            .collect()
    };
    assert_eq!(bits(&first), bits(&second));

    let head = HeadConfig::rbf_default();
    let (cached, _) = a5_run(head, Preprocessing::None);
    let fresh = run_in_memory(&a5_config(head, Preprocessing::None), |_| {}).unwrap();
    assert_eq!(fresh.report.deterministic_json(), cached.report.deterministic_json());
    assert_eq!(fresh.model.to_bytes(), cached.model.to_bytes());
}

// ---------------------------------------------------------------- A7

#[test]
fn a7_baseline_vs_proposed_comparison() {
    let _serial = exclusive();
    let (baseline, _) = a5_run(HeadConfig::Softmax, Preprocessing::None);
    let (proposed, _) = a5_run(HeadConfig::Softmax, Preprocessing::cluster_default());
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("baseline.json");
    let b = dir.path().join("proposed.json");
    std::fs::write(&a, baseline.report.to_json()).unwrap();
    std::fs::write(&b, proposed.report.to_json()).unwrap();

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_btd"))
        .args(["report", "compare"])
        .arg(&a)
        .arg(&b)
        .arg("--csv")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("method,accuracy,specificity,sensitivity,precision\n"));
    let table = ComparisonTable::from_csv(&csv).unwrap();
    let names: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["CNN+SoftMax", "Clustering+CNN+SoftMax"]);
    let expected = compare(&[
        ("CNN+SoftMax".into(), baseline.report.methods[0].metrics),
        ("Clustering+CNN+SoftMax".into(), proposed.report.methods[0].metrics),
    ])
    .unwrap();
    assert_eq!(table, expected);
    // whether clustering helps is data dependent; reported, not asserted
    println!("A7 comparison:\n{csv}");
}

// ---------------------------------------------------------------- A8

fn random_image(rng: &mut Prng) -> GrayImage {
    let w = 1 + rng.next_below(48) as usize;
    let h = 1 + rng.next_below(48) as usize;
    let px = (0..w * h).map(|_| rng.next_below(256) as u8).collect();
    GrayImage::new(w, h, px).unwrap()
}

fn random_network(rng: &mut Prng) -> NetworkSpec {
    let side = 4 + rng.next_below(6) as usize;
    let mut layers = Vec::new();
    if rng.next_below(2) == 0 {
        layers.push(LayerSpec::conv(1 + rng.next_below(3) as usize, 3, 1, 1));
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::MaxPool { size: 2, stride: 2 });
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::FullyConnected {
        out_features: 1 + rng.next_below(6) as usize,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::FullyConnected { out_features: 2 });
    let spec = NetworkSpec {
        input_shape: vec![1, side, side],
        layers,
        num_classes: 2,
        preset_name: None,
    };
    spec.validate().unwrap();
    spec
}

fn random_artifact(rng: &mut Prng, case: u64) -> ModelArtifact {
    let network = random_network(rng);
    let mut params = init_parameters(&network, case).unwrap();
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.next_gaussian() * 10f64.powi(rng.next_below(9) as i32 - 4);
        }
    }
    let d = network.feature_width().unwrap();
    let head = match rng.next_below(3) {
        0 => TrainedHead::Softmax,
        1 => {
            let m = 1 + rng.next_below(4) as usize;
            TrainedHead::Rbf(RbfModel {
                centers: (0..m).map(|_| (0..d).map(|_| rng.next_gaussian()).collect()).collect(),
                widths: (0..m).map(|_| 0.1 + rng.next_f64()).collect(),
                output_weights: (0..=m)
                    .map(|_| vec![rng.next_gaussian(), rng.next_gaussian()])
                    .collect(),
                num_classes: 2,
                train_accuracy: rng.next_f64(),
            })
        }
        _ => {
            let n = 2 + rng.next_below(12) as usize;
            let feats: Vec<FeatureVector> = (0..n)
                .map(|_| FeatureVector((0..d).map(|_| rng.next_gaussian()).collect()))
                .collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.next_below(2) as usize).collect();
            TrainedHead::Dt(train_dt(&feats, &labels, 1 + rng.next_below(5) as usize, 2).unwrap())
        }
    };
    let preprocessing = if rng.next_below(2) == 0 {
        Preprocessing::None
    } else {
        Preprocessing::Cluster {
            k: 1 + rng.next_below(8) as usize,
            max_iter: 1 + rng.next_below(200) as usize,
            tol: rng.next_f64() * 1e-3,
        }
    };
    let metrics = (rng.next_below(2) == 0).then(|| {
        let cm = ConfusionMatrix::new(
            rng.next_below(50),
            rng.next_below(5),
            rng.next_below(50),
            rng.next_below(5),
        );
        MetricSnapshot {
            method: "CNN+SoftMax".into(),
            confusion: cm,
            metrics: MetricsReport::from_confusion(&cm),
        }
    });
    ModelArtifact {
        network,
        params,
        preprocessing,
        head,
        seed: rng.next_u64(),
        metrics,
    }
}

#[test]
fn a8_pgm_and_model_round_trips() {
    let mut rng = Prng::new(88);
    for case in 0..100 {
        let img = random_image(&mut rng);
        let bytes = save_pgm(&img);
        let back = load_pgm(&bytes).unwrap();
        assert_eq!(back, img, "pgm case {case}");
        assert_eq!(save_pgm(&back), bytes);
        let commented = [
            format!("P5\n# case {case}\n{} {}\n# max\n255\n", img.width(), img.height()).into_bytes(),
            img.pixels().to_vec(),
        ]
        .concat();
        assert_eq!(load_pgm(&commented).unwrap(), img);
    }

    let dir = tempfile::tempdir().unwrap();
    for case in 0..100 {
        let artifact = random_artifact(&mut rng, case);
        let bytes = artifact.to_bytes();
        let path = dir.path().join(format!("m{case}.btdm"));
        artifact.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back, artifact, "model case {case}");
        assert_eq!(back.to_bytes(), bytes);
        for (a, b) in artifact.params.tensors().zip(back.params.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let img = random_image(&mut rng);
        assert_eq!(back.predict_image(&img).unwrap(), artifact.predict_image(&img).unwrap());
    }
}
