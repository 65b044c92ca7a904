//! Stage functions and the end-to-end experiment.

use std::collections::BTreeMap;
use std::time::Instant;

use super::artifact::{MetricSnapshot, ModelArtifact};
use super::config::ExperimentConfig;
use super::data::{load_dataset, prepare_all, Sample};
use super::report::{MethodResult, Report};
use super::PipelineError;
use crate::heads::{extract_features, FeatureVector, HeadConfig, TrainedHead};
use crate::imageio::Label;
use crate::metrics::{confusion, MetricsReport};
use crate::nn::{build_preset, init_parameters, train, EpochRecord, NetworkSpec, Parameters, Tensor, TrainHistory};
use crate::rng::derive_seed;

pub const REPORT_FILE: &str = "report.json";
pub const MODEL_FILE: &str = "model.btdm";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCnn {
    pub network: NetworkSpec,
    pub params: Parameters,
    pub history: TrainHistory,
}

/// Initializes the configured preset from the `init` stage seed and trains
/// it with the `train` stage seed.
pub fn train_cnn(
    cfg: &ExperimentConfig,
    data: &[(Tensor, usize)],
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedCnn, PipelineError> {
    let network = build_preset(&cfg.preset, 2).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut params = init_parameters(&network, derive_seed(cfg.seed, "init")).map_err(PipelineError::Train)?;
    let tc = cfg.train.with_seed(derive_seed(cfg.seed, "train"));
    let history = train(&network, &mut params, data, &tc, on_epoch).map_err(PipelineError::Train)?;
    Ok(TrainedCnn {
        network,
        params,
        history,
    })
}

/// Fits `head` on penultimate features of `data`, seeded by the `head` stage.
pub fn fit_head(
    head: &HeadConfig,
    network: &NetworkSpec,
    params: &Parameters,
    data: &[(Tensor, usize)],
    global_seed: u64,
) -> Result<TrainedHead, PipelineError> {
    if matches!(head, HeadConfig::Softmax) {
        return Ok(TrainedHead::Softmax);
    }
    let features: Vec<FeatureVector> = data
        .iter()
        .map(|(x, _)| extract_features(network, params, x))
        .collect::<Result<_, _>>()
        .map_err(PipelineError::Head)?;
    let labels: Vec<usize> = data.iter().map(|(_, l)| *l).collect();
    TrainedHead::fit(head, &features, &labels, derive_seed(global_seed, "head")).map_err(PipelineError::Head)
}

/// Classifies every sample with `model` and tallies the confusion matrix.
pub fn evaluate(model: &ModelArtifact, samples: &[Sample], method: &str) -> Result<MethodResult, PipelineError> {
    let prepared = prepare_all(samples, &model.preprocessing, model.seed, &model.network.input_shape)?;
    let mut preds = Vec::with_capacity(samples.len());
    let mut misclassified = Vec::new();
    for (s, (x, _)) in samples.iter().zip(&prepared) {
        let (class, _) = model.classify(x).map_err(PipelineError::Head)?;
        let pred = Label::from_index(class)
            .ok_or_else(|| PipelineError::Config(format!("class {class} has no diagnostic label")))?;
        if pred != s.label {
            misclassified.push(s.id.clone());
        }
        preds.push(pred);
    }
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let cm = confusion(&preds, &labels)?;
    Ok(MethodResult {
        name: method.to_string(),
        confusion: cm,
        metrics: MetricsReport::from_confusion(&cm),
        misclassified,
    })
}

fn millis(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub model: ModelArtifact,
}

/// Runs every stage without touching the file system.
pub fn run_in_memory(
    cfg: &ExperimentConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<ExperimentOutput, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut timings = BTreeMap::new();

    let t = Instant::now();
    let data = load_dataset(cfg)?;
    if data.test.is_empty() {
        return Err(PipelineError::Config("the test split is empty".into()));
    }
    let shape = build_preset(&cfg.preset, 2)
        .map_err(|e| PipelineError::Config(e.to_string()))?
        .input_shape;
    let train_set = prepare_all(&data.train, &cfg.preprocessing, cfg.seed, &shape)?;
    timings.insert("load_preprocess".to_string(), millis(t));

    let t = Instant::now();
    let cnn = train_cnn(cfg, &train_set, on_epoch)?;
    timings.insert("train".to_string(), millis(t));

    let t = Instant::now();
    let head = fit_head(&cfg.head, &cnn.network, &cnn.params, &train_set, cfg.seed)?;
    timings.insert("head".to_string(), millis(t));

    let t = Instant::now();
    let mut model = ModelArtifact {
        network: cnn.network,
        params: cnn.params,
        preprocessing: cfg.preprocessing,
        head,
        seed: cfg.seed,
        metrics: None,
    };
    let result = evaluate(&model, &data.test, &cfg.method_name())?;
    timings.insert("evaluate".to_string(), millis(t));
    model.metrics = Some(MetricSnapshot {
        method: result.name.clone(),
        confusion: result.confusion,
        metrics: result.metrics,
    });
    timings.insert("total".to_string(), millis(start));

    Ok(ExperimentOutput {
        report: Report {
            config: serde_json::to_value(cfg).expect("config serializes"),
            methods: vec![result],
            history: cnn.history.epochs,
            timings_ms: timings,
        },
        model,
    })
}

/// Runs the experiment and writes `report.json` and `model.btdm` into the
/// configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<Report, PipelineError> {
    let out = run_in_memory(cfg, on_epoch)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    out.model.save(&dir.join(MODEL_FILE))?;
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, out.report.to_json()).map_err(|e| PipelineError::io(&path, e))?;
    Ok(out.report)
}
