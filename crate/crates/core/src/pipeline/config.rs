//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::clustering::{DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::heads::HeadConfig;
use crate::nn::{build_preset, TrainConfig};

/// Synthetic corpus: `n_per_class` images of each label, of which the last
/// `test_per_class` of each label form the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub seed: u64,
    pub n_per_class: usize,
    pub size: usize,
    /// Defaults to a fifth of `n_per_class` (at least one).
    #[serde(default)]
    pub test_per_class: Option<usize>,
}

impl SyntheticSource {
    pub fn test_count(&self) -> usize {
        self.test_per_class.unwrap_or((self.n_per_class / 5).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preprocessing {
    #[default]
    None,
    /// Per-image intensity k-means followed by quantization.
    Cluster {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Preprocessing {
    pub fn cluster_default() -> Self {
        Preprocessing::Cluster {
            k: DEFAULT_K,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

/// SGD settings; the shuffle seed is derived from the global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            epochs: d.epochs,
        }
    }
}

impl TrainSettings {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
        }
    }
}

fn default_preset() -> String {
    "tiny-32".to_string()
}
fn default_head() -> HeadConfig {
    HeadConfig::Softmax
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSource>,
    #[serde(default)]
    pub preprocessing: Preprocessing,
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_head")]
    pub head: HeadConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A synthetic-data config with every other field at its default.
    pub fn synthetic(source: SyntheticSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            name: None,
            seed: 0,
            manifest: None,
            synthetic: Some(source),
            preprocessing: Preprocessing::None,
            preset: default_preset(),
            train: TrainSettings::default(),
            head: HeadConfig::Softmax,
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `manifest` or `output_dir` is taken
    /// relative to the config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.manifest {
            cfg.manifest = Some(base.join(m));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (&self.manifest, &self.synthetic) {
            (Some(_), Some(_)) => return bad("give either `manifest` or `synthetic`, not both".into()),
            (None, None) => return bad("a data source (`manifest` or `synthetic`) is required".into()),
            (None, Some(s)) => {
                if s.n_per_class < 2 || s.size < 16 {
                    return bad("synthetic data needs n_per_class >= 2 and size >= 16".into());
                }
                if s.test_count() == 0 || s.test_count() >= s.n_per_class {
                    return bad(format!(
                        "test_per_class must lie in 1..{} for n_per_class {}",
                        s.n_per_class, s.n_per_class
                    ));
                }
            }
            (Some(_), None) => {}
        }
        if let Preprocessing::Cluster { k, max_iter, tol } = self.preprocessing {
            if k == 0 || max_iter == 0 || !(tol >= 0.0 && tol.is_finite()) {
                return bad("cluster preprocessing needs k >= 1, max_iter >= 1 and a finite tol >= 0".into());
            }
        }
        build_preset(&self.preset, 2).map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train
            .with_seed(0)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        match self.head {
            HeadConfig::Rbf { k_per_class, ridge } if k_per_class == 0 || ridge.is_nan() || ridge < 0.0 => {
                bad("rbf head needs k_per_class >= 1 and ridge >= 0".into())
            }
            HeadConfig::Dt { min_samples_split, .. } if min_samples_split < 2 => {
                bad("dt head needs min_samples_split >= 2".into())
            }
            _ => Ok(()),
        }
    }

    /// Table label: the head's method name, prefixed with `Clustering+` when
    /// cluster preprocessing is on.
    pub fn method_name(&self) -> String {
        match self.preprocessing {
            Preprocessing::None => self.head.method_name().to_string(),
            Preprocessing::Cluster { .. } => format!("Clustering+{}", self.head.method_name()),
        }
    }
}
