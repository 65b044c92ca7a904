use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary diagnosis label. `Tumor` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Healthy,
    Tumor,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Healthy, Label::Tumor];

    pub fn index(self) -> usize {
        match self {
            Label::Healthy => 0,
            Label::Tumor => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Tumor => "tumor",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(String),
    #[error("entry {index}: unknown {field} token {token:?}")]
    UnknownToken {
        index: usize,
        field: &'static str,
        token: String,
    },
    #[error("entry {index}: missing or non-string field {field:?}")]
    MissingField { index: usize, field: &'static str },
    #[error("duplicate path {0:?}")]
    DuplicatePath(PathBuf),
    #[error("train split is empty")]
    EmptyTrain,
    #[error("train split has no {0} examples")]
    MissingTrainLabel(Label),
}

/// Images per (label, split).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_healthy: usize,
    pub train_tumor: usize,
    pub test_healthy: usize,
    pub test_tumor: usize,
}

impl SplitCounts {
    pub fn train_total(&self) -> usize {
        self.train_healthy + self.train_tumor
    }

    pub fn test_total(&self) -> usize {
        self.test_healthy + self.test_tumor
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Validates path uniqueness and that training covers both labels.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(&e.path) {
                return Err(ManifestError::DuplicatePath(e.path.clone()));
            }
        }
        let manifest = Self { entries };
        let counts = manifest.counts();
        if counts.train_total() == 0 {
            return Err(ManifestError::EmptyTrain);
        }
        if counts.train_healthy == 0 {
            return Err(ManifestError::MissingTrainLabel(Label::Healthy));
        }
        if counts.train_tumor == 0 {
            return Err(ManifestError::MissingTrainLabel(Label::Tumor));
        }
        Ok(manifest)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for e in &self.entries {
            let slot = match (e.split, e.label) {
                (Split::Train, Label::Healthy) => &mut c.train_healthy,
                (Split::Train, Label::Tumor) => &mut c.train_tumor,
                (Split::Test, Label::Healthy) => &mut c.test_healthy,
                (Split::Test, Label::Tumor) => &mut c.test_tumor,
            };
            *slot += 1;
        }
        c
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest entries always serialize")
    }
}

fn string_field<'a>(
    obj: &'a serde_json::Map<String, serde_json::Value>,
    index: usize,
    field: &'static str,
) -> Result<&'a str, ManifestError> {
    obj.get(field)
        .and_then(|v| v.as_str())
        .ok_or(ManifestError::MissingField { index, field })
}

/// Parses `[{"path": ..., "label": "healthy"|"tumor", "split": "train"|"test"}, ...]`.
pub fn load_manifest(bytes: &[u8]) -> Result<DatasetManifest, ManifestError> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ManifestError::Json(e.to_string()))?;
    let items = value
        .as_array()
        .ok_or_else(|| ManifestError::Json("top level must be an array".into()))?;
    let mut entries = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| ManifestError::Json(format!("entry {index} is not an object")))?;
        let path = string_field(obj, index, "path")?;
        let label = match string_field(obj, index, "label")? {
            "healthy" => Label::Healthy,
            "tumor" => Label::Tumor,
            other => {
                return Err(ManifestError::UnknownToken {
                    index,
                    field: "label",
                    token: other.to_string(),
                })
            }
        };
        let split = match string_field(obj, index, "split")? {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(ManifestError::UnknownToken {
                    index,
                    field: "split",
                    token: other.to_string(),
                })
            }
        };
        entries.push(ManifestEntry {
            path: PathBuf::from(path),
            label,
            split,
        });
    }
    DatasetManifest::new(entries)
}
