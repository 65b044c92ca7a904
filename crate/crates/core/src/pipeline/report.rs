//! Experiment reports and side-by-side comparison.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::metrics::{compare, ComparisonTable, ConfusionMatrix, MetricsReport};
use crate::nn::EpochRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// Identifiers of misclassified test items, in dataset order.
    pub misclassified: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Echo of what produced the report: the experiment config for runs,
    /// model and manifest paths for evaluations.
    pub config: serde_json::Value,
    pub methods: Vec<MethodResult>,
    pub history: Vec<EpochRecord>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with `timings_ms` emptied; a pure function of the config.
    pub fn deterministic_json(&self) -> String {
        Report {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
        .to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Report(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text).map_err(|e| PipelineError::Report(format!("{}: {e}", path.display())))
    }

    /// Every embedded metric equals the one recomputed from its confusion counts.
    pub fn is_consistent(&self) -> bool {
        self.methods
            .iter()
            .all(|m| MetricsReport::from_confusion(&m.confusion) == m.metrics)
    }
}

/// One table row per method across `reports`, in order, with metrics
/// recomputed from the confusion counts.
pub fn compare_reports(reports: &[Report]) -> Result<ComparisonTable, PipelineError> {
    let rows: Vec<(String, MetricsReport)> = reports
        .iter()
        .flat_map(|r| &r.methods)
        .map(|m| (m.name.clone(), MetricsReport::from_confusion(&m.confusion)))
        .collect();
    Ok(compare(&rows)?)
}
