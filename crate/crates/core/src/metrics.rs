//! Confusion matrices and the four diagnostic metrics, computed as exact
//! rationals and rounded only for display (half-up, two decimals in percent).

use std::collections::HashSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::imageio::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("duplicate method name {0:?}")]
    DuplicateMethod(String),
    #[error("comparison needs at least one report")]
    NoReports,
    #[error("csv: {0}")]
    Csv(String),
}

/// 2x2 table with tumor as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn errors(&self) -> u64 {
        self.fp + self.fn_
    }
}

pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (p, l) in preds.iter().zip(labels) {
        match (p, l) {
            (Label::Tumor, Label::Tumor) => cm.tp += 1,
            (Label::Tumor, Label::Healthy) => cm.fp += 1,
            (Label::Healthy, Label::Healthy) => cm.tn += 1,
            (Label::Healthy, Label::Tumor) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// A metric value: an exact fraction, or undefined when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Defined(Ratio<u64>),
    Undefined,
}

impl Metric {
    fn of(num: u64, den: u64) -> Self {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Defined(Ratio::new(num, den))
        }
    }

    pub fn ratio(&self) -> Option<Ratio<u64>> {
        match self {
            Metric::Defined(r) => Some(*r),
            Metric::Undefined => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.ratio().map(|r| *r.numer() as f64 / *r.denom() as f64)
    }

    /// Percent in hundredths (basis points), rounded half-up: 170/173 -> 9827.
    pub fn percent_bp(&self) -> Option<u32> {
        self.ratio().map(|r| {
            let num = u128::from(*r.numer());
            let den = u128::from(*r.denom());
            ((2 * num * 10_000 + den) / (2 * den)) as u32
        })
    }
}

pub(crate) fn format_bp(bp: Option<u32>) -> String {
    match bp {
        Some(bp) => format!("{}.{:02}", bp / 100, bp % 100),
        None => "undefined".to_string(),
    }
}

fn parse_bp(s: &str) -> Option<Option<u32>> {
    let s = s.trim();
    if s == "undefined" {
        return Some(None);
    }
    let (whole, frac) = s.split_once('.')?;
    if frac.len() != 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u32 = whole.parse().ok()?;
    let frac: u32 = frac.parse().ok()?;
    Some(Some(whole * 100 + frac))
}

impl fmt::Display for Metric {
    /// Percent with two decimals, e.g. `98.27`, or `undefined`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_bp(self.percent_bp()))
    }
}

#[derive(Serialize, Deserialize)]
struct MetricRepr {
    num: u64,
    den: u64,
    #[serde(default, skip_deserializing)]
    value: f64,
    #[serde(default, skip_deserializing)]
    percent: String,
}

/// JSON: `null` when undefined, else `{"num", "den", "value", "percent"}`.
impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.ratio() {
            None => s.serialize_none(),
            Some(r) => MetricRepr {
                num: *r.numer(),
                den: *r.denom(),
                value: self.value().unwrap_or_default(),
                percent: self.to_string(),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match Option::<MetricRepr>::deserialize(d)? {
            None => Metric::Undefined,
            Some(r) if r.den == 0 => return Err(serde::de::Error::custom("metric denominator is 0")),
            Some(r) => Metric::of(r.num, r.den),
        })
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Metric {
    Metric::of(cm.tp + cm.tn, cm.total())
}

pub fn sensitivity(cm: &ConfusionMatrix) -> Metric {
    Metric::of(cm.tp, cm.tp + cm.fn_)
}

pub fn specificity(cm: &ConfusionMatrix) -> Metric {
    Metric::of(cm.tn, cm.tn + cm.fp)
}

pub fn precision(cm: &ConfusionMatrix) -> Metric {
    Metric::of(cm.tp, cm.tp + cm.fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Metric,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub precision: Metric,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        Self {
            accuracy: accuracy(cm),
            sensitivity: sensitivity(cm),
            specificity: specificity(cm),
            precision: precision(cm),
        }
    }
}

mod bp_percent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bp: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
        match bp {
            Some(bp) => s.serialize_f64(f64::from(*bp) / 100.0),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
        let v = Option::<f64>::deserialize(d)?;
        match v {
            None => Ok(None),
            Some(p) if (0.0..=100.0).contains(&p) => Ok(Some((p * 100.0).round() as u32)),
            Some(p) => Err(serde::de::Error::custom(format!("percent {p} out of range"))),
        }
    }
}

/// One row of a comparison table; percents are held in hundredths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    #[serde(with = "bp_percent")]
    pub accuracy: Option<u32>,
    #[serde(with = "bp_percent")]
    pub specificity: Option<u32>,
    #[serde(with = "bp_percent")]
    pub sensitivity: Option<u32>,
    #[serde(with = "bp_percent")]
    pub precision: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const CSV_HEADER: [&str; 5] = ["method", "accuracy", "specificity", "sensitivity", "precision"];

/// Builds a table in input order. Method names must be unique.
pub fn compare(reports: &[(String, MetricsReport)]) -> Result<ComparisonTable, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoReports);
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(reports.len());
    for (name, r) in reports {
        if !seen.insert(name.as_str()) {
            return Err(MetricsError::DuplicateMethod(name.clone()));
        }
        rows.push(ComparisonRow {
            method: name.clone(),
            accuracy: r.accuracy.percent_bp(),
            specificity: r.specificity.percent_bp(),
            sensitivity: r.sensitivity.percent_bp(),
            precision: r.precision.percent_bp(),
        });
    }
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison table serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                format_bp(r.accuracy),
                format_bp(r.specificity),
                format_bp(r.sensitivity),
                format_bp(r.precision),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| MetricsError::Csv(e.to_string()))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(MetricsError::Csv(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| MetricsError::Csv(e.to_string()))?;
            let cell =
                |i: usize| parse_bp(&rec[i]).ok_or_else(|| MetricsError::Csv(format!("bad percent {:?}", &rec[i])));
            rows.push(ComparisonRow {
                method: rec[0].to_string(),
                accuracy: cell(1)?,
                specificity: cell(2)?,
                sensitivity: cell(3)?,
                precision: cell(4)?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Healthy as H, Tumor as T};

    #[test]
    fn perfect_predictions() {
        let cm = confusion(&[T, H, T, H], &[T, H, T, H]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(2, 0, 2, 0));
        assert_eq!(accuracy(&cm).ratio(), Some(Ratio::from_integer(1)));
    }

    #[test]
    fn all_false_positives() {
        let cm = confusion(&[T, T, T], &[H, H, H]).unwrap();
        assert_eq!(cm, ConfusionMatrix::new(0, 3, 0, 0));
        assert_eq!(sensitivity(&cm), Metric::Undefined);
        assert_eq!(precision(&cm).percent_bp(), Some(0));
        assert_eq!(specificity(&cm).to_string(), "0.00");
    }

    #[test]
    fn errors() {
        assert_eq!(
            confusion(&[T], &[]),
            Err(MetricsError::LengthMismatch { preds: 1, labels: 0 })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
        let r = MetricsReport::from_confusion(&ConfusionMatrix::new(1, 0, 1, 0));
        assert_eq!(
            compare(&[("a".into(), r), ("a".into(), r)]),
            Err(MetricsError::DuplicateMethod("a".into()))
        );
        assert_eq!(compare(&[]), Err(MetricsError::NoReports));
    }

    #[test]
    fn half_up_rounding() {
        // 1/8 = 12.5% exactly, 1/3 = 33.333..%, 2/3 = 66.666..%, 1/1600 = 0.0625%
        assert_eq!(Metric::of(1, 8).to_string(), "12.50");
        assert_eq!(Metric::of(1, 3).to_string(), "33.33");
        assert_eq!(Metric::of(2, 3).to_string(), "66.67");
        assert_eq!(Metric::of(1, 1600).to_string(), "0.06");
        assert_eq!(Metric::of(1, 80000).to_string(), "0.00");
        assert_eq!(Metric::of(1, 40000).to_string(), "0.00");
        assert_eq!(Metric::of(1, 20000).to_string(), "0.01");
        assert_eq!(Metric::of(u64::MAX, u64::MAX).to_string(), "100.00");
    }

    #[test]
    fn metric_json() {
        let cm = ConfusionMatrix::new(170, 3, 53, 0);
        let r = MetricsReport::from_confusion(&cm);
        let json = serde_json::to_value(r).unwrap();
        assert_eq!(json["precision"]["num"], 170);
        assert_eq!(json["precision"]["den"], 173);
        assert_eq!(json["precision"]["percent"], "98.27");
        let back: MetricsReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
        let undefined = MetricsReport::from_confusion(&ConfusionMatrix::new(0, 0, 3, 0));
        let json = serde_json::to_string(&undefined).unwrap();
        assert!(json.contains("\"sensitivity\":null"));
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), undefined);
        assert_eq!(
            serde_json::to_string(&cm).unwrap(),
            r#"{"tp":170,"fp":3,"tn":53,"fn":0}"#
        );
    }

    #[test]
    fn table_csv_and_json() {
        let reports = vec![
            (
                "CNN+SoftMax".to_string(),
                MetricsReport::from_confusion(&ConfusionMatrix::new(170, 3, 53, 0)),
            ),
            (
                "CNN+RBF".to_string(),
                MetricsReport::from_confusion(&ConfusionMatrix::new(0, 0, 10, 0)),
            ),
        ];
        let table = compare(&reports).unwrap();
        let csv = table.to_csv();
        assert_eq!(
            csv,
            "method,accuracy,specificity,sensitivity,precision\n\
             CNN+SoftMax,98.67,94.64,100.00,98.27\n\
             CNN+RBF,100.00,100.00,undefined,undefined\n"
        );
        assert_eq!(ComparisonTable::from_csv(&csv).unwrap(), table);
        let back: ComparisonTable = serde_json::from_str(&table.to_json()).unwrap();
        assert_eq!(back, table);
        assert!(table.to_json().contains("98.27"));
        assert!(ComparisonTable::from_csv("a,b\n1,2\n").is_err());
    }
}
