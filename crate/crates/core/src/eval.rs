//! Prediction, confusion matrices, metrics, and prediction-bias collapse
//! detection. The positive class is "Yes" throughout.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{forward, ModelParams};
use crate::semantic::PredictionProbs;
use crate::text::{tokenize, Example, Label};

/// Dominant-class fraction above which predictions count as collapsed.
pub const COLLAPSE_THRESHOLD: f64 = 0.95;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no predictions to evaluate")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probs: PredictionProbs,
}

/// Predictions in dataset order. Examples that cannot be tokenized are
/// skipped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub items: Vec<(usize, Prediction)>,
    pub unpredictable: usize,
}

impl Predictions {
    pub fn labels(&self) -> Vec<Label> {
        self.items.iter().map(|(_, p)| p.label).collect()
    }

    /// Gold labels of the predicted examples, aligned with [`Self::labels`].
    pub fn gold(&self, examples: &[Example]) -> Vec<Label> {
        self.items.iter().map(|&(i, _)| examples[i].label).collect()
    }
}

pub fn predict_dataset(model: &ModelParams, examples: &[Example]) -> Predictions {
    let mut items = Vec::with_capacity(examples.len());
    let mut unpredictable = 0;
    for (i, ex) in examples.iter().enumerate() {
        match tokenize(&ex.premise, &ex.hypothesis, model.config.max_seq_len) {
            Ok(tokens) => {
                let (_, probs) = forward(model, &tokens);
                items.push((
                    i,
                    Prediction {
                        label: probs.predicted(),
                        probs,
                    },
                ));
            }
            Err(_) => unpredictable += 1,
        }
    }
    Predictions { items, unpredictable }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn predicted_yes(&self) -> u64 {
        self.tp + self.fp
    }

    pub fn predicted_no(&self) -> u64 {
        self.tn + self.fn_
    }
}

pub fn compute_confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Yes, Label::Yes) => cm.tp += 1,
            (Label::No, Label::No) => cm.tn += 1,
            (Label::Yes, Label::No) => cm.fp += 1,
            (Label::No, Label::Yes) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Standard binary metrics; any zero denominator yields 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::Empty);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub yes_count: u64,
    pub no_count: u64,
    /// Fraction of predictions in the dominant class.
    pub bias_fraction: f64,
    pub collapsed: bool,
    pub dominant_class: Option<Label>,
}

/// Collapsed iff the dominant class fraction strictly exceeds `threshold`.
pub fn detect_collapse(predictions: &[Label], threshold: f64) -> Result<CollapseReport, EvalError> {
    let yes = predictions.iter().filter(|&&l| l == Label::Yes).count() as u64;
    let no = predictions.len() as u64 - yes;
    collapse_from_counts(yes, no, threshold)
}

pub fn collapse_from_counts(yes: u64, no: u64, threshold: f64) -> Result<CollapseReport, EvalError> {
    let total = yes + no;
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let dominant = yes.max(no);
    let bias_fraction = dominant as f64 / total as f64;
    let dominant_class = match yes.cmp(&no) {
        std::cmp::Ordering::Greater => Some(Label::Yes),
        std::cmp::Ordering::Less => Some(Label::No),
        std::cmp::Ordering::Equal => None,
    };
    Ok(CollapseReport {
        yes_count: yes,
        no_count: no,
        bias_fraction,
        // Integer form of dominant / total > threshold, exact at the boundary.
        collapsed: (dominant as f64) > threshold * total as f64 && bias_fraction > threshold,
        dominant_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: String,
    pub examples: usize,
    pub unpredictable: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub collapse: CollapseReport,
    /// Histogram of predicted P(Yes) in ten equal bins over [0, 1].
    pub p_yes_histogram: Vec<u64>,
}

impl SuiteResult {
    pub fn from_predictions(suite: &str, examples: &[Example], preds: &Predictions) -> Result<Self, EvalError> {
        let predicted = preds.labels();
        let confusion = compute_confusion(&predicted, &preds.gold(examples))?;
        let metrics = compute_metrics(&confusion)?;
        let collapse = detect_collapse(&predicted, COLLAPSE_THRESHOLD)?;
        let mut hist = vec![0u64; 10];
        for (_, p) in &preds.items {
            let bin = ((p.probs.p_yes * 10.0) as usize).min(9);
            hist[bin] += 1;
        }
        Ok(SuiteResult {
            suite: suite.to_string(),
            examples: examples.len(),
            unpredictable: preds.unpredictable,
            confusion,
            metrics,
            collapse,
            p_yes_histogram: hist,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_sha256: String,
    pub dataset_sha256: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub suites: Vec<SuiteResult>,
    /// Unweighted means over suites.
    pub aggregate: Metrics,
    pub metadata: RunMetadata,
}

/// Unweighted per-suite mean of each metric.
pub fn aggregate_metrics(per_suite: &[Metrics]) -> Result<Metrics, EvalError> {
    if per_suite.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = per_suite.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| per_suite.iter().map(f).sum::<f64>() / n;
    Ok(Metrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    })
}

impl EvalReport {
    pub fn new(suites: Vec<SuiteResult>, metadata: RunMetadata) -> Result<Self, EvalError> {
        let metrics: Vec<Metrics> = suites.iter().map(|s| s.metrics).collect();
        Ok(EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            aggregate: aggregate_metrics(&metrics)?,
            suites,
            metadata,
        })
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per suite, then an `aggregate` row with summed counts and mean metrics.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "suite",
            "tp",
            "tn",
            "fp",
            "fn",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "yes_count",
            "no_count",
            "collapsed",
        ])?;
        let mut sum = ConfusionMatrix::default();
        for s in &self.suites {
            let c = &s.confusion;
            sum.tp += c.tp;
            sum.tn += c.tn;
            sum.fp += c.fp;
            sum.fn_ += c.fn_;
            out.write_record(row(&s.suite, c, &s.metrics, &s.collapse))?;
        }
        let pooled = collapse_from_counts(sum.predicted_yes(), sum.predicted_no(), COLLAPSE_THRESHOLD)?;
        out.write_record(row("aggregate", &sum, &self.aggregate, &pooled))?;
        out.flush()?;
        Ok(())
    }
}

fn row(name: &str, c: &ConfusionMatrix, m: &Metrics, k: &CollapseReport) -> Vec<String> {
    vec![
        name.to_string(),
        c.tp.to_string(),
        c.tn.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        format!("{:.6}", m.accuracy),
        format!("{:.6}", m.precision),
        format!("{:.6}", m.recall),
        format!("{:.6}", m.f1),
        k.yes_count.to_string(),
        k.no_count.to_string(),
        k.collapsed.to_string(),
    ]
}
