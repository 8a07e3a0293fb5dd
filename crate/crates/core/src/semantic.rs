//! Graph-consistency scoring, the semantic loss term, total-loss composition
//! and the linear lambda schedule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::oracle_answer;
use crate::graph::GraphError;
use crate::text::{parse_hypothesis, parse_premise_graph, Example, Label, QueryKind, TextError};

/// Added inside the logarithm of the semantic loss.
pub const SEMANTIC_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("semantic loss of an empty batch is undefined")]
    EmptyBatch,
    #[error("non-finite loss input: {0}")]
    NonFinite(String),
    #[error("invalid probabilities ({0}, {1})")]
    BadProbs(f64, f64),
    #[error("invalid schedule: {0}")]
    BadSchedule(String),
}

/// Why a sample has no consistency score.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyUnavailable {
    #[error(transparent)]
    Parse(#[from] TextError),
    #[error(transparent)]
    Oracle(#[from] GraphError),
}

/// Softmax output of the two-logit scorer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionProbs {
    pub p_yes: f64,
    pub p_no: f64,
}

impl PredictionProbs {
    pub fn new(p_yes: f64, p_no: f64) -> Result<Self, LossError> {
        let ok = (0.0..=1.0).contains(&p_yes) && (0.0..=1.0).contains(&p_no) && (p_yes + p_no - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(LossError::BadProbs(p_yes, p_no));
        }
        Ok(PredictionProbs { p_yes, p_no })
    }

    /// Numerically stable two-way softmax of `[yes, no]` logits.
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let m = logits[0].max(logits[1]);
        let ey = (logits[0] - m).exp();
        let en = (logits[1] - m).exp();
        let s = ey + en;
        PredictionProbs {
            p_yes: ey / s,
            p_no: en / s,
        }
    }

    pub fn of(&self, label: Label) -> f64 {
        match label {
            Label::Yes => self.p_yes,
            Label::No => self.p_no,
        }
    }

    /// Argmax with ties going to No.
    pub fn predicted(&self) -> Label {
        if self.p_yes > self.p_no {
            Label::Yes
        } else {
            Label::No
        }
    }
}

/// Linear ramp of the semantic weight from `lambda_start` to `lambda_end` over `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub total_steps: u64,
}

impl LambdaSchedule {
    pub const DEFAULT_START: f64 = 0.05;
    pub const DEFAULT_END: f64 = 0.30;

    pub fn new(lambda_start: f64, lambda_end: f64, total_steps: u64) -> Result<Self, LossError> {
        if !(lambda_start.is_finite() && lambda_end.is_finite()) || lambda_start < 0.0 || lambda_start > lambda_end {
            return Err(LossError::BadSchedule(format!(
                "need 0 <= start <= end, got {lambda_start} -> {lambda_end}"
            )));
        }
        if total_steps == 0 {
            return Err(LossError::BadSchedule("total steps must be positive".into()));
        }
        Ok(LambdaSchedule {
            lambda_start,
            lambda_end,
            total_steps,
        })
    }

    pub fn default_ramp(total_steps: u64) -> Self {
        LambdaSchedule::new(Self::DEFAULT_START, Self::DEFAULT_END, total_steps).expect("valid constants")
    }

    /// Constant weight.
    pub fn constant(lambda: f64, total_steps: u64) -> Result<Self, LossError> {
        LambdaSchedule::new(lambda, lambda, total_steps)
    }
}

/// Value of the schedule at step `t`, plus whether `t` had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaValue {
    pub lambda: f64,
    pub clamped: bool,
}

pub fn lambda_at(t: i64, schedule: &LambdaSchedule) -> LambdaValue {
    let total = schedule.total_steps as i64;
    let clamped_t = t.clamp(0, total);
    let lambda = if clamped_t == total {
        schedule.lambda_end
    } else {
        schedule.lambda_start + (clamped_t as f64 / total as f64) * (schedule.lambda_end - schedule.lambda_start)
    };
    LambdaValue {
        lambda,
        clamped: clamped_t != t,
    }
}

/// Which answer a d-separation hypothesis is consistent with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DsepAlignment {
    /// Yes means "d-separated", matching the rendered question and the dataset labels.
    #[default]
    Oracle,
    /// Yes means "not d-separated". Contradicts the labels; kept for comparison runs.
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyScore {
    pub c: f64,
    /// The answer the graph entails.
    pub truth: bool,
}

/// Graph-entailed answer of an example, recomputed from its text.
pub fn entailed_answer(example: &Example, alignment: DsepAlignment) -> Result<bool, ConsistencyUnavailable> {
    let g = parse_premise_graph(&example.premise)?;
    let q = parse_hypothesis(&example.hypothesis)?;
    let holds = oracle_answer(&g, &q)?;
    Ok(match (q.kind(), alignment) {
        (QueryKind::DSeparation, DsepAlignment::Inverted) => !holds,
        _ => holds,
    })
}

/// Probability mass the model puts on the entailed answer.
pub fn consistency_for(truth: bool, probs: &PredictionProbs) -> ConsistencyScore {
    ConsistencyScore {
        c: if truth { probs.p_yes } else { probs.p_no },
        truth,
    }
}

pub fn consistency(
    example: &Example,
    probs: &PredictionProbs,
    alignment: DsepAlignment,
) -> Result<ConsistencyScore, ConsistencyUnavailable> {
    Ok(consistency_for(entailed_answer(example, alignment)?, probs))
}

/// Mean of `-ln(c + eps)` over the batch.
pub fn semantic_loss_batch(scores: &[ConsistencyScore]) -> Result<f64, LossError> {
    if scores.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let sum: f64 = scores.iter().map(|s| -(s.c + SEMANTIC_EPS).ln()).sum();
    Ok(sum / scores.len() as f64)
}

pub fn total_loss(ce: f64, sem: f64, lam: f64) -> Result<f64, LossError> {
    if !(ce.is_finite() && sem.is_finite() && lam.is_finite()) {
        return Err(LossError::NonFinite(format!("ce={ce} sem={sem} lambda={lam}")));
    }
    if lam < 0.0 {
        return Err(LossError::NonFinite(format!("negative lambda {lam}")));
    }
    Ok(ce + lam * sem)
}

/// Cross-entropy from logits via log-sum-exp, capped at `-ln(eps)`.
pub fn cross_entropy_logits(logits: [f64; 2], label: Label) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    (lse - logits[label.index()]).min(-SEMANTIC_EPS.ln())
}

/// Cross-entropy of already-normalized probabilities, with the same cap.
pub fn cross_entropy(probs: &PredictionProbs, label: Label) -> f64 {
    -probs.of(label).max(SEMANTIC_EPS).ln()
}

/// Per-sample loss and its gradient with respect to the `[yes, no]` logits.
///
/// `sem_weight` is the factor multiplying this sample's `-ln(c + eps)` term
/// (lambda divided by the number of scored samples in the batch); `ce_weight`
/// likewise for the cross-entropy term.
pub fn sample_loss_and_grad(
    logits: [f64; 2],
    label: Label,
    truth: Option<bool>,
    ce_weight: f64,
    sem_weight: f64,
) -> (f64, f64, [f64; 2]) {
    let probs = PredictionProbs::from_logits(logits);
    let p = [probs.p_yes, probs.p_no];
    let ce = cross_entropy_logits(logits, label);
    let mut grad = [0.0; 2];
    if ce < -SEMANTIC_EPS.ln() {
        for (j, g) in grad.iter_mut().enumerate() {
            let onehot = if j == label.index() { 1.0 } else { 0.0 };
            *g += ce_weight * (p[j] - onehot);
        }
    }
    let mut sem = 0.0;
    if let Some(truth) = truth {
        let k = if truth { 0 } else { 1 };
        let c = p[k];
        sem = -(c + SEMANTIC_EPS).ln();
        // d/dz_j [-ln(p_k + eps)] = -p_k (delta_kj - p_j) / (p_k + eps)
        for (j, g) in grad.iter_mut().enumerate() {
            let delta = if j == k { 1.0 } else { 0.0 };
            *g += sem_weight * (-c * (delta - p[j]) / (c + SEMANTIC_EPS));
        }
    }
    (ce, sem, grad)
}
