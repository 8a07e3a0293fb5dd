//! Mini-batch training of the classifier with cross-entropy plus a scheduled
//! semantic-loss term, optimized with AdamW and linear learning-rate warmup.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{detect_collapse, predict_dataset, CollapseReport};
use crate::model::{backward, forward_cached, init_model, ModelConfig, ModelError, ModelParams};
use crate::semantic::{entailed_answer, lambda_at, sample_loss_and_grad, DsepAlignment, LambdaSchedule, LossError};
use crate::text::{tokenize, Example, Label, TextError, TokenSequence};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("example {index}: {source}")]
    Tokenize { index: usize, source: TextError },
    #[error("non-finite loss at step {}: ce={} semantic={} lambda={}", .0.step, .0.ce, .0.semantic, .0.lambda)]
    NonFinite(StepRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam moments with decoupled weight decay. Biases are not decayed.
pub struct AdamW {
    config: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, shape: ModelConfig) -> Self {
        AdamW {
            config,
            m: ModelParams::zeros(shape),
            v: ModelParams::zeros(shape),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update at learning rate `lr` (already warmup-scaled).
    pub fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (i, (((p, g), m), v)) in tensors.enumerate() {
            let decay = if ModelParams::is_bias(i) { 0.0 } else { weight_decay };
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * (m_hat / (v_hat.sqrt() + epsilon) + decay * p[k]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub warmup_steps: u64,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub semantic_enabled: bool,
    pub dsep_alignment: DsepAlignment,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 8,
            optimizer: AdamWConfig::default(),
            warmup_steps: 100,
            lambda_start: LambdaSchedule::DEFAULT_START,
            lambda_end: LambdaSchedule::DEFAULT_END,
            semantic_enabled: true,
            dsep_alignment: DsepAlignment::Oracle,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Hyperparameters used for the 270M-parameter fine-tune; the learning
    /// rate is far too small for this classifier.
    pub fn reference_preset() -> Self {
        TrainConfig {
            optimizer: AdamWConfig {
                learning_rate: 2e-5,
                ..AdamWConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(o.weight_decay >= 0.0 && o.epsilon > 0.0) {
            return bad("weight decay must be non-negative and epsilon positive");
        }
        LambdaSchedule::new(self.lambda_start, self.lambda_end, 1)?;
        self.model.validate()?;
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// Schedule spanning the run so that the first step logs `lambda_start`
    /// and the last logs `lambda_end`.
    pub fn schedule(&self, total_steps: u64) -> LambdaSchedule {
        LambdaSchedule::new(self.lambda_start, self.lambda_end, total_steps.saturating_sub(1).max(1))
            .expect("validated")
    }

    pub fn learning_rate_at(&self, step: u64) -> f64 {
        let lr = self.optimizer.learning_rate;
        if self.warmup_steps == 0 {
            lr
        } else {
            lr * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub ce: f64,
    pub semantic: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub probe: CollapseReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub parse_fallbacks: u64,
    pub truncated_examples: usize,
    pub deterministic: bool,
}

/// Summary written next to the per-step CSV.
#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary<'a> {
    pub config: &'a TrainConfig,
    pub examples: usize,
    pub total_steps: usize,
    pub final_ce: Option<f64>,
    pub final_total: Option<f64>,
    pub lambda_first: Option<f64>,
    pub lambda_last: Option<f64>,
    pub parse_fallbacks: u64,
    pub truncated_examples: usize,
    pub deterministic: bool,
    pub epochs: &'a [EpochRecord],
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.steps {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary<'a>(&'a self, config: &'a TrainConfig, examples: usize) -> TrainSummary<'a> {
        TrainSummary {
            config,
            examples,
            total_steps: self.steps.len(),
            final_ce: self.steps.last().map(|s| s.ce),
            final_total: self.steps.last().map(|s| s.total),
            lambda_first: self.steps.first().map(|s| s.lambda),
            lambda_last: self.steps.last().map(|s| s.lambda),
            parse_fallbacks: self.parse_fallbacks,
            truncated_examples: self.truncated_examples,
            deterministic: self.deterministic,
            epochs: &self.epochs,
        }
    }
}

/// A tokenized example with its graph-entailed answer, if recoverable.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tokens: TokenSequence,
    pub label: Label,
    pub truth: Option<bool>,
}

pub fn prepare(
    examples: &[Example],
    max_seq_len: usize,
    alignment: DsepAlignment,
) -> Result<Vec<Prepared>, TrainError> {
    examples
        .iter()
        .enumerate()
        .map(|(index, ex)| {
            let tokens = tokenize(&ex.premise, &ex.hypothesis, max_seq_len)
                .map_err(|source| TrainError::Tokenize { index, source })?;
            Ok(Prepared {
                tokens,
                label: ex.label,
                truth: entailed_answer(ex, alignment).ok(),
            })
        })
        .collect()
}

/// Loss terms for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub ce: f64,
    pub semantic: f64,
    pub total: f64,
    pub fallbacks: usize,
}

/// Mean cross-entropy plus `lambda` times the mean semantic loss over the
/// samples that have a consistency score. With `semantic` off, or no scored
/// sample, the second term is absent.
pub fn batch_loss_and_grads(
    model: &ModelParams,
    batch: &[&Prepared],
    lambda: f64,
    semantic: bool,
    grads: Option<&mut ModelParams>,
) -> BatchLoss {
    let n = batch.len() as f64;
    let scored = if semantic {
        batch.iter().filter(|p| p.truth.is_some()).count()
    } else {
        0
    };
    let sem_weight = if scored > 0 { lambda / scored as f64 } else { 0.0 };
    let mut ce_sum = 0.0;
    let mut sem_sum = 0.0;
    let mut grads = grads;
    for p in batch {
        let truth = if semantic { p.truth } else { None };
        let cache = forward_cached(model, &p.tokens);
        let (ce, sem, dlogits) = sample_loss_and_grad(cache.logits, p.label, truth, 1.0 / n, sem_weight);
        ce_sum += ce;
        sem_sum += sem;
        if let Some(g) = grads.as_deref_mut() {
            backward(model, &p.tokens, &cache, dlogits, g);
        }
    }
    let ce = ce_sum / n;
    let sem = if scored > 0 { sem_sum / scored as f64 } else { 0.0 };
    BatchLoss {
        ce,
        semantic: sem,
        total: ce + lambda * sem,
        fallbacks: if semantic { batch.len() - scored } else { 0 },
    }
}

/// Trains from a seeded initialization. `probe`, when given, is scored
/// before training and after each epoch.
pub fn train(
    dataset: &[Example],
    config: &TrainConfig,
    probe: Option<&[Example]>,
) -> Result<(ModelParams, TrainLog), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(config.model, &mut rng)?;
    let data = prepare(dataset, config.model.max_seq_len, config.dsep_alignment)?;
    let steps_per_epoch = config.steps_per_epoch(data.len());
    let total_steps = (steps_per_epoch * config.epochs) as u64;
    let schedule = config.schedule(total_steps);
    let mut opt = AdamW::new(config.optimizer.clone(), config.model);
    let mut log = TrainLog {
        steps: Vec::with_capacity(total_steps as usize),
        epochs: Vec::new(),
        parse_fallbacks: 0,
        truncated_examples: data.iter().filter(|p| p.tokens.truncated).count(),
        deterministic: true,
    };
    let probe_report = |m: &ModelParams| probe.map(|p| detect_collapse(&predict_dataset(m, p).labels(), 0.95));
    if let Some(Ok(r)) = probe_report(&model) {
        log.epochs.push(EpochRecord { epoch: 0, probe: r });
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0u64;
    let mut grads = ModelParams::zeros(config.model);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let lambda = lambda_at(step as i64, &schedule).lambda;
            grads
                .tensors_mut()
                .into_iter()
                .for_each(|t| t.iter_mut().for_each(|g| *g = 0.0));
            let loss = batch_loss_and_grads(&model, &batch, lambda, config.semantic_enabled, Some(&mut grads));
            let lr = config.learning_rate_at(step);
            let record = StepRecord {
                step,
                lambda,
                learning_rate: lr,
                ce: loss.ce,
                semantic: loss.semantic,
                total: loss.total,
            };
            if !(loss.total.is_finite() && grads.is_finite()) {
                return Err(TrainError::NonFinite(record));
            }
            log.parse_fallbacks += loss.fallbacks as u64;
            opt.update(&mut model, &grads, lr);
            log.steps.push(record);
            step += 1;
        }
        if let Some(Ok(r)) = probe_report(&model) {
            log.epochs.push(EpochRecord { epoch, probe: r });
        }
    }
    Ok((model, log))
}

/// Largest relative error between analytic and central-difference gradients
/// of the total loss on one example, over up to 100 sampled coordinates.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// coordinates whose true gradient is zero from dividing round-off by zero.
pub fn gradient_check<R: Rng + ?Sized>(
    model: &ModelParams,
    example: &Example,
    lambda: f64,
    rng: &mut R,
) -> Result<f64, TrainError> {
    const STEP: f64 = 1e-4;
    let prepared = prepare(
        std::slice::from_ref(example),
        model.config.max_seq_len,
        DsepAlignment::Oracle,
    )?;
    let batch = [&prepared[0]];
    let mut analytic = ModelParams::zeros(model.config);
    batch_loss_and_grads(model, &batch, lambda, true, Some(&mut analytic));

    let n = model.param_count();
    let coords = rand::seq::index::sample(rng, n, n.min(100));
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in coords {
        let orig = model.get(k);
        probe.set(k, orig + STEP);
        let up = batch_loss_and_grads(&probe, &batch, lambda, true, None).total;
        probe.set(k, orig - STEP);
        let down = batch_loss_and_grads(&probe, &batch, lambda, true, None).total;
        probe.set(k, orig);
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.get(k);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
