//! Two-logit classifier over character tokens: embedding, mean pool, one
//! tanh hidden layer, and an affine output. Logit 0 scores "Yes", logit 1 "No".

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::semantic::PredictionProbs;
use crate::text::{vocab_hash, TokenSequence, MAX_SEQ_LEN, SEPARATOR, VOCAB_SIZE};

const MAGIC: &[u8; 8] = b"SEMCMDL\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 32 + 8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("truncated model file: {0}")]
    Truncated(String),
    #[error("shape mismatch: header implies {expected} parameters, file declares {found}")]
    ShapeMismatch { expected: u64, found: u64 },
    #[error("model was trained with a different vocabulary")]
    VocabMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_embed: usize,
    pub d_hidden: usize,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: VOCAB_SIZE,
            d_embed: 16,
            d_hidden: 32,
            max_seq_len: MAX_SEQ_LEN,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("d_embed", self.d_embed),
            ("d_hidden", self.d_hidden),
            ("max_seq_len", self.max_seq_len),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
            if v > u32::MAX as usize {
                return Err(ModelError::Config(format!("{name} too large")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.vocab_size * self.d_embed + self.d_embed * self.d_hidden + self.d_hidden + self.d_hidden * 2 + 2
    }
}

/// All weights, row-major. `w1[i * d_hidden + j]` maps embedding unit `i` to
/// hidden unit `j`; `w2[j * 2 + k]` maps hidden unit `j` to logit `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub embedding: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: [f64; 2],
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Self {
        ModelParams {
            config,
            embedding: vec![0.0; config.vocab_size * config.d_embed],
            w1: vec![0.0; config.d_embed * config.d_hidden],
            b1: vec![0.0; config.d_hidden],
            w2: vec![0.0; config.d_hidden * 2],
            b2: vec![0.0; 2],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [&self.embedding, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.embedding,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    /// Whether tensor `i` of [`Self::tensors`] is a bias vector.
    pub fn is_bias(i: usize) -> bool {
        i == 2 || i == 4
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn get(&self, flat: usize) -> f64 {
        let mut i = flat;
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index {flat} out of range")
    }

    pub fn set(&mut self, flat: usize, value: f64) {
        let mut i = flat;
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index {flat} out of range")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
pub fn init_model<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<ModelParams, ModelError> {
    config.validate()?;
    let mut m = ModelParams::zeros(config);
    // One-hot input, so the embedding's fan-in is 1.
    fill_uniform(&mut m.embedding, 1.0, rng);
    fill_uniform(&mut m.w1, 1.0 / (config.d_embed as f64).sqrt(), rng);
    fill_uniform(&mut m.w2, 1.0 / (config.d_hidden as f64).sqrt(), rng);
    Ok(m)
}

fn fill_uniform<R: Rng + ?Sized>(v: &mut [f64], bound: f64, rng: &mut R) {
    for x in v {
        *x = rng.gen_range(-bound..=bound);
    }
}

pub fn forward_cached(model: &ModelParams, tokens: &TokenSequence) -> ForwardCache {
    let cfg = &model.config;
    let mut pooled = vec![0.0; cfg.d_embed];
    let sep = [SEPARATOR];
    let ids: &[u8] = if tokens.ids.is_empty() { &sep } else { &tokens.ids };
    for &id in ids {
        let row = &model.embedding[id as usize * cfg.d_embed..(id as usize + 1) * cfg.d_embed];
        for (p, e) in pooled.iter_mut().zip(row) {
            *p += e;
        }
    }
    let inv = 1.0 / ids.len() as f64;
    pooled.iter_mut().for_each(|p| *p *= inv);

    let mut hidden = model.b1.clone();
    for (i, &p) in pooled.iter().enumerate() {
        let row = &model.w1[i * cfg.d_hidden..(i + 1) * cfg.d_hidden];
        for (h, w) in hidden.iter_mut().zip(row) {
            *h += p * w;
        }
    }
    hidden.iter_mut().for_each(|h| *h = h.tanh());

    let mut logits = [model.b2[0], model.b2[1]];
    for (j, &h) in hidden.iter().enumerate() {
        logits[0] += h * model.w2[j * 2];
        logits[1] += h * model.w2[j * 2 + 1];
    }
    ForwardCache { pooled, hidden, logits }
}

pub fn forward(model: &ModelParams, tokens: &TokenSequence) -> ([f64; 2], PredictionProbs) {
    let cache = forward_cached(model, tokens);
    (cache.logits, PredictionProbs::from_logits(cache.logits))
}

/// Accumulates parameter gradients into `grads` given dLoss/dlogits.
pub fn backward(
    model: &ModelParams,
    tokens: &TokenSequence,
    cache: &ForwardCache,
    dlogits: [f64; 2],
    grads: &mut ModelParams,
) {
    let cfg = &model.config;
    grads.b2[0] += dlogits[0];
    grads.b2[1] += dlogits[1];
    let mut dpre = vec![0.0; cfg.d_hidden];
    for (j, &h) in cache.hidden.iter().enumerate() {
        grads.w2[j * 2] += h * dlogits[0];
        grads.w2[j * 2 + 1] += h * dlogits[1];
        let dh = model.w2[j * 2] * dlogits[0] + model.w2[j * 2 + 1] * dlogits[1];
        dpre[j] = dh * (1.0 - h * h);
    }
    for (b, d) in grads.b1.iter_mut().zip(&dpre) {
        *b += d;
    }
    let mut dpooled = vec![0.0; cfg.d_embed];
    for (i, &p) in cache.pooled.iter().enumerate() {
        let row = i * cfg.d_hidden;
        let mut acc = 0.0;
        for (j, &d) in dpre.iter().enumerate() {
            grads.w1[row + j] += p * d;
            acc += model.w1[row + j] * d;
        }
        dpooled[i] = acc;
    }
    let sep = [SEPARATOR];
    let ids: &[u8] = if tokens.ids.is_empty() { &sep } else { &tokens.ids };
    let inv = 1.0 / ids.len() as f64;
    for &id in ids {
        let row = &mut grads.embedding[id as usize * cfg.d_embed..(id as usize + 1) * cfg.d_embed];
        for (g, d) in row.iter_mut().zip(&dpooled) {
            *g += d * inv;
        }
    }
}

/// Serializes to the versioned little-endian container.
pub fn encode_model(model: &ModelParams) -> Vec<u8> {
    let cfg = &model.config;
    let mut out = Vec::with_capacity(HEADER_LEN + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [cfg.vocab_size, cfg.d_embed, cfg.d_hidden, cfg.max_seq_len] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&hex::decode(vocab_hash()).expect("hex digest"));
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for t in model.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelParams, ModelError> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(ModelError::Version(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(ModelError::Truncated(format!("{} header bytes", bytes.len())));
    }
    let config = ModelConfig {
        vocab_size: u32_at(12) as usize,
        d_embed: u32_at(16) as usize,
        d_hidden: u32_at(20) as usize,
        max_seq_len: u32_at(24) as usize,
    };
    config.validate()?;
    if hex::encode(&bytes[28..60]) != vocab_hash() || config.vocab_size != VOCAB_SIZE {
        return Err(ModelError::VocabMismatch);
    }
    let declared = u64::from_le_bytes(bytes[60..68].try_into().expect("8 bytes"));
    let expected = config.param_count() as u64;
    if declared != expected {
        return Err(ModelError::ShapeMismatch {
            expected,
            found: declared,
        });
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected * 8 {
        return Err(ModelError::Truncated(format!(
            "{} payload bytes for {expected} parameters",
            payload.len()
        )));
    }
    let mut model = ModelParams::zeros(config);
    let mut chunks = payload.chunks_exact(8);
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(chunks.next().expect("length checked").try_into().expect("8 bytes"));
        }
    }
    Ok(model)
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<(), ModelError> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams, ModelError> {
    decode_model(&fs::read(path)?)
}
