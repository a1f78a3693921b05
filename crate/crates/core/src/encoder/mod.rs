//! A small transformer encoder classifier trained from scratch.
//!
//! Tokens come from the RAW pipeline and map through a [`TokenVocab`] with
//! `PAD = 0` and `UNK = 1`. Sequences longer than `max_len` are truncated;
//! an empty post becomes a single `UNK`.

mod adam;
mod model;

pub use adam::{AdamParams, AdamState};
pub use model::{parameter_count, Block, ForwardOutput, Layout};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, TokenSequence};
use crate::error::{Error, Result};
use crate::linear::TrainLog;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Filled from the vocabulary at training time.
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 2,
            d_model: 64,
            heads: 4,
            layers: 2,
            d_ff: 128,
            max_len: 128,
            init_std: 0.02,
            seed: 42,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("encoder: {m}")));
        if self.vocab_size < 2 {
            return bad("vocab_size must cover PAD and UNK");
        }
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.max_len == 0 || self.d_ff == 0 {
            return bad("max_len and d_ff must be at least 1");
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad("init_std must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Token index with `PAD` and `UNK` reserved at 0 and 1. Other tokens are
/// ordered by count descending, then lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub const PAD_TOKEN: &'static str = "<pad>";
    pub const UNK_TOKEN: &'static str = "<unk>";

    pub fn build(docs: &[TokenSequence], min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for t in &doc.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_string()).collect()).expect("counted tokens are unique")
    }

    /// Builds from the non-reserved tokens in index order (index 2 onward).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut all = vec![Self::PAD_TOKEN.to_string(), Self::UNK_TOKEN.to_string()];
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Artifact(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(TokenVocab { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-reserved tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    pub fn get(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    /// Indices truncated to `max_len`; an empty document yields `[UNK]`.
    pub fn encode(&self, doc: &TokenSequence, max_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = doc.tokens.iter().take(max_len).map(|t| self.get(t)).collect();
        if ids.is_empty() {
            ids.push(UNK);
        }
        ids
    }
}

/// Right-padded token matrix with its padding mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    len: usize,
    tokens: Vec<usize>,
    padding: Vec<bool>,
    valid: Vec<bool>,
    labels: Vec<Label>,
}

impl Batch {
    /// Pads every sequence to the longest one. Sequences must be non-empty.
    pub fn new(seqs: &[Vec<usize>], labels: &[Label]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::domain("empty batch"));
        }
        if seqs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: seqs.len(),
                found: labels.len(),
            });
        }
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::domain("batch sequences must contain at least one token"));
        }
        let len = seqs.iter().map(Vec::len).max().unwrap_or(1);
        let mut tokens = Vec::with_capacity(seqs.len() * len);
        let mut padding = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            tokens.extend_from_slice(s);
            tokens.extend(std::iter::repeat_n(PAD, len - s.len()));
            padding.extend(std::iter::repeat_n(false, s.len()));
            padding.extend(std::iter::repeat_n(true, len - s.len()));
        }
        let valid = padding.iter().map(|p| !p).collect();
        Ok(Batch {
            len,
            tokens,
            padding,
            valid,
            labels: labels.to_vec(),
        })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    /// Padded length `L`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn tokens(&self, b: usize) -> &[usize] {
        &self.tokens[b * self.len..(b + 1) * self.len]
    }

    /// `true` exactly at padding positions.
    pub fn padding(&self, b: usize) -> &[bool] {
        &self.padding[b * self.len..(b + 1) * self.len]
    }

    pub(crate) fn mask(&self, b: usize) -> &[bool] {
        &self.valid[b * self.len..(b + 1) * self.len]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn check(&self, config: &EncoderConfig) -> Result<()> {
        if self.len > config.max_len {
            return Err(Error::domain(format!(
                "batch length {} exceeds max_len {}",
                self.len, config.max_len
            )));
        }
        if let Some(&t) = self.tokens.iter().find(|&&t| t >= config.vocab_size) {
            return Err(Error::domain(format!("token index {t} out of vocabulary")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    layout: Layout,
    params: Vec<f64>,
}

impl EncoderModel {
    /// Fresh model: N(0, init_std) weights, unit gains, zero biases.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = model::init_params(&config, &layout);
        Ok(EncoderModel { config, layout, params })
    }

    pub fn from_params(config: EncoderConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch {
                expected: layout.total,
                found: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Artifact("encoder parameters must be finite".into()));
        }
        Ok(EncoderModel { config, layout, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let b = self.layout.block(name)?.clone();
        Some(&mut self.params[b.offset..b.offset + b.len])
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        batch.check(&self.config)?;
        Ok(model::batch_loss(&self.config, &self.layout, &self.params, batch))
    }

    /// Mean cross-entropy and its gradient, accumulated over fixed chunks of
    /// the batch so the summation order does not depend on the thread count.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        batch.check(&self.config)?;
        Ok(loss_and_grad_chunked(self, batch))
    }
}

const GRAD_CHUNKS: usize = 8;

fn loss_and_grad_chunked(m: &EncoderModel, batch: &Batch) -> (f64, Vec<f64>) {
    let b = batch.size();
    let chunk = b.div_ceil(GRAD_CHUNKS);
    if chunk == b {
        return model::loss_and_grad(&m.config, &m.layout, &m.params, batch);
    }
    let parts: Vec<(f64, Vec<f64>)> = (0..b)
        .step_by(chunk)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&start| {
            let end = (start + chunk).min(b);
            let sub = batch.slice(start, end);
            let (loss, mut grad) = model::loss_and_grad(&m.config, &m.layout, &m.params, &sub);
            let w = (end - start) as f64 / b as f64;
            grad.iter_mut().for_each(|g| *g *= w);
            (loss * w, grad)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grad) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (loss, grad)
}

impl Batch {
    fn slice(&self, start: usize, end: usize) -> Batch {
        let l = self.len;
        Batch {
            len: l,
            tokens: self.tokens[start * l..end * l].to_vec(),
            padding: self.padding[start * l..end * l].to_vec(),
            valid: self.valid[start * l..end * l].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }
}

pub fn encode_forward(model: &EncoderModel, batch: &Batch) -> Result<ForwardOutput> {
    batch.check(&model.config)?;
    Ok(model::forward_batch(&model.config, &model.layout, &model.params, batch))
}

/// One Adam step on the batch; returns the pre-update loss.
pub fn train_step(model: &mut EncoderModel, batch: &Batch, state: &mut AdamState, params: &AdamParams) -> Result<f64> {
    let (loss, grad) = model.loss_and_grad(batch)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            step: state.step(),
            message: format!("encoder loss {loss} is not finite"),
        });
    }
    state.update(&mut model.params, &grad, params)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderTrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub min_count: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for EncoderTrainParams {
    fn default() -> Self {
        EncoderTrainParams {
            epochs: 3,
            batch_size: 32,
            min_count: 2,
            adam: AdamParams::default(),
            seed: 42,
        }
    }
}

/// Builds the vocabulary, then runs shuffled mini-batch Adam. The log holds
/// the mean training loss of each epoch.
pub fn train_encoder(
    config: &EncoderConfig,
    docs: &[TokenSequence],
    labels: &[Label],
    params: &EncoderTrainParams,
) -> Result<(EncoderModel, TokenVocab, TrainLog)> {
    let vocab = TokenVocab::build(docs, params.min_count);
    let (model, log) = train_encoder_with_vocab(config, &vocab, docs, labels, params)?;
    Ok((model, vocab, log))
}

/// As [`train_encoder`] with a prebuilt vocabulary; `config.vocab_size` is
/// taken from it.
pub fn train_encoder_with_vocab(
    config: &EncoderConfig,
    vocab: &TokenVocab,
    docs: &[TokenSequence],
    labels: &[Label],
    params: &EncoderTrainParams,
) -> Result<(EncoderModel, TrainLog)> {
    if docs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: docs.len(),
            found: labels.len(),
        });
    }
    if docs.is_empty() {
        return Err(Error::domain("no training documents"));
    }
    if params.batch_size == 0 {
        return Err(Error::Config("encoder: batch_size must be positive".into()));
    }
    let config = EncoderConfig {
        vocab_size: vocab.len(),
        ..config.clone()
    };
    let mut model = EncoderModel::new(config)?;
    let seqs: Vec<Vec<usize>> = docs.iter().map(|d| vocab.encode(d, model.config.max_len)).collect();
    let mut state = AdamState::new(model.parameter_count());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(params.batch_size) {
            let batch_seqs: Vec<Vec<usize>> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let batch_labels: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let batch = Batch::new(&batch_seqs, &batch_labels)?;
            total += train_step(&mut model, &batch, &mut state, &params.adam)? * chunk.len() as f64;
        }
        let mean = total / docs.len() as f64;
        log::debug!("encoder epoch {epoch}: loss {mean:.6}");
        log.objectives.push(mean);
    }
    Ok((model, log))
}

const PREDICT_BATCH: usize = 64;

/// `(label, [logit_fake, logit_real])` per post; FAKE only if its logit is
/// strictly larger.
pub fn encoder_predict(model: &EncoderModel, posts: &[TokenSequence], vocab: &TokenVocab) -> Vec<(Label, [f64; 2])> {
    let max_len = model.config.max_len;
    posts
        .par_chunks(PREDICT_BATCH)
        .flat_map_iter(|chunk| {
            let seqs: Vec<Vec<usize>> = chunk
                .iter()
                .map(|p| {
                    vocab
                        .encode(p, max_len)
                        .into_iter()
                        .map(|t| if t < model.config.vocab_size { t } else { UNK })
                        .collect()
                })
                .collect();
            let labels = vec![Label::Real; seqs.len()];
            let batch = Batch::new(&seqs, &labels).expect("encoded sequences are non-empty");
            let out = model::forward_batch(&model.config, &model.layout, &model.params, &batch);
            out.logits
                .into_iter()
                .map(|z| (Label::from_score(z[0] - z[1]), z))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[cfg(test)]
mod tests;
