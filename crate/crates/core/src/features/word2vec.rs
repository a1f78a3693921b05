//! Skip-gram with negative sampling, trained on the task corpus.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DenseVector, Vocabulary};
use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Word2VecParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for Word2VecParams {
    fn default() -> Self {
        Word2VecParams {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 2,
            seed: 42,
        }
    }
}

/// Input ("word") and output ("context") vectors, row-major `V x dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    vocabulary: Vocabulary,
    counts: Vec<usize>,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Vocabulary ordered by descending corpus frequency, ties by token.
fn build_vocabulary(docs: &[TokenSequence], min_count: usize) -> (Vocabulary, Vec<usize>) {
    let mut freq: HashMap<&str, (usize, usize, usize)> = HashMap::new();
    for (d, doc) in docs.iter().enumerate() {
        for t in &doc.tokens {
            let e = freq.entry(t.as_str()).or_insert((0, 0, usize::MAX));
            e.0 += 1;
            if e.2 != d {
                e.1 += 1;
                e.2 = d;
            }
        }
    }
    let mut entries: Vec<(&str, usize, usize)> = freq
        .into_iter()
        .filter(|(_, (count, _, _))| *count >= min_count.max(1))
        .map(|(t, (count, df, _))| (t, count, df))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let tokens = entries.iter().map(|e| e.0.to_string()).collect();
    let counts = entries.iter().map(|e| e.1).collect();
    let dfs = entries.iter().map(|e| e.2).collect();
    let vocab = Vocabulary::from_parts(tokens, dfs, docs.len()).expect("counts are consistent");
    (vocab, counts)
}

struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeSampler { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

pub fn train_word2vec(docs: &[TokenSequence], params: &Word2VecParams) -> Result<EmbeddingTable> {
    train_word2vec_logged(docs, params).map(|(table, _)| table)
}

/// Train and also return the mean per-pair loss of every epoch.
pub fn train_word2vec_logged(docs: &[TokenSequence], params: &Word2VecParams) -> Result<(EmbeddingTable, Vec<f64>)> {
    if params.dim == 0 {
        return Err(Error::domain("embedding dimension must be positive"));
    }
    let (vocabulary, counts) = build_vocabulary(docs, params.min_count);
    if vocabulary.is_empty() {
        return Err(Error::domain(format!(
            "no token occurs at least {} times; word2vec vocabulary is empty",
            params.min_count
        )));
    }
    let v = vocabulary.len();
    let d = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let input: Vec<f64> = (0..v * d).map(|_| (rng.random::<f64>() - 0.5) / d as f64).collect();
    let mut table = EmbeddingTable {
        vocabulary,
        counts,
        dim: d,
        input,
        output: vec![0.0; v * d],
    };

    let sentences: Vec<Vec<usize>> = docs
        .iter()
        .map(|doc| doc.tokens.iter().filter_map(|t| table.vocabulary.get(t)).collect())
        .collect();
    let sampler = NegativeSampler::new(&table.counts);
    let words_per_epoch: usize = sentences.iter().map(Vec::len).sum();
    let total = (words_per_epoch * params.epochs).max(1) as f64;
    let min_lr = params.lr / 10.0;
    let mut processed = 0usize;
    let mut grad = vec![0.0; d];
    let mut epoch_losses = Vec::with_capacity(params.epochs);

    for _ in 0..params.epochs {
        let (mut loss_sum, mut pairs) = (0.0, 0usize);
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let alpha = params.lr - (params.lr - min_lr) * (processed as f64 / total);
                processed += 1;
                let lo = pos.saturating_sub(params.window);
                let hi = (pos + params.window + 1).min(sentence.len());
                for (cpos, &context) in sentence.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let c_row = center * d..(center + 1) * d;
                    for k in 0..=params.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let n = sampler.sample(&mut rng);
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let t_row = target * d..(target + 1) * d;
                        let f = dot(&table.input[c_row.clone()], &table.output[t_row.clone()]);
                        let s = sigmoid(f);
                        loss_sum -= if label == 1.0 { s.ln() } else { (1.0 - s).ln() };
                        let g = (label - s) * alpha;
                        let (inp, out) = (&table.input[c_row.clone()], &mut table.output[t_row]);
                        for j in 0..d {
                            grad[j] += g * out[j];
                            out[j] += g * inp[j];
                        }
                    }
                    for (w, g) in table.input[c_row].iter_mut().zip(&grad) {
                        *w += g;
                    }
                    pairs += 1;
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 };
        if !mean.is_finite() {
            return Err(Error::Training {
                step: epoch_losses.len(),
                message: "word2vec loss is not finite".into(),
            });
        }
        epoch_losses.push(mean);
    }
    Ok((table, epoch_losses))
}

impl EmbeddingTable {
    /// Assemble a table from stored input vectors (as read from an artifact
    /// or the text export). Output vectors are zero.
    pub fn from_input_vectors(vocabulary: Vocabulary, dim: usize, input: Vec<f64>) -> Result<Self> {
        if dim == 0 || input.len() != vocabulary.len() * dim {
            return Err(Error::domain("embedding matrix does not match vocabulary x dim"));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding contains non-finite entries"));
        }
        let v = vocabulary.len();
        Ok(EmbeddingTable {
            vocabulary,
            counts: vec![1; v],
            dim,
            input,
            output: vec![0.0; v * dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn input_matrix(&self) -> &[f64] {
        &self.input
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.vocabulary
            .get(token)
            .map(|i| &self.input[i * self.dim..(i + 1) * self.dim])
    }

    pub fn output_vector(&self, token: &str) -> Option<&[f64]> {
        self.vocabulary
            .get(token)
            .map(|i| &self.output[i * self.dim..(i + 1) * self.dim])
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.vector(a)?, self.vector(b)?);
        let denom = dot(x, x).sqrt() * dot(y, y).sqrt();
        Some(if denom == 0.0 { 0.0 } else { dot(x, y) / denom })
    }

    /// Negative-sampling loss of one (center, context) pair against the
    /// given negative tokens.
    pub fn sgns_loss(&self, center: &str, context: &str, negatives: &[&str]) -> Option<f64> {
        let c = self.vector(center)?;
        let mut loss = -sigmoid(dot(c, self.output_vector(context)?)).ln();
        for n in negatives {
            loss -= (1.0 - sigmoid(dot(c, self.output_vector(n)?))).ln();
        }
        Some(loss)
    }

    /// Plain-text export: a `V d` line, then one `token v1 .. vd` line per
    /// token in index order.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vocabulary.len(), self.dim)?;
        for (i, token) in self.vocabulary.tokens().iter().enumerate() {
            write!(w, "{token}")?;
            for v in &self.input[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, message: &str| Error::Parse {
            line: line as u64 + 1,
            message: message.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let header = header.map_err(|e| bad(0, &e.to_string()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(0, "header must be `V d`"))?;
        let [v, d] = dims[..] else {
            return Err(bad(0, "header must be `V d`"));
        };
        let mut tokens = Vec::with_capacity(v);
        let mut input = Vec::with_capacity(v * d);
        for (n, line) in lines {
            let line = line.map_err(|e| bad(n, &e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            tokens.push(parts.next().unwrap_or_default().to_string());
            let before = input.len();
            for p in parts {
                input.push(p.parse::<f64>().map_err(|_| bad(n, "bad number"))?);
            }
            if input.len() - before != d {
                return Err(bad(n, "wrong number of components"));
            }
        }
        if tokens.len() != v {
            return Err(bad(0, "token count differs from header"));
        }
        let vocab = Vocabulary::from_parts(tokens, vec![1; v], 1)?;
        EmbeddingTable::from_input_vectors(vocab, d, input)
    }
}

/// Mean of the input vectors of in-vocabulary tokens; zero vector when none.
pub fn embed_mean(table: &EmbeddingTable, doc: &TokenSequence) -> DenseVector {
    let mut out = vec![0.0; table.dim];
    let mut n = 0usize;
    for v in doc.tokens.iter().filter_map(|t| table.vector(t)) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        n += 1;
    }
    if n > 0 {
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    out
}
