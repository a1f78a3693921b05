//! Versioned model files.
//!
//! ```text
//! VERITEXT-MODEL
//! format_version = 1
//! kind = "svm"
//! ...TOML header: tags, vocabulary, section table, config snapshot...
//! %%PARAMS
//! <u64 LE count><count × f64 LE>
//! ```
//!
//! The header is human-readable; every real-valued parameter lives in the
//! binary payload so it round-trips exactly. The payload is the
//! concatenation of the sections listed in the header, in order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::corpus::{stopwords_hash, Pipeline};
use crate::encoder::{EncoderConfig, EncoderModel, TokenVocab};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, TfidfModel, Vocabulary};
use crate::linear::{LinearKind, LinearModel, NaiveBayesModel};
use crate::pipeline::{FeatureKind, FeaturePipeline, FeatureState, Model, ModelKind, TextClassifier};
use crate::tree::{BoostedModel, ForestModel, TreeNode};

pub const MAGIC: &str = "VERITEXT-MODEL";
pub const FORMAT_VERSION: u32 = 1;
const PARAMS_MARKER: &str = "%%PARAMS";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelMeta {
    pub dim: usize,
    pub linear_kind: Option<LinearKind>,
    pub max_features: Option<usize>,
    /// Hex, since seeds may exceed the TOML integer range.
    pub tree_seeds: Vec<String>,
    pub n_trees: usize,
    pub n_docs: usize,
    pub embedding_dim: usize,
    pub encoder: Option<EncoderConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactHeader {
    pub format_version: u32,
    pub kind: ModelKind,
    pub features: FeatureKind,
    pub preprocess: Pipeline,
    pub retained: String,
    pub stopwords_sha256: String,
    pub seed: u64,
    pub sections: Vec<Section>,
    pub vocabulary: Vec<String>,
    pub model: ModelMeta,
    pub config: ExperimentConfig,
}

#[derive(Default)]
struct Payload {
    sections: Vec<Section>,
    values: Vec<f64>,
}

impl Payload {
    fn push(&mut self, name: &str, values: impl IntoIterator<Item = f64>) {
        let before = self.values.len();
        self.values.extend(values);
        self.sections.push(Section {
            name: name.into(),
            len: self.values.len() - before,
        });
    }
}

struct Sections<'a> {
    sections: std::slice::Iter<'a, Section>,
    values: &'a [f64],
}

impl<'a> Sections<'a> {
    fn take(&mut self, name: &str) -> Result<&'a [f64]> {
        let s = self
            .sections
            .next()
            .ok_or_else(|| Error::Artifact(format!("missing section {name}")))?;
        if s.name != name {
            return Err(Error::Artifact(format!("expected section {name}, found {}", s.name)));
        }
        if s.len > self.values.len() {
            return Err(Error::Artifact(format!("section {name} is truncated")));
        }
        let (head, rest) = self.values.split_at(s.len);
        self.values = rest;
        Ok(head)
    }

    fn take_len(&mut self, name: &str, len: usize) -> Result<&'a [f64]> {
        let v = self.take(name)?;
        if v.len() != len {
            return Err(Error::Artifact(format!(
                "section {name} has {} values, expected {len}",
                v.len()
            )));
        }
        Ok(v)
    }
}

fn encode_tree(node: &TreeNode, out: &mut Vec<f64>) {
    match node {
        TreeNode::Leaf { value } => out.extend([0.0, *value]),
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            out.extend([1.0, *feature as f64, *threshold]);
            encode_tree(left, out);
            encode_tree(right, out);
        }
    }
}

fn decode_tree(values: &[f64], at: &mut usize, dim: usize, depth: usize) -> Result<TreeNode> {
    let bad = || Error::Artifact("malformed tree encoding".into());
    if depth > 10_000 {
        return Err(bad());
    }
    let tag = *values.get(*at).ok_or_else(bad)?;
    if tag == 0.0 {
        let value = *values.get(*at + 1).ok_or_else(bad)?;
        *at += 2;
        Ok(TreeNode::Leaf { value })
    } else if tag == 1.0 {
        let f = *values.get(*at + 1).ok_or_else(bad)?;
        let threshold = *values.get(*at + 2).ok_or_else(bad)?;
        if !(f >= 0.0 && f.fract() == 0.0 && (f as usize) < dim) {
            return Err(bad());
        }
        *at += 3;
        let left = decode_tree(values, at, dim, depth + 1)?;
        let right = decode_tree(values, at, dim, depth + 1)?;
        Ok(TreeNode::Split {
            feature: f as usize,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        })
    } else {
        Err(bad())
    }
}

fn decode_trees(values: &[f64], n: usize, dim: usize) -> Result<Vec<TreeNode>> {
    let mut at = 0;
    let trees = (0..n)
        .map(|_| decode_tree(values, &mut at, dim, 0))
        .collect::<Result<Vec<_>>>()?;
    if at != values.len() {
        return Err(Error::Artifact("trailing values after trees".into()));
    }
    Ok(trees)
}

fn encode_trees(trees: &[TreeNode]) -> Vec<f64> {
    let mut out = Vec::new();
    trees.iter().for_each(|t| encode_tree(t, &mut out));
    out
}

/// Serializes a fitted classifier with the configuration that trained it.
pub fn to_bytes(clf: &TextClassifier, config: &ExperimentConfig) -> Vec<u8> {
    let mut payload = Payload::default();
    let mut meta = ModelMeta::default();
    let vocabulary = match &clf.features.state {
        FeatureState::Counts(m) | FeatureState::Tfidf(m) => {
            let v = m.vocabulary();
            meta.n_docs = v.n_docs();
            payload.push("vocabulary.doc_freq", v.doc_freq().iter().map(|&d| d as f64));
            v.tokens().to_vec()
        }
        FeatureState::Word2vec(t) => {
            meta.embedding_dim = t.dim();
            meta.n_docs = t.vocabulary().n_docs();
            payload.push(
                "vocabulary.doc_freq",
                t.vocabulary().doc_freq().iter().map(|&d| d as f64),
            );
            payload.push("embedding.input", t.input_matrix().iter().copied());
            t.vocabulary().tokens().to_vec()
        }
        FeatureState::Tokens(v) => v.tokens().to_vec(),
    };
    match &clf.model {
        Model::NaiveBayes(m) => {
            meta.dim = m.dim();
            payload.push("nb.log_priors", m.log_priors);
            payload.push("nb.log_likelihoods", m.log_likelihoods.iter().copied());
            payload.push("nb.alpha", [m.alpha]);
        }
        Model::Linear(m) => {
            meta.dim = m.dim();
            meta.linear_kind = Some(m.kind);
            payload.push("linear.weights", m.weights.iter().copied());
            payload.push("linear.bias_lambda", [m.bias, m.lambda]);
        }
        Model::Forest(m) => {
            meta.dim = m.dim;
            meta.max_features = Some(m.max_features);
            meta.n_trees = m.trees.len();
            meta.tree_seeds = m.tree_seeds.iter().map(|s| format!("{s:016x}")).collect();
            payload.push("forest.trees", encode_trees(&m.trees));
        }
        Model::Boost(m) => {
            meta.dim = m.dim;
            meta.n_trees = m.trees.len();
            payload.push("boost.base_eta_lambda", [m.base_score, m.eta, m.lambda_reg]);
            payload.push("boost.trees", encode_trees(&m.trees));
        }
        Model::Encoder(m) => {
            meta.dim = m.config().d_model;
            meta.encoder = Some(m.config().clone());
            payload.push("encoder.params", m.params().iter().copied());
        }
    }
    let header = ArtifactHeader {
        format_version: FORMAT_VERSION,
        kind: clf.model_kind,
        features: clf.feature_kind(),
        preprocess: clf.features.pipeline,
        retained: clf.features.retained.clone(),
        stopwords_sha256: stopwords_hash(),
        seed: config.seed,
        sections: payload.sections,
        vocabulary,
        model: meta,
        config: config.clone(),
    };
    let mut out = format!(
        "{MAGIC}\n{}{PARAMS_MARKER}\n",
        toml::to_string(&header).expect("header serializes")
    )
    .into_bytes();
    out.extend_from_slice(&(payload.values.len() as u64).to_le_bytes());
    for v in &payload.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits the file into header text and payload, checking magic and version
/// before anything else.
fn split_file(bytes: &[u8]) -> Result<(ArtifactHeader, Vec<f64>)> {
    let magic = format!("{MAGIC}\n");
    if !bytes.starts_with(magic.as_bytes()) {
        return Err(Error::Artifact("not a model file (bad magic line)".into()));
    }
    let body = &bytes[magic.len()..];
    let marker = format!("{PARAMS_MARKER}\n");
    let at = find_marker(body, marker.as_bytes()).ok_or_else(|| Error::Artifact("missing parameter section".into()))?;
    let text = std::str::from_utf8(&body[..at]).map_err(|_| Error::Artifact("header is not UTF-8".into()))?;
    let table: toml::Table = toml::from_str(text).map_err(|e| Error::Artifact(format!("header: {e}")))?;
    let version = table
        .get("format_version")
        .and_then(toml::Value::as_integer)
        .ok_or_else(|| Error::Artifact("header lacks format_version".into()))?;
    if version != i64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let header: ArtifactHeader = table.try_into().map_err(|e| Error::Artifact(format!("header: {e}")))?;
    let raw = &body[at + marker.len()..];
    if raw.len() < 8 {
        return Err(Error::Artifact("parameter section is truncated".into()));
    }
    let count = u64::from_le_bytes(raw[..8].try_into().expect("8 bytes"));
    let data = &raw[8..];
    if Some(data.len() as u64) != count.checked_mul(8) {
        return Err(Error::Artifact(format!(
            "parameter section holds {} bytes, header promises {count} values",
            data.len()
        )));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect::<Vec<_>>();
    let declared: usize = header.sections.iter().map(|s| s.len).sum();
    if declared != values.len() {
        return Err(Error::Artifact("section table does not match parameter count".into()));
    }
    Ok((header, values))
}

fn find_marker(body: &[u8], marker: &[u8]) -> Option<usize> {
    if body.starts_with(marker) {
        return Some(0);
    }
    body.windows(marker.len() + 1)
        .position(|w| w[0] == b'\n' && &w[1..] == marker)
        .map(|i| i + 1)
}

fn usize_values(v: &[f64]) -> Result<Vec<usize>> {
    v.iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 9.007_199_254_740_992e15 {
                Ok(x as usize)
            } else {
                Err(Error::Artifact(format!("expected a count, found {x}")))
            }
        })
        .collect()
}

/// Reads a model file; returns the classifier and its header.
pub fn from_bytes(bytes: &[u8]) -> Result<(TextClassifier, ArtifactHeader)> {
    let (header, values) = split_file(bytes)?;
    crate::pipeline::check_pair(header.kind, header.features)?;
    if header.stopwords_sha256 != stopwords_hash() && header.preprocess == Pipeline::Classic {
        return Err(Error::Artifact(
            "model was trained with a different stopword list".into(),
        ));
    }
    let meta = &header.model;
    let mut s = Sections {
        sections: header.sections.iter(),
        values: &values,
    };
    let vocab_tokens = header.vocabulary.clone();
    let state = match header.features {
        FeatureKind::Tfidf => {
            let df = usize_values(s.take_len("vocabulary.doc_freq", vocab_tokens.len())?)?;
            let m = TfidfModel::from_vocabulary(Vocabulary::from_parts(vocab_tokens, df, meta.n_docs)?);
            if header.kind == ModelKind::NaiveBayes {
                FeatureState::Counts(m)
            } else {
                FeatureState::Tfidf(m)
            }
        }
        FeatureKind::Word2vec => {
            let v = vocab_tokens.len();
            let df = usize_values(s.take_len("vocabulary.doc_freq", v)?)?;
            let vocab = Vocabulary::from_parts(vocab_tokens, df, meta.n_docs)?;
            let input = s.take_len("embedding.input", v * meta.embedding_dim)?.to_vec();
            FeatureState::Word2vec(EmbeddingTable::from_input_vectors(vocab, meta.embedding_dim, input)?)
        }
        FeatureKind::Tokens => FeatureState::Tokens(TokenVocab::from_tokens(vocab_tokens)?),
    };
    let features = FeaturePipeline::new(header.preprocess, &header.retained, state);
    let dim = meta.dim;
    let model = match header.kind {
        ModelKind::NaiveBayes => {
            let p = s.take_len("nb.log_priors", 2)?;
            let ll = s.take_len("nb.log_likelihoods", 2 * dim)?.to_vec();
            let alpha = s.take_len("nb.alpha", 1)?[0];
            Model::NaiveBayes(NaiveBayesModel {
                log_priors: [p[0], p[1]],
                log_likelihoods: ll,
                alpha,
            })
        }
        ModelKind::Logreg | ModelKind::Svm => {
            let weights = s.take_len("linear.weights", dim)?.to_vec();
            let bl = s.take_len("linear.bias_lambda", 2)?;
            let kind = meta
                .linear_kind
                .ok_or_else(|| Error::Artifact("linear model without linear_kind".into()))?;
            Model::Linear(LinearModel {
                weights,
                bias: bl[0],
                kind,
                lambda: bl[1],
            })
        }
        ModelKind::Forest => {
            let tree_seeds = meta
                .tree_seeds
                .iter()
                .map(|h| u64::from_str_radix(h, 16).map_err(|_| Error::Artifact(format!("bad tree seed {h:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let trees = decode_trees(s.take("forest.trees")?, meta.n_trees, dim)?;
            if trees.is_empty() || tree_seeds.len() != trees.len() {
                return Err(Error::Artifact("forest tree count mismatch".into()));
            }
            Model::Forest(ForestModel {
                trees,
                tree_seeds,
                max_features: meta.max_features.unwrap_or(1),
                dim,
            })
        }
        ModelKind::Boost => {
            let b = s.take_len("boost.base_eta_lambda", 3)?;
            let (base_score, eta, lambda_reg) = (b[0], b[1], b[2]);
            let trees = decode_trees(s.take("boost.trees")?, meta.n_trees, dim)?;
            Model::Boost(BoostedModel {
                base_score,
                trees,
                eta,
                lambda_reg,
                dim,
            })
        }
        ModelKind::Encoder => {
            let config = meta
                .encoder
                .clone()
                .ok_or_else(|| Error::Artifact("encoder model without its configuration".into()))?;
            if config.vocab_size != features.dim() {
                return Err(Error::Artifact("encoder vocabulary size mismatch".into()));
            }
            let params = s.take("encoder.params")?.to_vec();
            Model::Encoder(EncoderModel::from_params(config, params)?)
        }
    };
    if s.sections.next().is_some() {
        return Err(Error::Artifact("unexpected extra sections".into()));
    }
    if header.kind != ModelKind::Encoder && dim != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            found: dim,
        });
    }
    Ok((
        TextClassifier {
            model_kind: header.kind,
            features,
            model,
        },
        header,
    ))
}

pub fn save(path: &Path, clf: &TextClassifier, config: &ExperimentConfig) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&to_bytes(clf, config)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(TextClassifier, ArtifactHeader)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
