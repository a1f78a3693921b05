//! Feature extraction plus classifier as one fitted unit.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::corpus::{Label, Pipeline, Preprocessor, TokenSequence};
use crate::encoder::{encoder_predict, train_encoder_with_vocab, EncoderModel, TokenVocab};
use crate::error::{Error, Result};
use crate::features::{embed_mean, fit_tfidf, train_word2vec, EmbeddingTable, FeatureMatrix, TfidfModel};
use crate::linear::{linear_predict, logreg_fit, nb_fit, nb_predict, svm_fit, LinearModel, NaiveBayesModel, TrainLog};
use crate::tree::{boost_fit, ensemble_predict, forest_fit, BoostedModel, ForestModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Tfidf,
    Word2vec,
    /// Token indices for the encoder.
    Tokens,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Tfidf => "tfidf",
            FeatureKind::Word2vec => "word2vec",
            FeatureKind::Tokens => "tokens",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeatureKind::Tfidf => "tf-idf",
            FeatureKind::Word2vec => "word2vec",
            FeatureKind::Tokens => "tokens",
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [FeatureKind::Tfidf, FeatureKind::Word2vec, FeatureKind::Tokens]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "nb")]
    #[value(name = "nb")]
    NaiveBayes,
    Logreg,
    Forest,
    Boost,
    Svm,
    Encoder,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "nb",
            ModelKind::Logreg => "logreg",
            ModelKind::Forest => "forest",
            ModelKind::Boost => "boost",
            ModelKind::Svm => "svm",
            ModelKind::Encoder => "encoder",
        }
    }

    pub const ALL: [ModelKind; 6] = [
        ModelKind::NaiveBayes,
        ModelKind::Logreg,
        ModelKind::Forest,
        ModelKind::Boost,
        ModelKind::Svm,
        ModelKind::Encoder,
    ];

    /// Row label used in result tables.
    pub fn method_name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "Naive Bayes Model",
            ModelKind::Logreg => "Linear Classifier",
            ModelKind::Forest => "Bagging Model",
            ModelKind::Boost => "Boosting Model",
            ModelKind::Svm => "SVM Model",
            ModelKind::Encoder => "Transformer Encoder",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

pub fn check_pair(model: ModelKind, features: FeatureKind) -> Result<()> {
    let reason = match (model, features) {
        (ModelKind::NaiveBayes, FeatureKind::Word2vec) => {
            "naive Bayes needs term counts; the published baseline grid has no such cell"
        }
        (ModelKind::Encoder, FeatureKind::Tokens) => return Ok(()),
        (ModelKind::Encoder, _) => "the encoder reads token indices; use --features tokens",
        (_, FeatureKind::Tokens) => "token features are only defined for the encoder",
        _ => return Ok(()),
    };
    Err(Error::InvalidPair {
        model: model.as_str().into(),
        features: features.as_str().into(),
        reason: reason.into(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureState {
    /// Raw term counts over a tf-idf vocabulary (naive Bayes input).
    Counts(TfidfModel),
    Tfidf(TfidfModel),
    Word2vec(EmbeddingTable),
    Tokens(TokenVocab),
}

/// Preprocessing settings plus the fitted feature state.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePipeline {
    pub pipeline: Pipeline,
    pub retained: String,
    pub state: FeatureState,
    preprocessor: Preprocessor,
}

impl FeaturePipeline {
    pub fn new(pipeline: Pipeline, retained: &str, state: FeatureState) -> Self {
        FeaturePipeline {
            pipeline,
            retained: retained.to_string(),
            state,
            preprocessor: Preprocessor::new(retained),
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self.state {
            FeatureState::Counts(_) | FeatureState::Tfidf(_) => FeatureKind::Tfidf,
            FeatureState::Word2vec(_) => FeatureKind::Word2vec,
            FeatureState::Tokens(_) => FeatureKind::Tokens,
        }
    }

    pub fn fit(cfg: &ExperimentConfig, model: ModelKind, features: FeatureKind, texts: &[&str]) -> Result<Self> {
        check_pair(model, features)?;
        let pipeline = cfg.preprocess.pipeline_for(features);
        let pre = Preprocessor::new(&cfg.preprocess.retained);
        let docs: Vec<TokenSequence> = texts.iter().map(|t| pre.tokenize(t, pipeline)).collect();
        let state = match features {
            FeatureKind::Tfidf => {
                let m = fit_tfidf(&docs, cfg.tfidf.min_count)?;
                if model == ModelKind::NaiveBayes {
                    FeatureState::Counts(m)
                } else {
                    FeatureState::Tfidf(m)
                }
            }
            FeatureKind::Word2vec => FeatureState::Word2vec(train_word2vec(&docs, &cfg.word2vec)?),
            FeatureKind::Tokens => FeatureState::Tokens(TokenVocab::build(&docs, cfg.encoder.train.min_count)),
        };
        Ok(FeaturePipeline::new(pipeline, &cfg.preprocess.retained, state))
    }

    /// Same vocabulary, switched between count and tf-idf output.
    pub fn for_model(&self, model: ModelKind) -> Self {
        let state = match (&self.state, model) {
            (FeatureState::Tfidf(m), ModelKind::NaiveBayes) => FeatureState::Counts(m.clone()),
            (FeatureState::Counts(m), other) if other != ModelKind::NaiveBayes => FeatureState::Tfidf(m.clone()),
            (s, _) => s.clone(),
        };
        FeaturePipeline::new(self.pipeline, &self.retained, state)
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        self.preprocessor.tokenize(text, self.pipeline)
    }

    pub fn tokenize_all(&self, texts: &[&str]) -> Vec<TokenSequence> {
        texts.iter().map(|t| self.tokenize(t)).collect()
    }

    pub fn dim(&self) -> usize {
        match &self.state {
            FeatureState::Counts(m) | FeatureState::Tfidf(m) => m.dim(),
            FeatureState::Word2vec(t) => t.dim(),
            FeatureState::Tokens(v) => v.len(),
        }
    }

    /// Vectorizes tokenized documents. Token features have no matrix form.
    pub fn matrix(&self, docs: &[TokenSequence]) -> Result<FeatureMatrix> {
        match &self.state {
            FeatureState::Counts(m) => {
                FeatureMatrix::sparse(m.dim(), docs.iter().map(|d| m.transform_counts(d)).collect())
            }
            FeatureState::Tfidf(m) => FeatureMatrix::sparse(m.dim(), docs.iter().map(|d| m.transform(d)).collect()),
            FeatureState::Word2vec(t) => FeatureMatrix::dense(t.dim(), docs.iter().map(|d| embed_mean(t, d)).collect()),
            FeatureState::Tokens(_) => Err(Error::domain("token features are consumed by the encoder directly")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    NaiveBayes(NaiveBayesModel),
    Linear(LinearModel),
    Forest(ForestModel),
    Boost(BoostedModel),
    Encoder(EncoderModel),
}

/// A predicted label with the score it came from: FAKE posterior for naive
/// Bayes and trees, margin for linear models, logit gap for the encoder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextClassifier {
    pub model_kind: ModelKind,
    pub features: FeaturePipeline,
    pub model: Model,
}

impl TextClassifier {
    pub fn fit(
        cfg: &ExperimentConfig,
        model: ModelKind,
        features: FeatureKind,
        texts: &[&str],
        labels: &[Label],
    ) -> Result<(Self, TrainLog)> {
        let pipeline = FeaturePipeline::fit(cfg, model, features, texts)?;
        let docs = pipeline.tokenize_all(texts);
        Self::fit_prepared(cfg, model, pipeline, &docs, None, labels)
    }

    /// Fits the model on an already fitted feature pipeline. `matrix`, when
    /// given, must be `pipeline.matrix(docs)`.
    pub fn fit_prepared(
        cfg: &ExperimentConfig,
        model: ModelKind,
        pipeline: FeaturePipeline,
        docs: &[TokenSequence],
        matrix: Option<&FeatureMatrix>,
        labels: &[Label],
    ) -> Result<(Self, TrainLog)> {
        check_pair(model, pipeline.kind())?;
        let pipeline = pipeline.for_model(model);
        let fitted = match (&pipeline.state, model) {
            (FeatureState::Tokens(vocab), ModelKind::Encoder) => {
                let (m, log) = train_encoder_with_vocab(&cfg.encoder.model, vocab, docs, labels, &cfg.encoder.train)?;
                (Model::Encoder(m), log)
            }
            _ => {
                let owned;
                let x = match matrix {
                    Some(x) => x,
                    None => {
                        owned = pipeline.matrix(docs)?;
                        &owned
                    }
                };
                fit_on_matrix(cfg, model, pipeline.kind(), x, labels)?
            }
        };
        Ok((
            TextClassifier {
                model_kind: model,
                features: pipeline,
                model: fitted.0,
            },
            fitted.1,
        ))
    }

    pub fn feature_kind(&self) -> FeatureKind {
        self.features.kind()
    }

    pub fn predict(&self, texts: &[&str]) -> Result<Vec<Prediction>> {
        let docs = self.features.tokenize_all(texts);
        self.predict_docs(&docs)
    }

    pub fn predict_docs(&self, docs: &[TokenSequence]) -> Result<Vec<Prediction>> {
        if let (Model::Encoder(m), FeatureState::Tokens(vocab)) = (&self.model, &self.features.state) {
            return Ok(encoder_predict(m, docs, vocab)
                .into_iter()
                .map(|(label, z)| Prediction {
                    label,
                    score: z[0] - z[1],
                })
                .collect());
        }
        let x = self.features.matrix(docs)?;
        self.predict_matrix(&x)
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Prediction>> {
        x.rows()
            .map(|row| {
                let (label, score) = match &self.model {
                    Model::NaiveBayes(m) => {
                        let (label, posterior) = nb_predict(m, row)?;
                        (label, posterior[0])
                    }
                    Model::Linear(m) => linear_predict(m, row)?,
                    Model::Forest(m) => ensemble_predict(m, row)?,
                    Model::Boost(m) => ensemble_predict(m, row)?,
                    Model::Encoder(_) => return Err(Error::domain("the encoder does not take feature matrices")),
                };
                Ok(Prediction { label, score })
            })
            .collect()
    }
}

fn fit_on_matrix(
    cfg: &ExperimentConfig,
    model: ModelKind,
    features: FeatureKind,
    x: &FeatureMatrix,
    y: &[Label],
) -> Result<(Model, TrainLog)> {
    Ok(match model {
        ModelKind::NaiveBayes => (
            Model::NaiveBayes(nb_fit(x, y, cfg.naive_bayes.alpha)?),
            TrainLog::default(),
        ),
        ModelKind::Logreg => {
            let (m, log) = logreg_fit(x, y, &cfg.logreg)?;
            (Model::Linear(m), log)
        }
        ModelKind::Svm => {
            let (m, log) = svm_fit(x, y, &cfg.svm)?;
            (Model::Linear(m), log)
        }
        ModelKind::Forest => (
            Model::Forest(forest_fit(x, y, &cfg.forest.params(features, cfg.seed))?),
            TrainLog::default(),
        ),
        ModelKind::Boost => {
            let (m, log) = boost_fit(x, y, &cfg.boost)?;
            (Model::Boost(m), log)
        }
        ModelKind::Encoder => return Err(Error::domain("the encoder trains on token features")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        for k in [FeatureKind::Tfidf, FeatureKind::Word2vec, FeatureKind::Tokens] {
            assert_eq!(k.as_str().parse::<FeatureKind>().unwrap(), k);
        }
        assert!(matches!("bayes".parse::<ModelKind>(), Err(Error::Config(_))));
    }

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.word2vec.dim = 16;
        c.word2vec.min_count = 1;
        c.forest.n_trees = 10;
        c.boost.rounds = 20;
        c.encoder.model.d_model = 16;
        c.encoder.model.d_ff = 32;
        c.encoder.train.epochs = 5;
        c.encoder.train.min_count = 1;
        c
    }

    #[test]
    fn pair_rules() {
        assert!(check_pair(ModelKind::NaiveBayes, FeatureKind::Tfidf).is_ok());
        assert!(check_pair(ModelKind::Svm, FeatureKind::Word2vec).is_ok());
        assert!(check_pair(ModelKind::Encoder, FeatureKind::Tokens).is_ok());
        for (m, f) in [
            (ModelKind::NaiveBayes, FeatureKind::Word2vec),
            (ModelKind::Encoder, FeatureKind::Tfidf),
            (ModelKind::Svm, FeatureKind::Tokens),
        ] {
            let e = check_pair(m, f).unwrap_err();
            assert_eq!(e.exit_code(), 3);
        }
    }

    #[test]
    fn every_pair_fits_separable_texts() {
        let data = fixtures::separable_texts();
        let texts: Vec<&str> = data.iter().map(|(t, _)| t.as_str()).collect();
        let labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
        let cfg = small_config();
        for (model, features) in [
            (ModelKind::NaiveBayes, FeatureKind::Tfidf),
            (ModelKind::Logreg, FeatureKind::Tfidf),
            (ModelKind::Svm, FeatureKind::Tfidf),
            (ModelKind::Forest, FeatureKind::Tfidf),
            (ModelKind::Boost, FeatureKind::Tfidf),
        ] {
            let (clf, _) = TextClassifier::fit(&cfg, model, features, &texts, &labels).unwrap();
            let pred: Vec<Label> = clf.predict(&texts).unwrap().iter().map(|p| p.label).collect();
            assert_eq!(pred, labels, "{model:?}/{features:?}");
        }
        for (model, features) in [
            (ModelKind::Logreg, FeatureKind::Word2vec),
            (ModelKind::Forest, FeatureKind::Word2vec),
            (ModelKind::Svm, FeatureKind::Word2vec),
            (ModelKind::Boost, FeatureKind::Word2vec),
            (ModelKind::Encoder, FeatureKind::Tokens),
        ] {
            let (clf, _) = TextClassifier::fit(&cfg, model, features, &texts, &labels).unwrap();
            let pred = clf.predict(&texts).unwrap();
            assert_eq!(pred.len(), texts.len());
            assert_eq!(clf.feature_kind(), features);
        }
    }

    #[test]
    fn nb_uses_counts() {
        let data = fixtures::separable_texts();
        let texts: Vec<&str> = data.iter().map(|(t, _)| t.as_str()).collect();
        let cfg = ExperimentConfig::default();
        let p = FeaturePipeline::fit(&cfg, ModelKind::NaiveBayes, FeatureKind::Tfidf, &texts).unwrap();
        assert!(matches!(p.state, FeatureState::Counts(_)));
        let docs = p.tokenize_all(&["garlic garlic cure"]);
        let x = p.matrix(&docs).unwrap();
        let mut values = Vec::new();
        x.row(0).for_each(|_, v| values.push(v));
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![1.0, 2.0]);
        assert!(matches!(p.for_model(ModelKind::Svm).state, FeatureState::Tfidf(_)));
    }

    #[test]
    fn empty_text_predicts_without_error() {
        let data = fixtures::separable_texts();
        let texts: Vec<&str> = data.iter().map(|(t, _)| t.as_str()).collect();
        let labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
        let cfg = small_config();
        for (model, features) in [
            (ModelKind::NaiveBayes, FeatureKind::Tfidf),
            (ModelKind::Svm, FeatureKind::Word2vec),
            (ModelKind::Encoder, FeatureKind::Tokens),
        ] {
            let (clf, _) = TextClassifier::fit(&cfg, model, features, &texts, &labels).unwrap();
            assert_eq!(clf.predict(&["", "   ", "the and of"]).unwrap().len(), 3);
        }
    }
}
