//! Experiment configuration, read from TOML. Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DataFormat, Pipeline, DEFAULT_RETAINED};
use crate::encoder::{EncoderConfig, EncoderTrainParams};
use crate::error::{Error, Result};
use crate::features::Word2VecParams;
use crate::linear::{LogRegParams, SvmParams};
use crate::pipeline::{FeatureKind, ModelKind};
use crate::tree::{BoostParams, ForestParams};

pub const SEED_ENV: &str = "VERITEXT_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Inferred from each file's extension when absent.
    pub format: Option<DataFormat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub ratio: f64,
    /// Defaults to the global seed.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.9, seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Pipeline for tf-idf and word2vec features.
    pub features: Pipeline,
    /// Pipeline for the encoder's token features.
    pub encoder: Pipeline,
    /// Characters kept besides `[a-z0-9]` by the classic pipeline.
    pub retained: String,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            features: Pipeline::Classic,
            encoder: Pipeline::Raw,
            retained: DEFAULT_RETAINED.to_string(),
        }
    }
}

impl PreprocessConfig {
    pub fn pipeline_for(&self, features: FeatureKind) -> Pipeline {
        match features {
            FeatureKind::Tokens => self.encoder,
            FeatureKind::Tfidf | FeatureKind::Word2vec => self.features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TfidfConfig {
    pub min_count: usize,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig { min_count: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesConfig {
    pub alpha: f64,
}

impl Default for NaiveBayesConfig {
    fn default() -> Self {
        NaiveBayesConfig { alpha: 1.0 }
    }
}

/// Forest parameters; `tfidf_max_depth` replaces `max_depth` on tf-idf
/// features, where unbounded trees get slow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub tfidf_max_depth: Option<usize>,
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_leaf: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestConfig {
            n_trees: p.n_trees,
            max_depth: p.max_depth,
            tfidf_max_depth: Some(40),
            max_features: p.max_features,
            bootstrap: p.bootstrap,
            min_leaf: p.min_leaf,
        }
    }
}

impl ForestConfig {
    pub fn params(&self, features: FeatureKind, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: match features {
                FeatureKind::Tfidf => self.tfidf_max_depth,
                _ => self.max_depth,
            },
            max_features: self.max_features,
            bootstrap: self.bootstrap,
            min_leaf: self.min_leaf,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub model: EncoderConfig,
    pub train: EncoderTrainParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    /// Held-out part of the resplit train + validation pool.
    Validation,
    /// The official test file.
    Test,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Validation => "validation",
            EvalSplit::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub model: ModelKind,
    pub features: FeatureKind,
}

/// The nine baseline cells in the order of the published results table.
pub fn baseline_cells() -> Vec<Cell> {
    use FeatureKind::*;
    use ModelKind::*;
    let c = |model, features| Cell { model, features };
    vec![
        c(NaiveBayes, Tfidf),
        c(Logreg, Tfidf),
        c(Forest, Tfidf),
        c(Boost, Tfidf),
        c(Svm, Tfidf),
        c(Logreg, Word2vec),
        c(Forest, Word2vec),
        c(Boost, Word2vec),
        c(Svm, Word2vec),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub evaluate_on: EvalSplit,
    pub cells: Vec<Cell>,
    /// When false the `seconds` column is left empty, making result files
    /// reproducible byte for byte.
    pub record_seconds: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            evaluate_on: EvalSplit::Validation,
            cells: baseline_cells(),
            record_seconds: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub table: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            csv: PathBuf::from("results.csv"),
            table: PathBuf::from("results.txt"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub preprocess: PreprocessConfig,
    pub tfidf: TfidfConfig,
    pub word2vec: Word2VecParams,
    pub naive_bayes: NaiveBayesConfig,
    pub logreg: LogRegParams,
    pub svm: SvmParams,
    pub forest: ForestConfig,
    pub boost: BoostParams,
    pub encoder: EncoderSection,
    pub experiment: ExperimentSection,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = ExperimentConfig {
            seed: 42,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            preprocess: PreprocessConfig::default(),
            tfidf: TfidfConfig::default(),
            word2vec: Word2VecParams::default(),
            naive_bayes: NaiveBayesConfig::default(),
            logreg: LogRegParams::default(),
            svm: SvmParams::default(),
            forest: ForestConfig::default(),
            boost: BoostParams::default(),
            encoder: EncoderSection::default(),
            experiment: ExperimentSection::default(),
            output: OutputConfig::default(),
        };
        c.propagate_seed();
        c
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.propagate_seed();
        c.validate()?;
        Ok(c)
    }

    /// Reads the file and resolves relative data paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.data.train, &mut c.data.validation, &mut c.data.test]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Replaces the seed with `VERITEXT_SEED` when set. Returns the seed used
    /// from the environment, if any.
    pub fn apply_env_seed(&mut self) -> Result<Option<u64>> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed: u64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
                self.seed = seed;
                self.propagate_seed();
                self.validate()?;
                Ok(Some(seed))
            }
            Err(_) => Ok(None),
        }
    }

    /// The global seed drives every seeded component.
    pub fn propagate_seed(&mut self) {
        let s = self.seed;
        self.word2vec.seed = s;
        self.logreg.seed = s;
        self.svm.seed = s;
        self.boost.seed = s;
        self.encoder.model.seed = s;
        self.encoder.train.seed = s;
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, seed) in [("seed", self.seed), ("split.seed", self.split_seed())] {
            if i64::try_from(seed).is_err() {
                return Err(Error::Config(format!(
                    "{name} {seed} exceeds the supported range 0..=2^63-1"
                )));
            }
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split.ratio {} must lie in (0, 1)",
                self.split.ratio
            )));
        }
        for cell in &self.experiment.cells {
            crate::pipeline::check_pair(cell.model, cell.features).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
