//! Confusion counts, F1 metrics and the experiment runner.
//!
//! FAKE is the positive class throughout.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::{Cell, EvalSplit, ExperimentConfig};
use crate::corpus::{combine_and_split, load_dataset, Corpus, DataFormat, Label, SplitSpec, TokenSequence};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::pipeline::{FeatureKind, FeaturePipeline, TextClassifier};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(pred: &[Label], gold: &[Label]) -> Result<ConfusionMatrix> {
    if pred.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::domain("no samples to evaluate"));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, g) in pred.iter().zip(gold) {
        match (p, g) {
            (Label::Fake, Label::Fake) => cm.tp += 1,
            (Label::Fake, Label::Real) => cm.fp += 1,
            (Label::Real, Label::Fake) => cm.fn_ += 1,
            (Label::Real, Label::Real) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1_positive: f64,
    /// F1 of the REAL class.
    pub f1_negative: f64,
    pub f1_weighted: f64,
    pub confusion: ConfusionMatrix,
}

/// `a / b`, with `0 / 0 = 0`.
fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let [tp, fp, fn_, tn] = [cm.tp, cm.fp, cm.fn_, cm.tn].map(|v| v as f64);
    let total = tp + fp + fn_ + tn;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1_positive = f1(precision, recall);
    let f1_negative = f1(ratio(tn, tn + fn_), ratio(tn, tn + fp));
    let f1_weighted = ratio((tp + fn_) * f1_positive + (tn + fp) * f1_negative, total);
    MetricsReport {
        accuracy: ratio(tp + tn, total),
        precision,
        recall,
        f1_positive,
        f1_negative,
        f1_weighted,
        confusion: *cm,
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.confusion;
        writeln!(f, "positive class: FAKE")?;
        writeln!(f, "accuracy\t{:.4}", self.accuracy)?;
        writeln!(f, "f1_weighted\t{:.4}", self.f1_weighted)?;
        writeln!(f, "f1_positive\t{:.4}", self.f1_positive)?;
        writeln!(f, "precision\t{:.4}", self.precision)?;
        writeln!(f, "recall\t{:.4}", self.recall)?;
        writeln!(f, "confusion\tpred FAKE\tpred REAL")?;
        writeln!(f, "gold FAKE\t{}\t{}", c.tp, c.fn_)?;
        write!(f, "gold REAL\t{}\t{}", c.fp, c.tn)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub cell: Cell,
    pub metrics: MetricsReport,
    /// Wall-clock seconds for fitting and predicting, when recorded.
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub split: EvalSplit,
    pub seed: u64,
    pub config_snapshot: String,
    pub rows: Vec<ResultRow>,
}

pub const CSV_HEADER: &str = "method,features,accuracy,f1_weighted,f1_positive,seconds";

impl ResultsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let seconds = r.seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{}",
                r.cell.model.method_name(),
                r.cell.features.as_str(),
                r.metrics.accuracy,
                r.metrics.f1_weighted,
                r.metrics.f1_positive,
                seconds
            )
            .unwrap();
        }
        out
    }

    /// Aligned table, one section per feature kind, followed by the
    /// configuration that produced it.
    pub fn to_text(&self) -> String {
        let mut out = self.summary();
        writeln!(out, "#\n# configuration").unwrap();
        for line in self.config_snapshot.lines() {
            writeln!(out, "# {line}").unwrap();
        }
        out
    }

    /// The aligned table alone.
    pub fn summary(&self) -> String {
        let name = |r: &ResultRow| format!("{}({})", r.cell.model.method_name(), r.cell.features.display_name());
        let width = self
            .rows
            .iter()
            .map(|r| name(r).len())
            .max()
            .unwrap_or(0)
            .max("Method".len());
        let mut out = String::new();
        writeln!(
            out,
            "# split: {}  seed: {}  positive class: FAKE",
            self.split.as_str(),
            self.seed
        )
        .unwrap();
        let header = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
            "Method", "Accuracy", "F1", "F1(FAKE)", "Seconds"
        );
        writeln!(out, "{header}").unwrap();
        writeln!(out, "{}", "-".repeat(header.len())).unwrap();
        let mut last: Option<FeatureKind> = None;
        for r in &self.rows {
            if last.is_some_and(|f| f != r.cell.features) {
                writeln!(out, "{}", "-".repeat(header.len())).unwrap();
            }
            last = Some(r.cell.features);
            let seconds = r.seconds.map(|s| format!("{s:.3}")).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}  {:>8}",
                name(r),
                r.metrics.accuracy,
                r.metrics.f1_weighted,
                r.metrics.f1_positive,
                seconds
            )
            .unwrap();
        }
        out
    }
}

fn load(path: Option<&Path>, key: &str, format: Option<DataFormat>) -> Result<Corpus> {
    let path = path.ok_or_else(|| Error::Config(format!("data.{key} is not set")))?;
    load_dataset(path, format.unwrap_or_else(|| DataFormat::from_path(path)))
}

/// Training corpus (first part of the resplit pool) and evaluation corpus.
pub fn experiment_corpora(config: &ExperimentConfig) -> Result<(Corpus, Corpus)> {
    let d = &config.data;
    let train = load(d.train.as_deref(), "train", d.format)?;
    let validation = load(d.validation.as_deref(), "validation", d.format)?;
    let spec = SplitSpec::new(config.split.ratio, config.split_seed())?;
    let (fit, held_out) = combine_and_split(&train, &validation, &spec)?;
    let eval = match config.experiment.evaluate_on {
        EvalSplit::Validation => held_out,
        EvalSplit::Test => load(d.test.as_deref(), "test", d.format)?,
    };
    Ok((fit, eval))
}

struct Prepared {
    pipeline: FeaturePipeline,
    train_docs: Vec<TokenSequence>,
    eval_docs: Vec<TokenSequence>,
    train_x: Option<FeatureMatrix>,
    eval_x: Option<FeatureMatrix>,
}

/// Runs every configured cell on the given corpora, in configuration order.
/// Feature pipelines are fitted once per feature kind on the training corpus
/// and shared across cells.
pub fn run_on_corpora(config: &ExperimentConfig, train: &Corpus, eval: &Corpus) -> Result<ResultsTable> {
    let train_texts: Vec<&str> = train.texts().collect();
    let eval_texts: Vec<&str> = eval.texts().collect();
    let y = train.labels();
    let gold = eval.labels();
    let mut prepared: HashMap<FeatureKind, Prepared> = HashMap::new();
    let mut rows = Vec::with_capacity(config.experiment.cells.len());
    for &cell in &config.experiment.cells {
        crate::pipeline::check_pair(cell.model, cell.features).map_err(|e| Error::Config(e.to_string()))?;
        let p = match prepared.entry(cell.features) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let pipeline = FeaturePipeline::fit(config, cell.model, cell.features, &train_texts)?;
                let train_docs = pipeline.tokenize_all(&train_texts);
                let eval_docs = pipeline.tokenize_all(&eval_texts);
                e.insert(Prepared {
                    pipeline,
                    train_docs,
                    eval_docs,
                    train_x: None,
                    eval_x: None,
                })
            }
        };
        let cell_pipeline = p.pipeline.for_model(cell.model);
        let counts = cell.model == crate::pipeline::ModelKind::NaiveBayes;
        let start = Instant::now();
        let predictions = if cell.features == FeatureKind::Tokens || counts {
            let (clf, _) = TextClassifier::fit_prepared(config, cell.model, cell_pipeline, &p.train_docs, None, &y)?;
            clf.predict_docs(&p.eval_docs)?
        } else {
            if p.train_x.is_none() {
                p.train_x = Some(cell_pipeline.matrix(&p.train_docs)?);
                p.eval_x = Some(cell_pipeline.matrix(&p.eval_docs)?);
            }
            let (clf, _) =
                TextClassifier::fit_prepared(config, cell.model, cell_pipeline, &p.train_docs, p.train_x.as_ref(), &y)?;
            clf.predict_matrix(p.eval_x.as_ref().expect("set with train_x"))?
        };
        let seconds = start.elapsed().as_secs_f64();
        let pred: Vec<Label> = predictions.iter().map(|p| p.label).collect();
        let report = metrics(&confusion(&pred, &gold)?);
        log::info!(
            "{}({}): accuracy {:.4}, f1 {:.4}, {:.1}s",
            cell.model.method_name(),
            cell.features.display_name(),
            report.accuracy,
            report.f1_weighted,
            seconds
        );
        rows.push(ResultRow {
            cell,
            metrics: report,
            seconds: config.experiment.record_seconds.then_some(seconds),
        });
    }
    Ok(ResultsTable {
        split: config.experiment.evaluate_on,
        seed: config.seed,
        config_snapshot: config.to_toml(),
        rows,
    })
}

/// Loads the configured data and runs every cell. With no cells, no data is
/// read and the table is empty.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    if config.experiment.cells.is_empty() {
        return Ok(ResultsTable {
            split: config.experiment.evaluate_on,
            seed: config.seed,
            config_snapshot: config.to_toml(),
            rows: Vec::new(),
        });
    }
    let (train, eval) = experiment_corpora(config)?;
    run_on_corpora(config, &train, &eval)
}
