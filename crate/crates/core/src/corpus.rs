//! Dataset loading, the two tokenization regimes, corpus statistics and the
//! stratified train/validation resplit.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The stopword list shipped with the toolkit, one token per line.
pub const STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Characters kept by the classic pipeline besides `a-z` and `0-9`.
pub const DEFAULT_RETAINED: &str = "#@'";

/// Gold label of a post. FAKE is the positive class everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Fake, Label::Real];

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// 1.0 for FAKE, 0.0 for REAL.
    pub fn target(self) -> f64 {
        if self.is_fake() {
            1.0
        } else {
            0.0
        }
    }

    /// +1.0 for FAKE, -1.0 for REAL.
    pub fn sign(self) -> f64 {
        if self.is_fake() {
            1.0
        } else {
            -1.0
        }
    }

    /// Decision rule shared by every scored classifier: FAKE only on a
    /// strictly positive score.
    pub fn from_score(score: f64) -> Label {
        if score > 0.0 {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Real => "real",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fake" => Ok(Label::Fake),
            "real" => Ok(Label::Real),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPost {
    pub id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub posts: Vec<LabeledPost>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, posts: Vec<LabeledPost>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(posts.len());
        for post in &posts {
            if !seen.insert(post.id.as_str()) {
                return Err(Error::domain(format!("duplicate post id {:?}", post.id)));
            }
        }
        Ok(Corpus {
            name: name.into(),
            posts,
        })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.posts.iter().filter(|p| p.label == label).count()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.posts.iter().map(|p| p.text.as_str())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.posts.iter().map(|p| p.label).collect()
    }
}

/// A post read for prediction: the label column is optional and ignored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlabeledPost {
    pub id: String,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    /// Lowercase, symbols to spaces, stopwords removed.
    Classic,
    /// Whitespace split only.
    Raw,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Classic => "classic",
            Pipeline::Raw => "raw",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub pipeline: Pipeline,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn default_stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| parse_stopwords(STOPWORDS))
}

pub fn parse_stopwords(list: &str) -> HashSet<String> {
    list.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hex SHA-256 of the shipped stopword list, recorded in model artifacts.
pub fn stopwords_hash() -> String {
    hex::encode(Sha256::digest(STOPWORDS.as_bytes()))
}

/// Tokenizer with a configurable retained-symbol set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preprocessor {
    retained: Vec<char>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor::new(DEFAULT_RETAINED)
    }
}

impl Preprocessor {
    /// `retained` lists symbols kept by the classic pipeline in addition to
    /// ASCII lowercase letters and digits.
    pub fn new(retained: &str) -> Self {
        Preprocessor {
            retained: retained.chars().collect(),
        }
    }

    fn keeps(&self, c: char) -> bool {
        c.is_ascii_lowercase() || c.is_ascii_digit() || self.retained.contains(&c)
    }

    pub fn tokenize(&self, text: &str, pipeline: Pipeline) -> TokenSequence {
        let tokens = match pipeline {
            Pipeline::Raw => text.split_whitespace().map(str::to_string).collect(),
            Pipeline::Classic => {
                let cleaned: String = text
                    .to_lowercase()
                    .chars()
                    .map(|c| if self.keeps(c) { c } else { ' ' })
                    .collect();
                let stopwords = default_stopwords();
                cleaned
                    .split_whitespace()
                    .filter(|t| !stopwords.contains(*t))
                    .map(str::to_string)
                    .collect()
            }
        };
        TokenSequence { tokens, pipeline }
    }
}

/// Tokenize with the default retained-symbol set.
pub fn preprocess(text: &str, pipeline: Pipeline) -> TokenSequence {
    Preprocessor::default().tokenize(text, pipeline)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub fake_count: usize,
    pub real_count: usize,
    pub avg_words: f64,
    pub max_words: usize,
    pub min_words: usize,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples\t{}", self.sample_count)?;
        writeln!(f, "fake\t{}", self.fake_count)?;
        writeln!(f, "real\t{}", self.real_count)?;
        writeln!(f, "avg_words\t{:.3}", self.avg_words)?;
        writeln!(f, "max_words\t{}", self.max_words)?;
        write!(f, "min_words\t{}", self.min_words)
    }
}

pub fn corpus_stats(corpus: &Corpus, pipeline: Pipeline) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::domain("corpus statistics need at least one post"));
    }
    let pre = Preprocessor::default();
    let counts: Vec<usize> = corpus
        .posts
        .iter()
        .map(|p| pre.tokenize(&p.text, pipeline).len())
        .collect();
    let total: usize = counts.iter().sum();
    Ok(CorpusStats {
        sample_count: corpus.len(),
        fake_count: corpus.count(Label::Fake),
        real_count: corpus.count(Label::Real),
        avg_words: total as f64 / counts.len() as f64,
        max_words: counts.iter().copied().max().unwrap_or(0),
        min_words: counts.iter().copied().min().unwrap_or(0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Tsv,
    Csv,
}

impl DataFormat {
    /// `.tsv`/`.tab` files are tab separated, everything else is CSV.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "tsv" || ext == "tab" => DataFormat::Tsv,
            _ => DataFormat::Csv,
        }
    }
}

struct Columns {
    id: usize,
    text: usize,
    label: Option<usize>,
    width: usize,
}

fn open_reader(path: &Path, format: DataFormat) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = csv::ReaderBuilder::new();
    builder.has_headers(true).flexible(true);
    match format {
        DataFormat::Csv => builder.delimiter(b','),
        DataFormat::Tsv => builder.delimiter(b'\t').quoting(false),
    };
    Ok(builder.from_reader(file))
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Parse {
            line,
            message: e.to_string(),
        },
        csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
            line,
            message: format!("invalid UTF-8: {err}"),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn header_columns(reader: &mut csv::Reader<std::fs::File>, need_label: bool) -> Result<Columns> {
    let headers = reader.headers().map_err(csv_error)?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let missing = |name: &str| Error::Parse {
        line: 1,
        message: format!("header has no {name} column"),
    };
    let id = find(&["id"]).ok_or_else(|| missing("id"))?;
    let text = find(&["tweet", "text"]).ok_or_else(|| missing("tweet"))?;
    let label = find(&["label"]);
    if need_label && label.is_none() {
        return Err(missing("label"));
    }
    Ok(Columns {
        id,
        text,
        label,
        width: headers.len(),
    })
}

/// Read a labeled dataset. Rows keep file order; labels are case-insensitive.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Corpus> {
    let mut reader = open_reader(path, format)?;
    let cols = header_columns(&mut reader, true)?;
    let label_col = cols.label.expect("checked by header_columns");
    let mut posts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != cols.width {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", cols.width, record.len()),
            });
        }
        let text = record[cols.text].to_string();
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty post text".into(),
            });
        }
        let label = record[label_col]
            .parse::<Label>()
            .map_err(|value| Error::Label { line, value })?;
        posts.push(LabeledPost {
            id: record[cols.id].to_string(),
            text,
            label,
        });
    }
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    Corpus::new(name, posts)
}

/// Read posts for prediction. Empty texts are allowed here.
pub fn load_unlabeled(path: &Path, format: DataFormat) -> Result<Vec<UnlabeledPost>> {
    let mut reader = open_reader(path, format)?;
    let cols = header_columns(&mut reader, false)?;
    let mut posts = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != cols.width {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", cols.width, record.len()),
            });
        }
        posts.push(UnlabeledPost {
            id: record[cols.id].to_string(),
            text: record[cols.text].to_string(),
        });
    }
    Ok(posts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::domain(format!("split ratio {ratio} is not in (0, 1)")));
        }
        Ok(SplitSpec { ratio, seed })
    }
}

// Guards against 0.9 * 4080 landing a hair under 3672.
fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Merge two corpora and split them again, stratified by label.
///
/// Ids are namespaced by source corpus (`train/17`, `validation/17`). Each
/// label keeps `floor(ratio * n_label)` posts on the first side; if the
/// overall `floor(ratio * n)` is larger than the sum of the per-label
/// shares, the remainder goes to the first side, FAKE before REAL. Both
/// outputs preserve the merged input order.
pub fn combine_and_split(train: &Corpus, validation: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    SplitSpec::new(spec.ratio, spec.seed)?;
    let tag = |c: &Corpus, fallback: &str| {
        if c.name.is_empty() {
            fallback.to_string()
        } else {
            c.name.clone()
        }
    };
    let (train_tag, mut val_tag) = (tag(train, "train"), tag(validation, "validation"));
    if train_tag == val_tag {
        val_tag.push_str("-2");
    }
    let merged: Vec<LabeledPost> = train
        .posts
        .iter()
        .map(|p| (&train_tag, p))
        .chain(validation.posts.iter().map(|p| (&val_tag, p)))
        .map(|(tag, p)| LabeledPost {
            id: format!("{tag}/{}", p.id),
            text: p.text.clone(),
            label: p.label,
        })
        .collect();

    let by_label: Vec<Vec<usize>> = Label::ALL
        .iter()
        .map(|&l| (0..merged.len()).filter(|&i| merged[i].label == l).collect())
        .collect();
    let mut shares: Vec<usize> = by_label.iter().map(|idx| floor_share(spec.ratio, idx.len())).collect();
    let mut remainder = floor_share(spec.ratio, merged.len()).saturating_sub(shares.iter().sum());
    for (share, idx) in shares.iter_mut().zip(&by_label) {
        if remainder > 0 && *share < idx.len() {
            *share += 1;
            remainder -= 1;
        }
    }
    for (label, (share, idx)) in Label::ALL.iter().zip(shares.iter().zip(&by_label)) {
        if *share == 0 || *share == idx.len() {
            return Err(Error::domain(format!(
                "ratio {} leaves one side without {label} posts ({} available)",
                spec.ratio,
                idx.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut first = vec![false; merged.len()];
    for (mut idx, share) in by_label.into_iter().zip(shares) {
        idx.shuffle(&mut rng);
        for &i in &idx[..share] {
            first[i] = true;
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (post, in_first) in merged.into_iter().zip(first) {
        if in_first {
            a.push(post);
        } else {
            b.push(post);
        }
    }
    Ok((Corpus::new("train", a)?, Corpus::new("validation", b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn toy(n_fake: usize, n_real: usize, name: &str) -> Corpus {
        let posts = (0..n_fake + n_real)
            .map(|i| LabeledPost {
                id: i.to_string(),
                text: format!("post {i}"),
                label: if i < n_fake { Label::Fake } else { Label::Real },
            })
            .collect();
        Corpus::new(name, posts).unwrap()
    }

    #[test]
    fn classic_example() {
        let t = preprocess("The CDC currently reports 99031 deaths.", Pipeline::Classic);
        assert_eq!(t.tokens, ["cdc", "currently", "reports", "99031", "deaths"]);
    }

    #[test]
    fn raw_keeps_everything() {
        let t = preprocess("Check https://t.co/x #coronavirus", Pipeline::Raw);
        assert_eq!(t.tokens, ["Check", "https://t.co/x", "#coronavirus"]);
    }

    #[test]
    fn classic_symbols_only() {
        assert!(preprocess("!!! ???", Pipeline::Classic).is_empty());
    }

    #[test]
    fn classic_keeps_sigils() {
        let t = preprocess("@WHO says #COVID19 isn't gone", Pipeline::Classic);
        assert_eq!(t.tokens, ["@who", "says", "#covid19", "gone"]);
    }

    #[test]
    fn configurable_alphabet() {
        let t = Preprocessor::new("").tokenize("#covid @cdc", Pipeline::Classic);
        assert_eq!(t.tokens, ["covid", "cdc"]);
    }

    #[test]
    fn stopword_list_is_stable() {
        assert_eq!(parse_stopwords(STOPWORDS).len(), 179);
        assert_eq!(stopwords_hash().len(), 64);
    }

    #[test]
    fn load_csv_with_quotes() {
        let f = write_file(
            ".csv",
            "id,tweet,label\n1,\"hello, world\",REAL\n2,\"multi\nline\",Fake\n",
        );
        let c = load_dataset(f.path(), DataFormat::Csv).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.posts[0].text, "hello, world");
        assert_eq!(c.posts[1].label, Label::Fake);
    }

    #[test]
    fn load_header_only() {
        let f = write_file(".tsv", "id\ttweet\tlabel\n");
        let c = load_dataset(f.path(), DataFormat::Tsv).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn load_wrong_column_count_names_line() {
        let f = write_file(".tsv", "id\ttweet\tlabel\n1\ta\treal\n2\tb\n");
        match load_dataset(f.path(), DataFormat::Tsv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_unknown_label_names_value() {
        let f = write_file(".tsv", "id\ttweet\tlabel\n1\ta\tmaybe\n");
        let err = load_dataset(f.path(), DataFormat::Tsv).unwrap_err();
        assert!(matches!(&err, Error::Label { value, .. } if value == "maybe"));
        assert!(err.to_string().contains("maybe"));
    }

    #[test]
    fn load_missing_file() {
        let err = load_dataset(Path::new("/no/such/file.tsv"), DataFormat::Tsv).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.tsv"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_file(".tsv", "id\ttweet\tlabel\n1\ta\treal\n1\tb\tfake\n");
        assert!(load_dataset(f.path(), DataFormat::Tsv).is_err());
    }

    #[test]
    fn unlabeled_allows_empty_text_and_missing_label() {
        let f = write_file(".tsv", "id\ttweet\n1\t\n2\thi\n");
        let posts = load_unlabeled(f.path(), DataFormat::Tsv).unwrap();
        assert_eq!(posts.len(), 2);
        assert_eq!(posts[0].text, "");
    }

    #[test]
    fn stats_single_post() {
        let c = Corpus::new(
            "x",
            vec![LabeledPost {
                id: "1".into(),
                text: "a b c".into(),
                label: Label::Real,
            }],
        )
        .unwrap();
        let s = corpus_stats(&c, Pipeline::Raw).unwrap();
        assert_eq!((s.avg_words, s.max_words, s.min_words), (3.0, 3, 3));
        assert_eq!((s.fake_count, s.real_count), (0, 1));
    }

    #[test]
    fn stats_empty_is_error() {
        assert!(corpus_stats(&Corpus::default(), Pipeline::Raw).is_err());
    }

    #[test]
    fn split_official_sizes() {
        // Published counts: train 3060/3360, validation 1020/1120.
        let train = {
            let mut c = toy(3060, 3360, "train");
            c.posts.rotate_left(100);
            c
        };
        let val = toy(1020, 1120, "validation");
        let (a, b) = combine_and_split(&train, &val, &SplitSpec::new(0.9, 42).unwrap()).unwrap();
        assert_eq!((a.len(), b.len()), (7704, 856));
        assert_eq!((a.count(Label::Fake), a.count(Label::Real)), (3672, 4032));
        assert_eq!((b.count(Label::Fake), b.count(Label::Real)), (408, 448));
    }

    #[test]
    fn split_toy_half() {
        let (a, b) = combine_and_split(
            &toy(6, 4, "train"),
            &toy(4, 6, "validation"),
            &SplitSpec::new(0.5, 7).unwrap(),
        )
        .unwrap();
        assert_eq!((a.count(Label::Fake), a.count(Label::Real)), (5, 5));
        assert_eq!((b.count(Label::Fake), b.count(Label::Real)), (5, 5));
    }

    #[test]
    fn split_remainder_goes_first_fake_first() {
        // 6 fake + 6 real at 0.75: per-label floors 4 + 4, overall floor 9.
        let (a, b) = combine_and_split(
            &toy(6, 6, "train"),
            &Corpus::new("validation", vec![]).unwrap(),
            &SplitSpec::new(0.75, 1).unwrap(),
        )
        .unwrap();
        assert_eq!((a.count(Label::Fake), a.count(Label::Real)), (5, 4));
        assert_eq!((b.count(Label::Fake), b.count(Label::Real)), (1, 2));
    }

    #[test]
    fn split_rejects_empty_side() {
        let err = combine_and_split(
            &toy(1, 10, "train"),
            &toy(0, 0, "validation"),
            &SplitSpec::new(0.5, 1).unwrap(),
        );
        assert!(err.is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
        assert!(SplitSpec::new(0.0, 0).is_err());
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let (t, v) = (toy(30, 30, "train"), toy(10, 10, "validation"));
        let ids = |seed| {
            let (a, _) = combine_and_split(&t, &v, &SplitSpec::new(0.9, seed).unwrap()).unwrap();
            a.posts.into_iter().map(|p| p.id).collect::<Vec<_>>()
        };
        assert_eq!(ids(42), ids(42));
        assert_ne!(ids(42), ids(43));
    }
}
