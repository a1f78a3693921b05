use std::collections::{BTreeMap, HashMap, HashSet};

use super::SparseVector;
use crate::corpus::TokenSequence;
use crate::error::{Error, Result};

/// Token/index bijection with per-token document frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Tokens are kept in the order given; indices follow that order.
    pub fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Result<Self> {
        if tokens.len() != doc_freq.len() {
            return Err(Error::domain("vocabulary token and frequency lists differ in length"));
        }
        if let Some(&df) = doc_freq.iter().find(|&&df| df == 0 || df > n_docs) {
            return Err(Error::domain(format!("document frequency {df} outside [1, {n_docs}]")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            doc_freq,
            n_docs,
        })
    }

    /// Count document frequencies and keep tokens with `df >= min_count`,
    /// indexed in lexicographic order.
    pub fn build(docs: &[TokenSequence], min_count: usize) -> Self {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs {
            let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let (tokens, doc_freq): (Vec<String>, Vec<usize>) = df
            .into_iter()
            .filter(|&(_, n)| n >= min_count.max(1))
            .map(|(t, n)| (t.to_string(), n))
            .unzip();
        Vocabulary::from_parts(tokens, doc_freq, docs.len()).expect("counts are consistent")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn doc_freq(&self) -> &[usize] {
        &self.doc_freq
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }
}

/// Smoothed idf, raw term counts, L2 normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfModel {
    vocabulary: Vocabulary,
    idf: Vec<f64>,
}

pub fn fit_tfidf(docs: &[TokenSequence], min_count: usize) -> Result<TfidfModel> {
    if docs.is_empty() {
        return Err(Error::domain("cannot fit tf-idf on an empty corpus"));
    }
    Ok(TfidfModel::from_vocabulary(Vocabulary::build(docs, min_count)))
}

impl TfidfModel {
    /// idf(t) = ln((1 + N) / (1 + df(t))) + 1
    pub fn from_vocabulary(vocabulary: Vocabulary) -> Self {
        let n = vocabulary.n_docs() as f64;
        let idf = vocabulary
            .doc_freq()
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        TfidfModel { vocabulary, idf }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// Raw in-vocabulary term counts. This is what Naive Bayes consumes.
    pub fn transform_counts(&self, doc: &TokenSequence) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in &doc.tokens {
            if let Some(i) = self.vocabulary.get(t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        SparseVector::from_pairs(self.dim(), counts.into_iter().collect()).expect("indices come from the vocabulary")
    }

    /// Counts times idf, L2 normalized. Empty or all-OOV documents map to the
    /// zero vector.
    pub fn transform(&self, doc: &TokenSequence) -> SparseVector {
        let counts = self.transform_counts(doc);
        let weighted: Vec<(usize, f64)> = counts.iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = weighted.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector::zeros(self.dim());
        }
        SparseVector::from_pairs(self.dim(), weighted.into_iter().map(|(i, v)| (i, v / norm)).collect())
            .expect("indices come from the vocabulary")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pipeline;
    use proptest::prelude::*;

    fn doc(tokens: &[&str]) -> TokenSequence {
        TokenSequence {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            pipeline: Pipeline::Classic,
        }
    }

    #[test]
    fn idf_hand_values() {
        let m = fit_tfidf(&[doc(&["a", "b"]), doc(&["a"])], 1).unwrap();
        let v = m.vocabulary();
        assert_eq!(v.doc_freq(), &[2, 1]);
        assert_eq!(m.idf()[v.get("a").unwrap()], 1.0);
        // ln(3/2) + 1
        assert!((m.idf()[v.get("b").unwrap()] - 1.405_465_108_108_164_4).abs() < 1e-15);
    }

    #[test]
    fn idf_single_doc_and_ubiquitous_token() {
        let m = fit_tfidf(&[doc(&["a"])], 1).unwrap();
        assert_eq!(m.idf(), &[1.0]);
        let m = fit_tfidf(&[doc(&["x", "y"]), doc(&["x"]), doc(&["x", "x"])], 1).unwrap();
        assert_eq!(m.idf()[m.vocabulary().get("x").unwrap()], 1.0);
    }

    #[test]
    fn transform_hand_values() {
        let m = fit_tfidf(&[doc(&["a", "b"]), doc(&["a"])], 1).unwrap();
        let v = m.transform(&doc(&["a", "a", "b"]));
        let idf_b = 1.5f64.ln() + 1.0;
        let norm = (4.0 + idf_b * idf_b).sqrt();
        assert!((v.get(0) - 2.0 / norm).abs() < 1e-15);
        assert!((v.get(1) - idf_b / norm).abs() < 1e-15);
        assert!((v.get(0) - 0.818).abs() < 1e-3 && (v.get(1) - 0.575).abs() < 1e-3);
    }

    #[test]
    fn empty_and_oov_docs_are_zero() {
        let m = fit_tfidf(&[doc(&["a", "b"]), doc(&["a"])], 1).unwrap();
        assert_eq!(m.transform(&doc(&[])).nnz(), 0);
        let z = m.transform(&doc(&["zzz", "qqq"]));
        assert_eq!((z.nnz(), z.dim()), (0, 2));
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(fit_tfidf(&[], 1).is_err());
    }

    #[test]
    fn min_count_filters() {
        let m = fit_tfidf(&[doc(&["a", "b"]), doc(&["a"])], 2).unwrap();
        assert_eq!(m.vocabulary().tokens(), &["a"]);
    }

    proptest! {
        #[test]
        fn unit_norm_and_permutation_invariant(
            docs in prop::collection::vec(prop::collection::vec("[a-e]", 0..6), 1..8),
            query in prop::collection::vec("[a-g]", 0..8),
            rotate in 0usize..8,
        ) {
            let docs: Vec<TokenSequence> = docs.iter()
                .map(|d| doc(&d.iter().map(String::as_str).collect::<Vec<_>>())).collect();
            let m = fit_tfidf(&docs, 1).unwrap();
            let q = doc(&query.iter().map(String::as_str).collect::<Vec<_>>());
            let v = m.transform(&q);
            prop_assert!(v.nnz() == 0 || (v.norm() - 1.0).abs() < 1e-9);
            let mut permuted = q.clone();
            if !permuted.tokens.is_empty() {
                let k = rotate % permuted.tokens.len();
                permuted.tokens.rotate_left(k);
                permuted.tokens.reverse();
            }
            prop_assert_eq!(m.transform(&permuted), v);
        }
    }
}
