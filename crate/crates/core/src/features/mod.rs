//! Feature extraction: tf-idf over a fitted vocabulary and mean-pooled
//! skip-gram embeddings, plus the row/matrix types every classifier consumes.

mod tfidf;
mod word2vec;

pub use tfidf::{fit_tfidf, TfidfModel, Vocabulary};
pub use word2vec::{embed_mean, train_word2vec, train_word2vec_logged, EmbeddingTable, Word2VecParams};

use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices and nonzero values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from unordered `(index, value)` pairs. Duplicate indices are
    /// summed and zeros dropped.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        let mut indices: Vec<usize> = Vec::with_capacity(pairs.len());
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: i + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::domain(format!("non-finite value at index {i}")));
            }
            if indices.last() == Some(&i) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(i);
                values.push(v);
            }
        }
        let (indices, values) = indices.into_iter().zip(values).filter(|(_, v)| *v != 0.0).unzip();
        Ok(SparseVector { dim, indices, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

pub type DenseVector = Vec<f64>;

/// Borrowed view of one feature row.
#[derive(Clone, Copy, Debug)]
pub enum FeatureRow<'a> {
    Sparse(&'a SparseVector),
    Dense(&'a [f64]),
}

impl<'a> FeatureRow<'a> {
    pub fn dim(&self) -> usize {
        match self {
            FeatureRow::Sparse(s) => s.dim(),
            FeatureRow::Dense(d) => d.len(),
        }
    }

    pub fn value(&self, index: usize) -> f64 {
        match self {
            FeatureRow::Sparse(s) => s.get(index),
            FeatureRow::Dense(d) => d.get(index).copied().unwrap_or(0.0),
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        match self {
            FeatureRow::Sparse(s) => s.iter().map(|(i, v)| v * weights[i]).sum(),
            FeatureRow::Dense(d) => d.iter().zip(weights).map(|(a, b)| a * b).sum(),
        }
    }

    /// Visit stored entries. Dense rows visit every coordinate.
    pub fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            FeatureRow::Sparse(s) => s.iter().for_each(|(i, v)| f(i, v)),
            FeatureRow::Dense(d) => d.iter().enumerate().for_each(|(i, &v)| f(i, v)),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each(|_, v| acc += v * v);
        acc
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl<'a> From<&'a SparseVector> for FeatureRow<'a> {
    fn from(s: &'a SparseVector) -> Self {
        FeatureRow::Sparse(s)
    }
}

impl<'a> From<&'a [f64]> for FeatureRow<'a> {
    fn from(d: &'a [f64]) -> Self {
        FeatureRow::Dense(d)
    }
}

impl<'a> From<&'a Vec<f64>> for FeatureRow<'a> {
    fn from(d: &'a Vec<f64>) -> Self {
        FeatureRow::Dense(d)
    }
}

/// A design matrix: all rows share one dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMatrix {
    Sparse { dim: usize, rows: Vec<SparseVector> },
    Dense { dim: usize, rows: Vec<DenseVector> },
}

impl FeatureMatrix {
    pub fn sparse(dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(FeatureMatrix::Sparse { dim, rows })
    }

    pub fn dense(dim: usize, rows: Vec<DenseVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(FeatureMatrix::Dense { dim, rows })
    }

    /// Convenience for tests and fixtures.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        FeatureMatrix::dense(dim, rows)
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMatrix::Sparse { dim, .. } | FeatureMatrix::Dense { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureMatrix::Sparse { rows, .. } => rows.len(),
            FeatureMatrix::Dense { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> FeatureRow<'_> {
        match self {
            FeatureMatrix::Sparse { rows, .. } => FeatureRow::Sparse(&rows[i]),
            FeatureMatrix::Dense { rows, .. } => FeatureRow::Dense(&rows[i]),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = FeatureRow<'_>> {
        (0..self.len()).map(move |i| self.row(i))
    }

    /// Every entry scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> FeatureMatrix {
        match self {
            FeatureMatrix::Sparse { dim, rows } => FeatureMatrix::Sparse {
                dim: *dim,
                rows: rows
                    .iter()
                    .map(|r| SparseVector {
                        dim: r.dim,
                        indices: r.indices.clone(),
                        values: r.values.iter().map(|v| v * factor).collect(),
                    })
                    .collect(),
            },
            FeatureMatrix::Dense { dim, rows } => FeatureMatrix::Dense {
                dim: *dim,
                rows: rows.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect(),
            },
        }
    }
}
