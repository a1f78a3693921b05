//! Multinomial Naive Bayes, logistic regression and a primal linear SVM.

mod logistic;
mod naive_bayes;
mod svm;

pub use logistic::{logreg_fit, logreg_gradient, logreg_objective, LogRegParams};
pub use naive_bayes::{nb_fit, nb_predict, NaiveBayesModel};
pub use svm::{svm_fit, svm_objective, SvmParams};

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Logistic,
    Svm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: LinearKind,
    pub lambda: f64,
}

/// Objective after every epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub objectives: Vec<f64>,
}

impl TrainLog {
    pub fn epochs(&self) -> usize {
        self.objectives.len()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objectives.last().copied()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinearModel {
    pub fn zeros(dim: usize, kind: LinearKind, lambda: f64) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            kind,
            lambda,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: FeatureRow<'_>) -> Result<f64> {
        x.check_dim(self.dim())?;
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// σ(score); only meaningful for logistic models.
    pub fn probability(&self, x: FeatureRow<'_>) -> Result<f64> {
        self.score(x).map(sigmoid)
    }
}

/// `(label, w·x + b)`; FAKE iff the score is strictly positive.
pub fn linear_predict(model: &LinearModel, x: FeatureRow<'_>) -> Result<(Label, f64)> {
    let score = model.score(x)?;
    Ok((Label::from_score(score), score))
}

pub(crate) fn check_two_classes(x: &FeatureMatrix, y: &[Label]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    for label in Label::ALL {
        if !y.contains(&label) {
            return Err(Error::domain(format!("training labels contain no {label} samples")));
        }
    }
    Ok(())
}
