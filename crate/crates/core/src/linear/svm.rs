//! Pegasos: stochastic subgradient descent on the primal hinge objective
//! with step size 1/(λt). The bias takes the same step but is not
//! regularized.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_two_classes, LinearKind, LinearModel, TrainLog};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-4,
            epochs: 20,
            seed: 42,
        }
    }
}

/// (λ/2)‖w‖² + mean hinge loss, labels FAKE = +1, REAL = -1.
pub fn svm_objective(model: &LinearModel, x: &FeatureMatrix, y: &[Label]) -> f64 {
    let hinge: f64 = x
        .rows()
        .zip(y)
        .map(|(row, label)| (1.0 - label.sign() * (row.dot(&model.weights) + model.bias)).max(0.0))
        .sum();
    hinge / y.len() as f64 + 0.5 * model.lambda * model.weights.iter().map(|w| w * w).sum::<f64>()
}

pub fn svm_fit(x: &FeatureMatrix, y: &[Label], params: &SvmParams) -> Result<(LinearModel, TrainLog)> {
    check_two_classes(x, y)?;
    if params.lambda.is_nan() || params.lambda <= 0.0 {
        return Err(Error::domain("SVM regularization lambda must be positive"));
    }
    let lambda = params.lambda;
    // w = scale * v keeps the shrink step O(1) on sparse rows.
    let mut v = vec![0.0; x.dim()];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut t = 0usize;
    let mut log = TrainLog::default();
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = x.row(i);
            let sign = y[i].sign();
            let margin = sign * (scale * row.dot(&v) + bias);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.iter_mut().for_each(|w| *w = 0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if margin < 1.0 {
                let step = eta * sign / scale;
                row.for_each(|j, value| v[j] += step * value);
                bias += eta * sign;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
        let model = LinearModel {
            weights: v.iter().map(|w| w * scale).collect(),
            bias,
            kind: LinearKind::Svm,
            lambda,
        };
        let objective = svm_objective(&model, x, y);
        if !objective.is_finite() {
            return Err(Error::Training {
                step: epoch,
                message: "hinge objective is not finite".into(),
            });
        }
        log.objectives.push(objective);
    }
    let model = LinearModel {
        weights: v.iter().map(|w| w * scale).collect(),
        bias,
        kind: LinearKind::Svm,
        lambda,
    };
    Ok((model, log))
}
