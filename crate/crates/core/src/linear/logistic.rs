use serde::{Deserialize, Serialize};

use super::{check_two_classes, LinearKind, LinearModel, TrainLog};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegParams {
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Unused by full-batch descent; kept so every model config carries one.
    pub seed: u64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            lambda: 1e-4,
            lr: 0.1,
            epochs: 100,
            seed: 42,
        }
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean cross-entropy plus (λ/2)‖w‖², with FAKE as the target class.
pub fn logreg_objective(weights: &[f64], bias: f64, x: &FeatureMatrix, y: &[Label], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let data: f64 = x
        .rows()
        .zip(y)
        .map(|(row, label)| {
            let z = row.dot(weights) + bias;
            softplus(z) - label.target() * z
        })
        .sum();
    data / n + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`logreg_objective`] with respect to `(weights, bias)`.
pub fn logreg_gradient(weights: &[f64], bias: f64, x: &FeatureMatrix, y: &[Label], lambda: f64) -> (Vec<f64>, f64) {
    let n = y.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, label) in x.rows().zip(y) {
        let residual = super::sigmoid(row.dot(weights) + bias) - label.target();
        row.for_each(|j, v| gw[j] += residual * v);
        gb += residual;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + lambda * w;
    }
    (gw, gb / n)
}

/// Full-batch gradient descent from zero weights.
pub fn logreg_fit(x: &FeatureMatrix, y: &[Label], params: &LogRegParams) -> Result<(LinearModel, TrainLog)> {
    check_two_classes(x, y)?;
    let mut model = LinearModel::zeros(x.dim(), LinearKind::Logistic, params.lambda);
    let mut log = TrainLog::default();
    for epoch in 0..params.epochs {
        let (gw, gb) = logreg_gradient(&model.weights, model.bias, x, y, params.lambda);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= params.lr * g;
        }
        model.bias -= params.lr * gb;
        let objective = logreg_objective(&model.weights, model.bias, x, y, params.lambda);
        if !objective.is_finite() {
            return Err(Error::Training {
                step: epoch,
                message: "logistic objective is not finite".into(),
            });
        }
        log.objectives.push(objective);
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::linear_predict;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_points() -> (FeatureMatrix, Vec<Label>) {
        (
            FeatureMatrix::from_rows(vec![vec![-1.0], vec![1.0]]).unwrap(),
            vec![Label::Real, Label::Fake],
        )
    }

    #[test]
    fn zero_init_gives_half_probability() {
        let (x, _) = two_points();
        let m = LinearModel::zeros(1, LinearKind::Logistic, 1e-4);
        for row in x.rows() {
            assert_eq!(m.probability(row).unwrap(), 0.5);
        }
    }

    #[test]
    fn separable_pair_is_learned() {
        let (x, y) = two_points();
        let (m, log) = logreg_fit(&x, &y, &LogRegParams::default()).unwrap();
        assert_eq!(log.epochs(), 100);
        for (row, label) in x.rows().zip(&y) {
            assert_eq!(linear_predict(&m, row).unwrap().0, *label);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let x = FeatureMatrix::from_rows(rows).unwrap();
        let y = vec![Label::Fake, Label::Real, Label::Real, Label::Fake, Label::Real];
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = 0.3;
        let lambda = 0.05;
        let (gw, gb) = logreg_gradient(&w, b, &x, &y, lambda);
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for j in 0..4 {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            let num = (logreg_objective(&wp, b, &x, &y, lambda) - logreg_objective(&wm, b, &x, &y, lambda)) / (2.0 * h);
            assert!(rel(gw[j], num) < 1e-6, "w[{j}]: {} vs {num}", gw[j]);
        }
        let num =
            (logreg_objective(&w, b + h, &x, &y, lambda) - logreg_objective(&w, b - h, &x, &y, lambda)) / (2.0 * h);
        assert!(rel(gb, num) < 1e-6);
    }

    #[test]
    fn objective_non_increasing_under_step_bound() {
        let x = FeatureMatrix::from_rows(vec![
            vec![0.5, 0.1],
            vec![-0.3, 0.8],
            vec![0.9, -0.4],
            vec![-0.7, -0.2],
            vec![0.2, 0.2],
        ])
        .unwrap();
        let y = vec![Label::Fake, Label::Real, Label::Fake, Label::Real, Label::Real];
        let lambda = 1e-4;
        let max_norm = x.rows().map(|r| r.norm_sq()).fold(0.0, f64::max);
        let lr = 0.25 / (max_norm + lambda);
        let params = LogRegParams {
            lr,
            epochs: 200,
            ..LogRegParams::default()
        };
        let (_, log) = logreg_fit(&x, &y, &params).unwrap();
        let start = logreg_objective(&[0.0, 0.0], 0.0, &x, &y, lambda);
        assert!(log.objectives[0] <= start);
        for w in log.objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let x = FeatureMatrix::from_rows(vec![vec![1e300], vec![-1e300]]).unwrap();
        let y = vec![Label::Fake, Label::Real];
        let params = LogRegParams {
            lr: 1e300,
            ..LogRegParams::default()
        };
        match logreg_fit(&x, &y, &params) {
            Err(Error::Training { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected training error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let (x, y) = two_points();
        let a = logreg_fit(&x, &y, &LogRegParams::default()).unwrap();
        let b = logreg_fit(&x, &y, &LogRegParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
