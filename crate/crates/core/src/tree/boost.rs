//! Newton boosting on the logistic loss.
//!
//! Each round fits a depth-limited tree to per-sample gradients
//! `g = p - y` and hessians `h = p(1 - p)`, splitting on the regularized
//! gain and setting leaves to `-G / (H + λ)`. The margin is
//! `base + η Σ trees`, with `base = ln(pos / neg)`.

use serde::{Deserialize, Serialize};

use super::cart::{check_xy, ColumnIndex, Grower, Objective, Stats, TreeNode, TreeParams};
use super::Ensemble;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureRow};
use crate::linear::TrainLog;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub rounds: usize,
    pub eta: f64,
    pub max_depth: usize,
    pub lambda_reg: f64,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            eta: 0.1,
            max_depth: 3,
            lambda_reg: 1.0,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostedModel {
    pub base_score: f64,
    pub trees: Vec<TreeNode>,
    pub eta: f64,
    pub lambda_reg: f64,
    pub dim: usize,
}

fn sigmoid(x: f64) -> f64 {
    crate::linear::sigmoid(x)
}

fn mean_logistic_loss(margins: &[f64], y: &[Label]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&z, label)| z.max(0.0) + (-z.abs()).exp().ln_1p() - label.target() * z)
        .sum();
    total / y.len() as f64
}

pub fn boost_fit(x: &FeatureMatrix, y: &[Label], params: &BoostParams) -> Result<(BoostedModel, TrainLog)> {
    check_xy(x, y)?;
    crate::linear::check_two_classes(x, y)?;
    if !(params.eta > 0.0 && params.eta <= 1.0) {
        return Err(Error::domain(format!("learning rate {} not in (0, 1]", params.eta)));
    }
    if params.lambda_reg < 0.0 {
        return Err(Error::domain("lambda_reg must be nonnegative"));
    }
    let pos = y.iter().filter(|l| l.is_fake()).count() as f64;
    let neg = y.len() as f64 - pos;
    let base_score = (pos / neg).ln();
    let mut margins = vec![base_score; y.len()];
    let columns = ColumnIndex::new(x);
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: 1,
        max_features: None,
        seed: params.seed,
    };
    let objective = Objective::Newton {
        lambda: params.lambda_reg,
    };
    let mut trees = Vec::with_capacity(params.rounds);
    let mut log = TrainLog::default();
    for round in 0..params.rounds {
        let stats: Vec<Stats> = margins
            .iter()
            .zip(y)
            .map(|(&z, label)| {
                let p = sigmoid(z);
                Stats {
                    n: 1.0,
                    a: p - label.target(),
                    b: p * (1.0 - p),
                }
            })
            .collect();
        let tree = Grower::new(x, &columns, stats, objective, &tree_params).grow_root();
        for (i, m) in margins.iter_mut().enumerate() {
            *m += params.eta * tree.predict(x.row(i));
        }
        trees.push(tree);
        let loss = mean_logistic_loss(&margins, y);
        if !loss.is_finite() {
            return Err(Error::Training {
                step: round,
                message: "boosting loss is not finite".into(),
            });
        }
        log.objectives.push(loss);
    }
    Ok((
        BoostedModel {
            base_score,
            trees,
            eta: params.eta,
            lambda_reg: params.lambda_reg,
            dim: x.dim(),
        },
        log,
    ))
}

impl BoostedModel {
    pub fn margin(&self, x: FeatureRow<'_>) -> f64 {
        self.base_score + self.eta * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

impl Ensemble for BoostedModel {
    fn dim(&self) -> usize {
        self.dim
    }

    /// σ(base + η Σ trees).
    fn raw_score(&self, x: FeatureRow<'_>) -> f64 {
        sigmoid(self.margin(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::ensemble_predict;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(s: &str) -> Vec<Label> {
        s.chars()
            .map(|c| if c == 'F' { Label::Fake } else { Label::Real })
            .collect()
    }

    #[test]
    fn zero_rounds_predict_prior() {
        let x = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = labels("RFFF");
        let (m, log) = boost_fit(
            &x,
            &y,
            &BoostParams {
                rounds: 0,
                ..BoostParams::default()
            },
        )
        .unwrap();
        assert_eq!(log.epochs(), 0);
        for row in x.rows() {
            assert!((ensemble_predict(&m, row).unwrap().1 - 0.75).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_pair_loss_monotone() {
        let x = FeatureMatrix::from_rows(vec![vec![-1.0], vec![1.0]]).unwrap();
        let y = labels("RF");
        let (m, log) = boost_fit(
            &x,
            &y,
            &BoostParams {
                rounds: 10,
                ..BoostParams::default()
            },
        )
        .unwrap();
        for (row, label) in x.rows().zip(&y) {
            assert_eq!(ensemble_predict(&m, row).unwrap().0, *label);
        }
        for w in log.objectives.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn single_round_leaf_weights_by_hand() {
        // base = ln 3, p = 0.75: g = 0.75 (R) / -0.25 (F), h = 0.1875.
        // Best cut at 0.5: left {R} G=0.75 H=0.1875, right G=-0.75 H=0.5625.
        let x = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = labels("RFFF");
        let params = BoostParams {
            rounds: 1,
            max_depth: 1,
            lambda_reg: 0.0,
            ..BoostParams::default()
        };
        let (m, _) = boost_fit(&x, &y, &params).unwrap();
        assert!((m.base_score - 3f64.ln()).abs() < 1e-15);
        match &m.trees[0] {
            TreeNode::Split {
                threshold, left, right, ..
            } => {
                assert_eq!(*threshold, 0.5);
                assert_eq!(**left, TreeNode::Leaf { value: -0.75 / 0.1875 });
                assert_eq!(**right, TreeNode::Leaf { value: 0.75 / 0.5625 });
            }
            other => panic!("expected a stump, got {other:?}"),
        }
    }

    #[test]
    fn all_zero_trees_score_sigmoid_base() {
        let m = BoostedModel {
            base_score: 0.4,
            trees: vec![TreeNode::Leaf { value: 0.0 }; 3],
            eta: 0.1,
            lambda_reg: 1.0,
            dim: 2,
        };
        let x = vec![5.0, -1.0];
        assert_eq!(ensemble_predict(&m, (&x).into()).unwrap().1, sigmoid(0.4));
    }

    #[test]
    fn loss_non_increasing_on_toy_suites() {
        for (seed, eta) in [(1u64, 0.1), (2, 0.3), (3, 0.2)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..120)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<Label> = rows
                .iter()
                .map(|r| Label::from_score(r[0] * r[1] + 0.2 * r[2] + 0.1 * rng.random_range(-1.0..1.0)))
                .collect();
            let x = FeatureMatrix::from_rows(rows).unwrap();
            let (_, log) = boost_fit(
                &x,
                &y,
                &BoostParams {
                    rounds: 40,
                    eta,
                    ..BoostParams::default()
                },
            )
            .unwrap();
            for w in log.objectives.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "seed {seed}: {} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let x = FeatureMatrix::from_rows(vec![vec![-1.0], vec![1.0]]).unwrap();
        let y = labels("RF");
        assert!(boost_fit(
            &x,
            &y,
            &BoostParams {
                eta: 0.0,
                ..BoostParams::default()
            }
        )
        .is_err());
        assert!(boost_fit(&x, &labels("FF"), &BoostParams::default()).is_err());
    }
}
