use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{check_xy, gini_stats, ColumnIndex, Grower, Objective, TreeNode, TreeParams};
use super::Ensemble;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Features sampled per node; `None` means ⌈√D⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            max_features: None,
            bootstrap: true,
            min_leaf: 1,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub tree_seeds: Vec<u64>,
    pub max_features: usize,
    pub dim: usize,
}

/// SplitMix64 finalizer; spreads `seed + index` into independent tree seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn forest_fit(x: &FeatureMatrix, y: &[Label], params: &ForestParams) -> Result<ForestModel> {
    check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::domain("a forest needs at least one tree"));
    }
    let dim = x.dim();
    let m = params
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim.max(1));
    let columns = ColumnIndex::new(x);
    let n = y.len();
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|i| derive_seed(params.seed, i))
        .collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut weights = vec![0.0; n];
            if params.bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            let tree_params = TreeParams {
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                max_features: Some(m),
                seed: rng.random(),
            };
            Grower::new(x, &columns, gini_stats(y, &weights), Objective::Gini, &tree_params).grow_root()
        })
        .collect();
    Ok(ForestModel {
        trees,
        tree_seeds,
        max_features: m,
        dim,
    })
}

impl Ensemble for ForestModel {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Mean leaf probability over trees.
    fn raw_score(&self, x: FeatureRow<'_>) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}
