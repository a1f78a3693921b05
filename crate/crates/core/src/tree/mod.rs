//! CART trees, bagged forests and Newton-boosted ensembles.

mod boost;
mod cart;
mod forest;

pub use boost::{boost_fit, BoostParams, BoostedModel};
pub use cart::{gini, root_split_impurity, tree_fit, TreeNode, TreeParams};
pub use forest::{derive_seed, forest_fit, ForestModel, ForestParams};

use crate::corpus::Label;
use crate::error::Result;
use crate::features::FeatureRow;

/// A tree ensemble whose score is a FAKE probability.
pub trait Ensemble {
    fn dim(&self) -> usize;
    fn raw_score(&self, x: FeatureRow<'_>) -> f64;
}

/// `(label, probability)`; FAKE iff the probability exceeds 0.5.
pub fn ensemble_predict<M: Ensemble + ?Sized>(model: &M, x: FeatureRow<'_>) -> Result<(Label, f64)> {
    x.check_dim(model.dim())?;
    let score = model.raw_score(x);
    Ok((Label::from_score(score - 0.5), score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;

    #[test]
    fn empty_sparse_row_routes_through_zeros() {
        let tree = TreeNode::Split {
            feature: 2,
            threshold: 0.25,
            left: Box::new(TreeNode::Leaf { value: 0.9 }),
            right: Box::new(TreeNode::Leaf { value: 0.1 }),
        };
        let m = ForestModel {
            trees: vec![tree],
            tree_seeds: vec![0],
            max_features: 1,
            dim: 4,
        };
        let empty = SparseVector::zeros(4);
        assert_eq!(ensemble_predict(&m, (&empty).into()).unwrap(), (Label::Fake, 0.9));
        assert!(ensemble_predict(&m, (&SparseVector::zeros(3)).into()).is_err());
    }
}
