//! Greedy binary tree growth shared by the forest (Gini) and the booster
//! (second-order gain).
//!
//! Candidate thresholds are midpoints between consecutive distinct values a
//! feature takes inside the node. Entries missing from a sparse row are real
//! zeros and take part in the scan like any other value. Rows route left when
//! `x[feature] <= threshold`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureRow};

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: FeatureRow<'_>) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.value(*feature) <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Largest feature index referenced, if any split exists.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some(
                [Some(*feature), left.max_feature(), right.max_feature()]
                    .into_iter()
                    .flatten()
                    .max()
                    .unwrap(),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per node; `None` means all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
            seed: 42,
        }
    }
}

/// Gini impurity `1 - p² - (1-p)²` of a node with positive fraction `p`.
pub fn gini(positive: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = positive / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Per-node sufficient statistics. Gini: `(weight, positive weight, -)`.
/// Newton: `(count, Σg, Σh)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Stats {
    pub n: f64,
    pub a: f64,
    pub b: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.n += o.n;
        self.a += o.a;
        self.b += o.b;
    }

    fn minus(&self, o: &Stats) -> Stats {
        Stats {
            n: self.n - o.n,
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Objective {
    Gini,
    Newton { lambda: f64 },
}

impl Objective {
    fn gain(self, parent: &Stats, left: &Stats, right: &Stats) -> f64 {
        match self {
            Objective::Gini => {
                let weighted = (left.n * gini(left.a, left.n) + right.n * gini(right.a, right.n)) / parent.n;
                gini(parent.a, parent.n) - weighted
            }
            Objective::Newton { lambda } => {
                let term = |s: &Stats| s.a * s.a / (s.b + lambda);
                0.5 * (term(left) + term(right) - term(parent))
            }
        }
    }

    fn leaf(self, s: &Stats) -> f64 {
        match self {
            Objective::Gini => s.a / s.n,
            Objective::Newton { lambda } => -s.a / (s.b + lambda),
        }
    }

    fn is_pure(self, s: &Stats) -> bool {
        match self {
            Objective::Gini => s.a == 0.0 || s.a == s.n,
            Objective::Newton { .. } => false,
        }
    }

    fn accepts(self, gain: f64) -> bool {
        match self {
            // Zero-gain Gini splits are kept: XOR needs one at the root.
            Objective::Gini => gain >= -1e-12,
            Objective::Newton { .. } => gain > 0.0,
        }
    }
}

/// Nonzero entries of every feature column, sorted by value.
pub(crate) struct ColumnIndex {
    columns: Vec<Vec<(u32, f64)>>,
}

impl ColumnIndex {
    pub fn new(x: &FeatureMatrix) -> Self {
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); x.dim()];
        for (i, row) in x.rows().enumerate() {
            row.for_each(|j, v| {
                if v != 0.0 {
                    columns[j].push((i as u32, v));
                }
            });
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        ColumnIndex { columns }
    }
}

/// Best split found for one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

pub(crate) struct Grower<'a> {
    x: &'a FeatureMatrix,
    columns: &'a ColumnIndex,
    stats: Vec<Stats>,
    objective: Objective,
    max_depth: Option<usize>,
    min_leaf: f64,
    max_features: Option<usize>,
    rng: ChaCha8Rng,
    in_node: Vec<bool>,
    seen: Vec<bool>,
}

impl<'a> Grower<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        columns: &'a ColumnIndex,
        stats: Vec<Stats>,
        objective: Objective,
        params: &TreeParams,
    ) -> Self {
        Grower {
            x,
            columns,
            stats,
            objective,
            max_depth: params.max_depth,
            min_leaf: params.min_leaf.max(1) as f64,
            max_features: params.max_features.filter(|&m| m < x.dim()),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            in_node: vec![false; x.len()],
            seen: vec![false; x.dim()],
        }
    }

    /// Grow from all samples with nonzero weight.
    pub fn grow_root(&mut self) -> TreeNode {
        let samples: Vec<usize> = (0..self.x.len()).filter(|&i| self.stats[i].n > 0.0).collect();
        if samples.is_empty() {
            return TreeNode::Leaf { value: 0.0 };
        }
        self.grow(samples, 0)
    }

    fn total(&self, samples: &[usize]) -> Stats {
        let mut t = Stats::default();
        for &s in samples {
            t.add(&self.stats[s]);
        }
        t
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> TreeNode {
        let total = self.total(&samples);
        let leaf = TreeNode::Leaf {
            value: self.objective.leaf(&total),
        };
        if self.max_depth.is_some_and(|d| depth >= d) || self.objective.is_pure(&total) || total.n < 2.0 * self.min_leaf
        {
            return leaf;
        }
        let Some(choice) = self.best_split(&samples, &total) else {
            return leaf;
        };
        if !self.objective.accepts(choice.gain) {
            return leaf;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.x.row(s).value(choice.feature) <= choice.threshold);
        if let Objective::Gini = self.objective {
            let (l, r) = (self.total(&left), self.total(&right));
            let weighted = (l.n * gini(l.a, l.n) + r.n * gini(r.a, r.n)) / total.n;
            assert!(
                weighted <= gini(total.a, total.n) + 1e-12,
                "split increased weighted Gini impurity"
            );
        }
        TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }

    /// Features with at least one nonzero value among `samples`, ascending.
    /// Every other feature is constant zero in the node.
    fn active_features(&mut self, samples: &[usize]) -> Vec<usize> {
        if let FeatureMatrix::Dense { dim, .. } = self.x {
            return (0..*dim).collect();
        }
        let mut out = Vec::new();
        for &s in samples {
            self.x.row(s).for_each(|j, _| {
                if !self.seen[j] {
                    self.seen[j] = true;
                    out.push(j);
                }
            });
        }
        for &j in &out {
            self.seen[j] = false;
        }
        out.sort_unstable();
        out
    }

    pub(crate) fn best_split(&mut self, samples: &[usize], total: &Stats) -> Option<SplitChoice> {
        let mut features = self.active_features(samples);
        for &s in samples {
            self.in_node[s] = true;
        }
        let mut best: Option<SplitChoice> = None;
        match self.max_features {
            None => {
                for &f in &features {
                    if let Some(c) = self.evaluate(f, samples, total) {
                        if best.is_none_or(|b| c.gain > b.gain) {
                            best = Some(c);
                        }
                    }
                }
            }
            Some(m) => {
                // Draw features in random order; constant ones do not count
                // toward the m sampled.
                features.shuffle(&mut self.rng);
                let mut used = 0;
                for &f in &features {
                    if used == m {
                        break;
                    }
                    if let Some(c) = self.evaluate(f, samples, total) {
                        used += 1;
                        if best.is_none_or(|b| c.gain > b.gain) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        for &s in samples {
            self.in_node[s] = false;
        }
        best
    }

    /// Best threshold on one feature, or `None` if the feature is constant
    /// in the node or no threshold satisfies `min_leaf`.
    fn evaluate(&self, feature: usize, samples: &[usize], total: &Stats) -> Option<SplitChoice> {
        let column = &self.columns.columns[feature];
        let k = samples.len();
        let mut entries: Vec<(f64, Stats)> = Vec::new();
        if column.len() <= k.saturating_mul(usize::BITS as usize - k.leading_zeros() as usize) {
            for &(s, v) in column {
                if self.in_node[s as usize] {
                    entries.push((v, self.stats[s as usize]));
                }
            }
        } else {
            for &s in samples {
                let v = self.x.row(s).value(feature);
                if v != 0.0 {
                    entries.push((v, self.stats[s]));
                }
            }
            entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut explicit = Stats::default();
        for (_, s) in &entries {
            explicit.add(s);
        }
        let zeros = total.minus(&explicit);
        if zeros.n > 0.5 {
            let at = entries.partition_point(|e| e.0 < 0.0);
            entries.insert(at, (0.0, zeros));
        }
        if entries.len() < 2 || entries[0].0 == entries[entries.len() - 1].0 {
            return None;
        }

        let mut left = Stats::default();
        let mut best: Option<SplitChoice> = None;
        for i in 0..entries.len() - 1 {
            left.add(&entries[i].1);
            let (here, next) = (entries[i].0, entries[i + 1].0);
            if here == next {
                continue;
            }
            let right = total.minus(&left);
            if left.n < self.min_leaf || right.n < self.min_leaf {
                continue;
            }
            let gain = self.objective.gain(total, &left, &right);
            if best.is_none_or(|b| gain > b.gain) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some(SplitChoice {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

pub(crate) fn gini_stats(y: &[Label], weights: &[f64]) -> Vec<Stats> {
    y.iter()
        .zip(weights)
        .map(|(label, &w)| Stats {
            n: w,
            a: if label.is_fake() { w } else { 0.0 },
            b: 0.0,
        })
        .collect()
}

pub(crate) fn check_xy(x: &FeatureMatrix, y: &[Label]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "{} feature rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::domain("cannot fit a tree on zero samples"));
    }
    Ok(())
}

/// Fit one CART classification tree; leaves hold the FAKE fraction.
pub fn tree_fit(x: &FeatureMatrix, y: &[Label], params: &TreeParams) -> Result<TreeNode> {
    check_xy(x, y)?;
    let columns = ColumnIndex::new(x);
    let stats = gini_stats(y, &vec![1.0; y.len()]);
    Ok(Grower::new(x, &columns, stats, Objective::Gini, params).grow_root())
}

/// Weighted Gini impurity of the root split, `None` for a leaf.
pub fn root_split_impurity(tree: &TreeNode, x: &FeatureMatrix, y: &[Label]) -> Option<f64> {
    let TreeNode::Split { feature, threshold, .. } = tree else {
        return None;
    };
    let mut l = (0.0, 0.0);
    let mut r = (0.0, 0.0);
    for (row, label) in x.rows().zip(y) {
        let side = if row.value(*feature) <= *threshold {
            &mut l
        } else {
            &mut r
        };
        side.0 += 1.0;
        side.1 += label.target();
    }
    let n = y.len() as f64;
    Some((l.0 * gini(l.1, l.0) + r.0 * gini(r.1, r.0)) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;
    use proptest::prelude::*;

    fn accuracy(tree: &TreeNode, x: &FeatureMatrix, y: &[Label]) -> f64 {
        let hits = x
            .rows()
            .zip(y)
            .filter(|(row, label)| Label::from_score(tree.predict(*row) - 0.5) == **label)
            .count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn pure_input_is_a_leaf() {
        let x = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(
            tree_fit(&x, &[Label::Fake, Label::Fake], &TreeParams::default()).unwrap(),
            TreeNode::Leaf { value: 1.0 }
        );
        assert_eq!(
            tree_fit(&x, &[Label::Real, Label::Real], &TreeParams::default()).unwrap(),
            TreeNode::Leaf { value: 0.0 }
        );
    }

    #[test]
    fn one_dimensional_pair() {
        let x = FeatureMatrix::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let y = [Label::Real, Label::Fake];
        let t = tree_fit(&x, &y, &TreeParams::default()).unwrap();
        match &t {
            TreeNode::Split { threshold, .. } => assert!(*threshold > 0.0 && *threshold < 1.0),
            _ => panic!("expected a split"),
        }
        assert_eq!(t.leaves(), 2);
        assert_eq!(accuracy(&t, &x, &y), 1.0);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = FeatureMatrix::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let y = [Label::Real, Label::Real, Label::Fake, Label::Fake];
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let t = tree_fit(&x, &y, &params).unwrap();
        assert_eq!(accuracy(&t, &x, &y), 1.0);
        let stump = tree_fit(
            &x,
            &y,
            &TreeParams {
                max_depth: Some(1),
                ..params
            },
        )
        .unwrap();
        assert_eq!(accuracy(&stump, &x, &y), 0.5);
    }

    #[test]
    fn sparse_and_dense_agree() {
        let dense = vec![
            vec![0.0, 0.3, 0.0],
            vec![0.2, 0.0, 0.0],
            vec![0.0, 0.0, -0.5],
            vec![0.9, 0.1, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        let y = [Label::Fake, Label::Real, Label::Fake, Label::Real, Label::Fake];
        let sparse: Vec<SparseVector> = dense
            .iter()
            .map(|r| SparseVector::from_pairs(3, r.iter().copied().enumerate().collect()).unwrap())
            .collect();
        let a = tree_fit(&FeatureMatrix::from_rows(dense).unwrap(), &y, &TreeParams::default()).unwrap();
        let b = tree_fit(&FeatureMatrix::sparse(3, sparse).unwrap(), &y, &TreeParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn min_leaf_and_depth_respected() {
        let x = FeatureMatrix::from_rows((0..8).map(|i| vec![i as f64]).collect()).unwrap();
        let y: Vec<Label> = (0..8)
            .map(|i| if i % 2 == 0 { Label::Fake } else { Label::Real })
            .collect();
        let t = tree_fit(
            &x,
            &y,
            &TreeParams {
                min_leaf: 3,
                ..TreeParams::default()
            },
        )
        .unwrap();
        fn min_leaf_size(t: &TreeNode, x: &FeatureMatrix, rows: Vec<usize>) -> usize {
            match t {
                TreeNode::Leaf { .. } => rows.len(),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let (l, r): (Vec<_>, Vec<_>) =
                        rows.into_iter().partition(|&i| x.row(i).value(*feature) <= *threshold);
                    min_leaf_size(left, x, l).min(min_leaf_size(right, x, r))
                }
            }
        }
        assert!(min_leaf_size(&t, &x, (0..8).collect()) >= 3);
        let d = tree_fit(
            &x,
            &y,
            &TreeParams {
                max_depth: Some(2),
                ..TreeParams::default()
            },
        )
        .unwrap();
        assert!(d.depth() <= 2);
    }

    /// Exhaustive (feature, midpoint) enumeration.
    fn brute_force_min_impurity(x: &[Vec<f64>], y: &[Label]) -> Option<f64> {
        let n = y.len() as f64;
        let mut best: Option<f64> = None;
        for f in 0..x[0].len() {
            let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let thr = (w[0] + w[1]) / 2.0;
                let (mut l, mut r) = ((0.0, 0.0), (0.0, 0.0));
                for (row, label) in x.iter().zip(y) {
                    let side = if row[f] <= thr { &mut l } else { &mut r };
                    side.0 += 1.0;
                    side.1 += label.target();
                }
                let imp = (l.0 * gini(l.1, l.0) + r.0 * gini(r.1, r.0)) / n;
                best = Some(best.map_or(imp, |b: f64| b.min(imp)));
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search_on_all_small_binary_fixtures() {
        // Every dataset of 8 samples over 3 binary features with labels from
        // a fixed family of patterns.
        let mut checked = 0;
        for code in 0u32..512 {
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|i| (0..3).map(|f| ((code >> ((i + f * 3) % 9)) & 1) as f64).collect())
                .collect();
            for labels in [0b1010_0110u32, 0b1100_0011, 0b0111_0001, 0b1000_0000] {
                let y: Vec<Label> = (0..8)
                    .map(|i| {
                        if (labels >> i) & 1 == 1 {
                            Label::Fake
                        } else {
                            Label::Real
                        }
                    })
                    .collect();
                let x = FeatureMatrix::from_rows(rows.clone()).unwrap();
                let t = tree_fit(&x, &y, &TreeParams::default()).unwrap();
                match (root_split_impurity(&t, &x, &y), brute_force_min_impurity(&rows, &y)) {
                    (Some(got), Some(want)) => assert!((got - want).abs() < 1e-12),
                    (None, None) => {}
                    (None, Some(_)) => assert!(y.iter().all(|l| *l == y[0]), "impure root left unsplit"),
                    (Some(_), None) => panic!("split found where none exists"),
                }
                checked += 1;
            }
        }
        assert_eq!(checked, 2048);
    }

    proptest! {
        #[test]
        fn root_split_is_global_minimum(
            rows in prop::collection::vec(prop::collection::vec(0u8..2, 3), 2..=8),
            labels in prop::collection::vec(any::<bool>(), 8),
        ) {
            let x_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
            let y: Vec<Label> = labels[..rows.len()].iter().map(|&f| if f { Label::Fake } else { Label::Real }).collect();
            let x = FeatureMatrix::from_rows(x_rows.clone()).unwrap();
            let t = tree_fit(&x, &y, &TreeParams::default()).unwrap();
            let pure = y.iter().all(|l| *l == y[0]);
            if let (Some(got), Some(want)) = (root_split_impurity(&t, &x, &y), brute_force_min_impurity(&x_rows, &y)) {
                prop_assert!((got - want).abs() < 1e-12);
            } else {
                prop_assert!(pure || brute_force_min_impurity(&x_rows, &y).is_none());
            }
        }

        #[test]
        fn full_tree_memorizes_consistent_data(
            rows in prop::collection::vec(prop::collection::vec(-3i8..3, 2), 1..20),
            labels in prop::collection::vec(any::<bool>(), 20),
        ) {
            let mut seen = std::collections::HashMap::new();
            let mut x_rows = Vec::new();
            let mut y = Vec::new();
            for (r, &l) in rows.iter().zip(&labels) {
                let label = *seen.entry(r.clone()).or_insert(l);
                x_rows.push(r.iter().map(|&v| v as f64).collect::<Vec<f64>>());
                y.push(if label { Label::Fake } else { Label::Real });
            }
            let x = FeatureMatrix::from_rows(x_rows).unwrap();
            let t = tree_fit(&x, &y, &TreeParams::default()).unwrap();
            prop_assert_eq!(accuracy(&t, &x, &y), 1.0);
        }
    }
}
