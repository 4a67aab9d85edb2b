//! Greedy recursive partitioning with weighted Gini impurity.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{majority_class, DecisionTree, TreeFlavor, TreeNode};
use crate::error::{Error, Result};
use crate::grammar::FeatureSet;

/// Splits whose impurity differs by less than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeights {
    /// Inverse class frequency, `n / (k * n_c)`.
    Balanced,
    Uniform,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub class_weights: ClassWeights,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_leaf: 1,
            class_weights: ClassWeights::Balanced,
        }
    }
}

impl TreeParams {
    pub fn with_depth(max_depth: usize) -> Self {
        TreeParams {
            max_depth,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::invalid("max_depth must be at least 1"));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if let ClassWeights::Custom(w) = &self.class_weights {
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::invalid("class weights must be positive"));
            }
        }
        Ok(())
    }

    pub fn resolve_weights(&self, y: &[usize], num_classes: usize) -> Result<Vec<f64>> {
        match &self.class_weights {
            ClassWeights::Uniform => Ok(vec![1.0; num_classes]),
            ClassWeights::Custom(w) => {
                if w.len() != num_classes {
                    return Err(Error::invalid(format!(
                        "{} class weights given for {num_classes} classes",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
            ClassWeights::Balanced => {
                let mut freq = vec![0usize; num_classes];
                for &c in y {
                    freq[c] += 1;
                }
                let present = freq.iter().filter(|&&n| n > 0).count().max(1);
                Ok(freq
                    .iter()
                    .map(|&n| {
                        if n == 0 {
                            1.0
                        } else {
                            y.len() as f64 / (present * n) as f64
                        }
                    })
                    .collect())
            }
        }
    }
}

/// A candidate split and its weighted Gini impurity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity: f64,
}

fn gini_weighted(mass: &[f64]) -> (f64, f64) {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let sq: f64 = mass.iter().map(|m| (m / total) * (m / total)).sum();
    (total, 1.0 - sq)
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    weights: Vec<f64>,
    num_classes: usize,
    params: &'a TreeParams,
    /// Scratch: side of the current split for every sample.
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn counts(&self, samples: &[u32]) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &i in samples {
            counts[self.y[i as usize]] += 1;
        }
        counts
    }

    /// Best split for a node whose samples are listed per feature in
    /// ascending feature order.
    fn find_split(&self, sorted: &[Vec<u32>], counts: &[u64]) -> Option<Split> {
        let k = self.num_classes;
        let total_mass: Vec<f64> = (0..k).map(|c| counts[c] as f64 * self.weights[c]).collect();
        let w_total: f64 = total_mass.iter().sum();
        let n = sorted.first().map_or(0, Vec::len);
        let msl = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        let mut left = vec![0.0; k];
        let mut right = vec![0.0; k];

        for (f, order) in sorted.iter().enumerate() {
            left.iter_mut().for_each(|m| *m = 0.0);
            for pos in 0..n.saturating_sub(1) {
                let i = order[pos] as usize;
                let c = self.y[i];
                left[c] += self.weights[c];
                let n_left = pos + 1;
                let v = self.x[[i, f]];
                let v_next = self.x[[order[pos + 1] as usize, f]];
                if v_next <= v || n_left < msl || n - n_left < msl {
                    continue;
                }
                for c in 0..k {
                    right[c] = total_mass[c] - left[c];
                }
                let (wl, gl) = gini_weighted(&left);
                let (wr, gr) = gini_weighted(&right);
                let impurity = (wl * gl + wr * gr) / w_total;
                if best.is_none_or(|b| impurity < b.impurity - TIE_EPS) {
                    best = Some(Split {
                        feature: f,
                        threshold: 0.5 * (v + v_next),
                        impurity,
                    });
                }
            }
        }
        best
    }

    fn leaf(&self, counts: Vec<u64>) -> TreeNode {
        TreeNode::Leaf {
            class: majority_class(&counts, &self.weights),
            counts,
        }
    }

    fn build(&mut self, sorted: Vec<Vec<u32>>, samples: Vec<u32>, depth: usize) -> TreeNode {
        let counts = self.counts(&samples);
        let classes_present = counts.iter().filter(|&&n| n > 0).count();
        if depth >= self.params.max_depth
            || classes_present <= 1
            || samples.len() < 2 * self.params.min_samples_leaf
        {
            return self.leaf(counts);
        }
        let Some(split) = self.find_split(&sorted, &counts) else {
            return self.leaf(counts);
        };

        for &i in &samples {
            self.goes_left[i as usize] = self.x[[i as usize, split.feature]] <= split.threshold;
        }
        let partition = |list: Vec<u32>, goes_left: &[bool]| -> (Vec<u32>, Vec<u32>) {
            list.into_iter().partition(|&i| goes_left[i as usize])
        };
        let mut sorted_left = Vec::with_capacity(sorted.len());
        let mut sorted_right = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r) = partition(list, &self.goes_left);
            sorted_left.push(l);
            sorted_right.push(r);
        }
        let (samples_left, samples_right) = partition(samples, &self.goes_left);

        let left = self.build(sorted_left, samples_left, depth + 1);
        let right = self.build(sorted_right, samples_right, depth + 1);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            counts,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

fn check_inputs(x: ArrayView2<f64>, y: &[usize], num_classes: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("cannot train a tree on an empty dataset"));
    }
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("feature matrix contains NaN"));
    }
    Ok(())
}

/// Best root split by the same search the trainer uses.
pub fn best_split(
    x: ArrayView2<f64>,
    y: &[usize],
    num_classes: usize,
    params: &TreeParams,
) -> Result<Option<Split>> {
    check_inputs(x, y, num_classes)?;
    let weights = params.resolve_weights(y, num_classes)?;
    let builder = Builder {
        x,
        y,
        weights,
        num_classes,
        params,
        goes_left: vec![false; y.len()],
    };
    let counts = builder.counts(&(0..y.len() as u32).collect::<Vec<_>>());
    Ok(builder.find_split(&presort(x), &counts))
}

fn presort(x: ArrayView2<f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|f| {
            let mut order: Vec<u32> = (0..x.nrows() as u32).collect();
            order.sort_by(|&a, &b| x[[a as usize, f]].total_cmp(&x[[b as usize, f]]));
            order
        })
        .collect()
}

/// Trains a tree. `class_names` fixes the number of classes; feature columns
/// of `x` follow `features`.
pub fn train_tree(
    x: ArrayView2<f64>,
    y: &[usize],
    params: &TreeParams,
    features: &FeatureSet,
    flavor: TreeFlavor,
    class_names: Vec<String>,
) -> Result<DecisionTree> {
    params.validate()?;
    features.validate()?;
    let num_classes = class_names.len();
    check_inputs(x, y, num_classes)?;
    if x.ncols() != features.len() {
        return Err(Error::invalid(format!(
            "matrix has {} columns, feature set has {}",
            x.ncols(),
            features.len()
        )));
    }
    let weights = params.resolve_weights(y, num_classes)?;
    let mut builder = Builder {
        x,
        y,
        weights: weights.clone(),
        num_classes,
        params,
        goes_left: vec![false; y.len()],
    };
    let samples: Vec<u32> = (0..y.len() as u32).collect();
    let root = builder.build(presort(x), samples, 0);
    Ok(DecisionTree {
        flavor,
        features: features.clone(),
        class_names,
        class_weights: weights,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{GrammarRule, RuleKind};
    use crate::types::EnvId;
    use ndarray::Array2;

    fn raw_fs(n: usize) -> FeatureSet {
        FeatureSet {
            env: EnvId::Congestion,
            features: (0..n)
                .map(|i| GrammarRule {
                    kind: RuleKind::Value { index: i },
                    display_name: format!("x{i}"),
                })
                .collect(),
        }
    }

    fn labels() -> Vec<String> {
        DecisionTree::label_class_names()
    }

    #[test]
    fn separable_single_feature() {
        let x = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let y = [0, 0, 1, 1];
        let t = train_tree(x.view(), &y, &TreeParams::default(), &raw_fs(1), TreeFlavor::Classifier, labels()).unwrap();
        match &t.root {
            TreeNode::Internal { threshold, left, right, .. } => {
                assert_eq!(*threshold, 0.5);
                assert_eq!(left.counts(), &[2, 0]);
                assert_eq!(right.counts(), &[0, 2]);
                assert!(left.is_leaf() && right.is_leaf());
            }
            leaf => panic!("expected a split, got {leaf:?}"),
        }
    }

    #[test]
    fn pure_root_is_single_leaf() {
        let x = Array2::from_shape_vec((3, 2), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let t = train_tree(x.view(), &[0, 0, 0], &TreeParams::default(), &raw_fs(2), TreeFlavor::Classifier, labels()).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.root, TreeNode::Leaf { class: 0, counts: vec![3, 0] });
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let n = 64;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let y: Vec<usize> = (0..n).map(|i| (i / 3) % 2).collect();
        let params = TreeParams { max_depth: 3, min_samples_leaf: 4, ..TreeParams::default() };
        let t = train_tree(x.view(), &y, &params, &raw_fs(1), TreeFlavor::Classifier, labels()).unwrap();
        assert!(t.depth() <= 3);
        fn check(node: &TreeNode) {
            match node {
                TreeNode::Leaf { counts, .. } => assert!(counts.iter().sum::<u64>() >= 4),
                TreeNode::Internal { left, right, .. } => {
                    check(left);
                    check(right);
                }
            }
        }
        check(&t.root);
        let leaf_total: u64 = leaves(&t.root).iter().map(|c| c.iter().sum::<u64>()).sum();
        assert_eq!(leaf_total, n as u64);
        assert_eq!(t.node_count(), 2 * t.leaf_count() - 1);
    }

    fn leaves(node: &TreeNode) -> Vec<Vec<u64>> {
        match node {
            TreeNode::Leaf { counts, .. } => vec![counts.clone()],
            TreeNode::Internal { left, right, .. } => {
                let mut v = leaves(left);
                v.extend(leaves(right));
                v
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Array2::<f64>::zeros((0, 1));
        assert!(train_tree(x.view(), &[], &TreeParams::default(), &raw_fs(1), TreeFlavor::Classifier, labels()).is_err());
        let x = Array2::<f64>::zeros((2, 1));
        let p = TreeParams { max_depth: 0, ..TreeParams::default() };
        assert!(train_tree(x.view(), &[0, 1], &p, &raw_fs(1), TreeFlavor::Classifier, labels()).is_err());
    }

    #[test]
    fn balanced_weights() {
        let p = TreeParams::default();
        let w = p.resolve_weights(&[0, 0, 0, 1], 2).unwrap();
        assert!((w[0] - 4.0 / 6.0).abs() < 1e-12);
        assert!((w[1] - 2.0).abs() < 1e-12);
    }
}
