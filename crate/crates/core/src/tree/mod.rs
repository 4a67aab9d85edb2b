//! Binary CART trees over grammar features.
//!
//! Internal nodes test `feature <= threshold` (left) against `> threshold`
//! (right). Every node keeps its unweighted per-class training counts so
//! subtrees can be summarized or pruned after training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{eval_feature, FeatureSet};
use crate::types::{Action, Label};

mod edit;
mod io;
mod paths;
mod train;

pub use edit::{edit_tree, truncate_depth, NodePath, Step, TreeEdit};
pub use io::{deserialize_tree, export_dot, serialize_tree, TREE_FORMAT, TREE_VERSION};
pub use paths::{enumerate_paths, Clause, TreePath};
pub use train::{best_split, train_tree, ClassWeights, Split, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeFlavor {
    /// Labels (state, action) pairs DESIRABLE/UNDESIRABLE.
    Classifier,
    /// Maps raw states to actions.
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        counts: Vec<u64>,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class: usize,
        counts: Vec<u64>,
    },
}

impl TreeNode {
    pub fn counts(&self) -> &[u64] {
        match self {
            TreeNode::Internal { counts, .. } | TreeNode::Leaf { counts, .. } => counts,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Walks the tree asking `value` for the feature at each internal node.
    pub fn walk(&self, mut value: impl FnMut(usize) -> f64) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if value(*feature) <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// Weighted-majority class; ties go to the highest class index, which is
/// UNDESIRABLE for label trees.
pub fn majority_class(counts: &[u64], weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_mass = f64::NEG_INFINITY;
    for (c, (&n, &w)) in counts.iter().zip(weights).enumerate() {
        let mass = n as f64 * w;
        if mass >= best_mass {
            best = c;
            best_mass = mass;
        }
    }
    best
}

/// Weighted fraction of `class` among `counts`.
pub fn weighted_purity(counts: &[u64], weights: &[f64], class: usize) -> f64 {
    let total: f64 = counts.iter().zip(weights).map(|(&n, &w)| n as f64 * w).sum();
    if total == 0.0 {
        return 1.0;
    }
    counts[class] as f64 * weights[class] / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub flavor: TreeFlavor,
    pub features: FeatureSet,
    pub class_names: Vec<String>,
    /// Class weights used in training; they also decide pruned-node labels.
    pub class_weights: Vec<f64>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn label_class_names() -> Vec<String> {
        vec![Label::Desirable.to_string(), Label::Undesirable.to_string()]
    }

    /// A one-leaf classifier that always answers `label`.
    pub fn constant(features: FeatureSet, label: Label) -> DecisionTree {
        let mut counts = vec![0, 0];
        counts[label.class()] = 1;
        DecisionTree {
            flavor: TreeFlavor::Classifier,
            features,
            class_names: Self::label_class_names(),
            class_weights: vec![1.0, 1.0],
            root: TreeNode::Leaf {
                class: label.class(),
                counts,
            },
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn classify(&self, row: &[f64]) -> usize {
        self.root.walk(|f| row[f])
    }

    pub fn classify_label(&self, row: &[f64]) -> Label {
        Label::from_class(self.classify(row))
    }

    /// Classifies a pair, computing only the features on the visited path.
    pub fn classify_pair(&self, state: &[f64], action: &Action) -> usize {
        self.root
            .walk(|f| eval_feature(&self.features.features[f], state, action))
    }

    pub fn classify_pair_label(&self, state: &[f64], action: &Action) -> Label {
        Label::from_class(self.classify_pair(state, action))
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn class_name(&self, class: usize) -> &str {
        self.class_names
            .get(class)
            .map(String::as_str)
            .unwrap_or("?")
    }

    pub fn predict_rows(&self, x: ndarray::ArrayView2<f64>) -> Vec<usize> {
        x.rows()
            .into_iter()
            .map(|row| self.root.walk(|f| row[f]))
            .collect()
    }
}

pub fn accuracy(tree: &DecisionTree, x: ndarray::ArrayView2<f64>, y: &[usize]) -> f64 {
    let pred = tree.predict_rows(x);
    if y.is_empty() {
        return 0.0;
    }
    pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
}

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy_of(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let k = y_true.iter().chain(y_pred).copied().max().map_or(0, |m| m + 1);
    let mut hits = vec![0u64; k];
    let mut support = vec![0u64; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let present: Vec<usize> = (0..k).filter(|&c| support[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::invalid(
            "balanced accuracy needs samples of at least two classes",
        ));
    }
    let sum: f64 = present
        .iter()
        .map(|&c| hits[c] as f64 / support[c] as f64)
        .sum();
    Ok(sum / present.len() as f64)
}

pub fn balanced_accuracy(tree: &DecisionTree, x: ndarray::ArrayView2<f64>, y: &[usize]) -> Result<f64> {
    balanced_accuracy_of(y, &tree.predict_rows(x))
}
