//! Fitting and scoring label trees on labeled pairs.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::env::rng_for;
use crate::error::{Error, Result};
use crate::grammar::{featurize, instantiate_grammar, FeatureSet};
use crate::tree::{accuracy, balanced_accuracy, train_tree, DecisionTree, TreeFlavor, TreeParams};
use crate::types::{LabeledPair, Label};

/// Shuffles `0..n` and returns `(train, holdout)` with
/// `round(n * fraction)` holdout indices.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, 0));
    let k = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let holdout = idx.split_off(n - k);
    (idx, holdout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeScores {
    pub samples: usize,
    pub accuracy: f64,
    /// `None` unless both labels occur.
    pub balanced_accuracy: Option<f64>,
}

pub fn score_rows(tree: &DecisionTree, x: &Array2<f64>, y: &[usize]) -> TreeScores {
    TreeScores {
        samples: y.len(),
        accuracy: accuracy(tree, x.view(), y),
        balanced_accuracy: balanced_accuracy(tree, x.view(), y).ok(),
    }
}

/// Scores a label tree against labeled pairs.
pub fn score_label_tree(tree: &DecisionTree, pairs: &[LabeledPair]) -> Result<TreeScores> {
    let (x, y) = featurize(pairs, &tree.features)?;
    Ok(score_rows(tree, &x, &y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTreeReport {
    pub train: TreeScores,
    pub holdout: Option<TreeScores>,
    pub undesirable: usize,
    pub desirable: usize,
    pub node_count: usize,
    pub depth: usize,
}

/// Trains a label tree on grammar features, holding out `holdout_fraction`
/// of the pairs for scoring.
pub fn fit_label_tree(
    pairs: &[LabeledPair],
    params: &TreeParams,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(DecisionTree, LabelTreeReport)> {
    let env = pairs
        .first()
        .ok_or_else(|| Error::invalid("no labeled pairs to train on"))?
        .env;
    fit_label_tree_with(pairs, &instantiate_grammar(env), params, holdout_fraction, seed)
}

pub fn fit_label_tree_with(
    pairs: &[LabeledPair],
    features: &FeatureSet,
    params: &TreeParams,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(DecisionTree, LabelTreeReport)> {
    let (x, y) = featurize(pairs, features)?;
    let (train_idx, test_idx) = holdout_split(y.len(), holdout_fraction, seed);
    if train_idx.is_empty() {
        return Err(Error::invalid("holdout leaves no training pairs"));
    }
    let pick = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        (x.select(Axis(0), idx), idx.iter().map(|&i| y[i]).collect())
    };
    let (xtr, ytr) = pick(&train_idx);
    let tree = train_tree(
        xtr.view(),
        &ytr,
        params,
        features,
        TreeFlavor::Classifier,
        DecisionTree::label_class_names(),
    )?;
    let holdout = (!test_idx.is_empty()).then(|| {
        let (xte, yte) = pick(&test_idx);
        score_rows(&tree, &xte, &yte)
    });
    let undesirable = y.iter().filter(|&&c| c == Label::Undesirable.class()).count();
    let report = LabelTreeReport {
        train: score_rows(&tree, &xtr, &ytr),
        holdout,
        undesirable,
        desirable: y.len() - undesirable,
        node_count: tree.node_count(),
        depth: tree.depth(),
    };
    Ok((tree, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_disjointness() {
        let (a, b) = holdout_split(10, 0.2, 1);
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(holdout_split(10, 0.2, 1), (a, b));
    }
}
