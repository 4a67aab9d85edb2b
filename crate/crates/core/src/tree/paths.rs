//! Root-to-leaf path listings for reading a tree as a set of rules.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{majority_class, weighted_purity, DecisionTree, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub feature: usize,
    pub feature_name: String,
    pub threshold: f64,
    /// `true` for the `feature <= threshold` branch.
    pub le: bool,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = if self.le { "<=" } else { ">" };
        write!(f, "{} {} {}", self.feature_name, op, fmt_threshold(self.threshold))
    }
}

fn fmt_threshold(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePath {
    /// Moves from the root, `L` or `R` per level.
    pub node_path: String,
    pub clauses: Vec<Clause>,
    pub class: usize,
    pub class_name: String,
    pub counts: Vec<u64>,
    /// Weighted share of `class` among the samples reaching this node.
    pub purity: f64,
    /// The path stops above a deeper subtree.
    pub truncated: bool,
}

impl fmt::Display for TreePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clauses.is_empty() {
            write!(f, "(always)")?;
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{c}")?;
        }
        write!(
            f,
            " -> {} (purity {:.3}, counts {:?}{})",
            self.class_name,
            self.purity,
            self.counts,
            if self.truncated { ", summarized" } else { "" }
        )
    }
}

/// Lists every path in left-first order. With `depth_limit`, nodes at that
/// depth stand in for their subtrees, labeled with the subtree's majority.
pub fn enumerate_paths(tree: &DecisionTree, depth_limit: Option<usize>) -> Vec<TreePath> {
    let mut out = Vec::new();
    let mut clauses = Vec::new();
    let mut node_path = String::new();
    collect(tree, &tree.root, depth_limit, &mut clauses, &mut node_path, &mut out);
    out
}

fn collect(
    tree: &DecisionTree,
    node: &TreeNode,
    depth_limit: Option<usize>,
    clauses: &mut Vec<Clause>,
    node_path: &mut String,
    out: &mut Vec<TreePath>,
) {
    let at_limit = depth_limit.is_some_and(|d| clauses.len() >= d);
    match node {
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
            ..
        } if !at_limit => {
            let name = tree
                .features
                .features
                .get(*feature)
                .map_or_else(|| format!("f{feature}"), |r| r.display_name.clone());
            for (le, child, step) in [(true, left, 'L'), (false, right, 'R')] {
                clauses.push(Clause {
                    feature: *feature,
                    feature_name: name.clone(),
                    threshold: *threshold,
                    le,
                });
                node_path.push(step);
                collect(tree, child, depth_limit, clauses, node_path, out);
                node_path.pop();
                clauses.pop();
            }
        }
        _ => {
            let counts = node.counts().to_vec();
            let class = match node {
                TreeNode::Leaf { class, .. } => *class,
                TreeNode::Internal { .. } => majority_class(&counts, &tree.class_weights),
            };
            out.push(TreePath {
                node_path: node_path.clone(),
                clauses: clauses.clone(),
                class,
                class_name: tree.class_name(class).to_string(),
                purity: weighted_purity(&counts, &tree.class_weights, class),
                truncated: !node.is_leaf(),
                counts,
            });
        }
    }
}
