//! Non-destructive manual edits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{majority_class, DecisionTree, TreeNode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Left,
    Right,
}

/// A node address: the left/right moves from the root. Written as a string
/// of `L` and `R`; the empty string is the root.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodePath(pub Vec<Step>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }
}

impl FromStr for NodePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'L' => Ok(Step::Left),
                'R' => Ok(Step::Right),
                _ => Err(Error::TreeEdit(format!("bad node path {s:?}: use L and R"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(NodePath)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Step::Left => "L",
                Step::Right => "R",
            })?;
        }
        Ok(())
    }
}

impl Serialize for NodePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NodePath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TreeEdit {
    /// Replaces the subtree with a leaf labeled by its majority class.
    PruneToLeaf { path: NodePath },
    SetThreshold { path: NodePath, threshold: f64 },
    /// `class` is a class index; for label trees 0 is DESIRABLE.
    RelabelLeaf { path: NodePath, class: usize },
}

impl TreeEdit {
    pub fn path(&self) -> &NodePath {
        match self {
            TreeEdit::PruneToLeaf { path }
            | TreeEdit::SetThreshold { path, .. }
            | TreeEdit::RelabelLeaf { path, .. } => path,
        }
    }
}

fn locate<'a>(root: &'a mut TreeNode, path: &NodePath) -> Result<&'a mut TreeNode> {
    let mut node = root;
    for (depth, step) in path.0.iter().enumerate() {
        node = match node {
            TreeNode::Internal { left, right, .. } => match step {
                Step::Left => left,
                Step::Right => right,
            },
            TreeNode::Leaf { .. } => {
                return Err(Error::TreeEdit(format!(
                    "node path {path} runs past a leaf at depth {depth}"
                )))
            }
        };
    }
    Ok(node)
}

/// Applies `edit` to a copy of `tree`.
pub fn edit_tree(tree: &DecisionTree, edit: &TreeEdit) -> Result<DecisionTree> {
    let mut out = tree.clone();
    let weights = tree.class_weights.clone();
    let num_classes = tree.num_classes();
    let node = locate(&mut out.root, edit.path())?;
    match edit {
        TreeEdit::PruneToLeaf { .. } => {
            let counts = node.counts().to_vec();
            *node = TreeNode::Leaf {
                class: majority_class(&counts, &weights),
                counts,
            };
        }
        TreeEdit::SetThreshold { path, threshold } => {
            if !threshold.is_finite() {
                return Err(Error::TreeEdit("threshold must be finite".into()));
            }
            match node {
                TreeNode::Internal { threshold: t, .. } => *t = *threshold,
                TreeNode::Leaf { .. } => {
                    return Err(Error::TreeEdit(format!(
                        "node {path:?} is a leaf and has no threshold",
                        path = path.to_string()
                    )))
                }
            }
        }
        TreeEdit::RelabelLeaf { path, class } => {
            if *class >= num_classes {
                return Err(Error::TreeEdit(format!(
                    "class {class} out of range for {num_classes} classes"
                )));
            }
            match node {
                TreeNode::Leaf { class: c, .. } => *c = *class,
                TreeNode::Internal { .. } => {
                    return Err(Error::TreeEdit(format!(
                        "node {:?} is not a leaf",
                        path.to_string()
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Prunes every node at `depth` to a majority leaf.
pub fn truncate_depth(tree: &DecisionTree, depth: usize) -> DecisionTree {
    fn go(node: &mut TreeNode, remaining: usize, weights: &[f64]) {
        if let TreeNode::Internal { left, right, counts, .. } = node {
            if remaining == 0 {
                let counts = counts.clone();
                *node = TreeNode::Leaf {
                    class: majority_class(&counts, weights),
                    counts,
                };
            } else {
                go(left, remaining - 1, weights);
                go(right, remaining - 1, weights);
            }
        }
    }
    let mut out = tree.clone();
    go(&mut out.root, depth, &tree.class_weights);
    out
}
