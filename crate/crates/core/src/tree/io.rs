//! Tree files and Graphviz export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DecisionTree, TreeFlavor, TreeNode};
use crate::error::{Error, Result};
use crate::grammar::FeatureSet;

pub const TREE_FORMAT: &str = "ubr-tree";
pub const TREE_VERSION: u32 = 1;

#[derive(Serialize)]
struct TreeFileRef<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    tree: &'a DecisionTree,
}

#[derive(Deserialize)]
struct Envelope {
    format: String,
    version: u32,
}

/// JSON with an embedded feature set, so a tree file is self-contained.
pub fn serialize_tree(tree: &DecisionTree) -> Result<String> {
    serde_json::to_string_pretty(&TreeFileRef {
        format: TREE_FORMAT,
        version: TREE_VERSION,
        tree,
    })
    .map_err(|e| Error::Schema(e.to_string()))
}

pub fn deserialize_tree(text: &str) -> Result<DecisionTree> {
    let parse = |e: serde_json::Error| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let env: Envelope = serde_json::from_str(text).map_err(parse)?;
    if env.format != TREE_FORMAT {
        return Err(Error::Schema(format!("not a tree file: format {:?}", env.format)));
    }
    if env.version != TREE_VERSION {
        return Err(Error::Schema(format!(
            "tree file version {} is not supported (expected {TREE_VERSION})",
            env.version
        )));
    }
    let tree: DecisionTree = serde_json::from_str(text).map_err(parse)?;
    validate(&tree)?;
    Ok(tree)
}

fn validate(tree: &DecisionTree) -> Result<()> {
    tree.features.validate()?;
    let k = tree.num_classes();
    if k < 1 {
        return Err(Error::Schema("tree has no classes".into()));
    }
    if tree.class_weights.len() != k {
        return Err(Error::Schema(format!(
            "{} class weights for {k} classes",
            tree.class_weights.len()
        )));
    }
    if tree.flavor == TreeFlavor::Policy && k != tree.features.env.num_actions() {
        return Err(Error::Schema(format!(
            "policy tree has {k} classes, environment has {} actions",
            tree.features.env.num_actions()
        )));
    }
    let n_features = tree.features.len();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        if node.counts().len() != k {
            return Err(Error::Schema(format!(
                "node counts have {} entries for {k} classes",
                node.counts().len()
            )));
        }
        match node {
            TreeNode::Leaf { class, .. } => {
                if *class >= k {
                    return Err(Error::Schema(format!("leaf class {class} out of range")));
                }
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                if *feature >= n_features {
                    return Err(Error::Schema(format!(
                        "dangling feature index {feature} (feature set has {n_features})"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::Schema("non-finite threshold".into()));
                }
                stack.push(left);
                stack.push(right);
            }
        }
    }
    Ok(())
}

/// Graphviz digraph, nodes numbered in preorder.
pub fn export_dot(tree: &DecisionTree) -> String {
    fn name(fs: &FeatureSet, f: usize) -> String {
        fs.features
            .get(f)
            .map_or_else(|| format!("f{f}"), |r| r.display_name.clone())
    }
    fn escape(s: &str) -> String {
        s.replace('\\', "\\\\").replace('"', "\\\"")
    }
    fn go(tree: &DecisionTree, node: &TreeNode, next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match node {
            TreeNode::Leaf { class, counts } => {
                let _ = writeln!(
                    out,
                    "  n{id} [shape=box, label=\"{}\\n{counts:?}\"];",
                    escape(tree.class_name(*class))
                );
            }
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let _ = writeln!(
                    out,
                    "  n{id} [label=\"{} <= {threshold}\"];",
                    escape(&name(&tree.features, *feature))
                );
                let l = go(tree, left, next, out);
                let r = go(tree, right, next, out);
                let _ = writeln!(out, "  n{id} -> n{l} [label=\"yes\"];");
                let _ = writeln!(out, "  n{id} -> n{r} [label=\"no\"];");
            }
        }
        id
    }
    let mut out = String::from("digraph tree {\n  node [fontname=\"monospace\"];\n");
    let mut next = 0;
    go(tree, &tree.root, &mut next, &mut out);
    out.push_str("}\n");
    out
}
