mod common;

use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use ubr_core::env::rng_for;
use ubr_core::tree::{
    best_split, deserialize_tree, edit_tree, enumerate_paths, export_dot, serialize_tree, train_tree,
    truncate_depth, ClassWeights, DecisionTree, NodePath, TreeEdit, TreeFlavor, TreeNode, TreeParams,
};
use ubr_core::{Error, Label};

fn names(k: usize) -> Vec<String> {
    if k == 2 {
        DecisionTree::label_class_names()
    } else {
        (0..k).map(|c| format!("c{c}")).collect()
    }
}

fn fit(x: &Array2<f64>, y: &[usize], k: usize, params: &TreeParams) -> DecisionTree {
    train_tree(
        x.view(),
        y,
        params,
        &common::raw_features(x.ncols()),
        TreeFlavor::Classifier,
        names(k),
    )
    .unwrap()
}

#[test]
fn root_split_matches_exhaustive_search() {
    let mut rng = rng_for(7, 0);
    let weightings = [ClassWeights::Balanced, ClassWeights::Uniform];
    for case in 0..300 {
        let (x, y, k) = common::random_dataset(&mut rng);
        let params = TreeParams {
            max_depth: 4,
            min_samples_leaf: rng.random_range(1..4),
            class_weights: weightings[case % 2].clone(),
        };
        let got = best_split(x.view(), &y, k, &params).unwrap();
        let want = common::brute_force_split(&x, &y, k, &params);
        match (got, want) {
            (None, None) => {}
            (Some(s), Some((f, t, imp))) => {
                assert_eq!((s.feature, s.threshold), (f, t), "case {case}");
                assert!((s.impurity - imp).abs() < 1e-9, "case {case}");
            }
            (g, w) => panic!("case {case}: {g:?} vs {w:?}"),
        }
    }
}

#[test]
fn ties_prefer_lowest_feature_then_threshold() {
    // Both columns separate the classes perfectly.
    let x = Array2::from_shape_vec((4, 2), vec![0.0, 5.0, 0.0, 5.0, 1.0, 9.0, 1.0, 9.0]).unwrap();
    let s = best_split(x.view(), &[0, 0, 1, 1], 2, &TreeParams::default())
        .unwrap()
        .unwrap();
    assert_eq!((s.feature, s.threshold, s.impurity), (0, 0.5, 0.0));
}

#[test]
fn balanced_weights_shift_the_root_split() {
    // One minority sample at x=3; uniform weights cannot beat the
    // majority, balanced weights isolate it.
    let x = Array2::from_shape_vec((6, 1), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let y = [0, 0, 0, 1, 0, 0];
    let t = fit(&x, &y, 2, &TreeParams::with_depth(2));
    assert_eq!(t.classify(&[3.0]), 1);
    let w = TreeParams::default().resolve_weights(&y, 2).unwrap();
    assert!((w[0] - 6.0 / 10.0).abs() < 1e-12 && (w[1] - 3.0).abs() < 1e-12);
}

#[test]
fn training_accuracy_grows_with_depth() {
    let mut rng = rng_for(11, 0);
    for _ in 0..40 {
        let (x, y, k) = common::random_dataset(&mut rng);
        let params = |d| TreeParams {
            max_depth: d,
            class_weights: ClassWeights::Uniform,
            ..TreeParams::default()
        };
        let mut prev = 0.0;
        for d in 1..6 {
            let t = fit(&x, &y, k, &params(d));
            assert!(t.depth() <= d);
            let acc = ubr_core::tree::accuracy(&t, x.view(), &y);
            assert!(acc + 1e-12 >= prev, "depth {d}: {acc} < {prev}");
            prev = acc;
        }
    }
}

#[test]
fn leaves_respect_min_samples() {
    let mut rng = rng_for(13, 0);
    for _ in 0..40 {
        let (x, y, k) = common::random_dataset(&mut rng);
        let msl = 3;
        let t = fit(
            &x,
            &y,
            k,
            &TreeParams {
                max_depth: 6,
                min_samples_leaf: msl,
                class_weights: ClassWeights::Balanced,
            },
        );
        fn check(n: &TreeNode, msl: u64, root: bool) {
            let total: u64 = n.counts().iter().sum();
            assert!(root || total >= msl);
            if let TreeNode::Internal { left, right, counts, .. } = n {
                let sum: Vec<u64> = left
                    .counts()
                    .iter()
                    .zip(right.counts())
                    .map(|(a, b)| a + b)
                    .collect();
                assert_eq!(&sum, counts);
                check(left, msl, false);
                check(right, msl, false);
            }
        }
        check(&t.root, msl as u64, true);
    }
}

/// Recursive walker written against the serialized JSON, independent of
/// the library's iterative one.
fn naive_classify(node: &serde_json::Value, row: &[f64]) -> usize {
    if node["node"] == "leaf" {
        return node["class"].as_u64().unwrap() as usize;
    }
    let f = node["feature"].as_u64().unwrap() as usize;
    let t = node["threshold"].as_f64().unwrap();
    naive_classify(&node[if row[f] <= t { "left" } else { "right" }], row)
}

#[test]
fn classify_agrees_with_naive_walker_and_survives_round_trip() {
    let mut rng = rng_for(17, 0);
    for _ in 0..30 {
        let (x, y, k) = common::random_dataset(&mut rng);
        let t = fit(&x, &y, k, &TreeParams::with_depth(5));
        let text = serialize_tree(&t).unwrap();
        let back = deserialize_tree(&text).unwrap();
        assert_eq!(back, t);
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        for row in x.rows() {
            let row = row.to_vec();
            assert_eq!(t.classify(&row), naive_classify(&json["root"], &row));
        }
        assert_eq!(t.predict_rows(x.view()), back.predict_rows(x.view()));
    }
}

#[test]
fn rejects_bad_inputs() {
    let fs = common::raw_features(1);
    let x = Array2::from_shape_vec((2, 1), vec![0.0, f64::NAN]).unwrap();
    let r = train_tree(x.view(), &[0, 1], &TreeParams::default(), &fs, TreeFlavor::Classifier, names(2));
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
    let x = Array2::<f64>::zeros((0, 1));
    assert!(train_tree(x.view(), &[], &TreeParams::default(), &fs, TreeFlavor::Classifier, names(2)).is_err());
    let x = Array2::<f64>::zeros((2, 1));
    assert!(train_tree(x.view(), &[0, 2], &TreeParams::default(), &fs, TreeFlavor::Classifier, names(2)).is_err());
    assert!(train_tree(x.view(), &[0, 1], &TreeParams::with_depth(0), &fs, TreeFlavor::Classifier, names(2)).is_err());
}

#[test]
fn tampered_tree_files_are_rejected() {
    let x = Array2::from_shape_vec((4, 1), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let t = fit(&x, &[0, 0, 1, 1], 2, &TreeParams::default());
    let text = serialize_tree(&t).unwrap();
    assert!(deserialize_tree(&text.replace("\"version\": 1", "\"version\": 9")).is_err());
    assert!(deserialize_tree(&text.replace("ubr-tree", "other")).is_err());
    assert!(deserialize_tree(&text.replace("\"feature\": 0", "\"feature\": 5")).is_err());
    assert!(deserialize_tree("{").is_err());
}

fn two_level_tree() -> DecisionTree {
    // x0 <= 0.5 ? (x1 <= 0.5 ? D : U) : U
    let x = Array2::from_shape_vec(
        (6, 2),
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    fit(&x, &[0, 0, 1, 1, 1, 1], 2, &TreeParams::default())
}

#[test]
fn paths_list_every_leaf_in_order() {
    let t = two_level_tree();
    let paths = enumerate_paths(&t, None);
    assert_eq!(paths.len(), t.leaf_count());
    let addrs: Vec<&str> = paths.iter().map(|p| p.node_path.as_str()).collect();
    assert_eq!(addrs, ["LL", "LR", "R"]);
    assert_eq!(paths[0].class_name, "DESIRABLE");
    assert_eq!(paths[0].to_string(), "x0 <= 0.5 AND x1 <= 0.5 -> DESIRABLE (purity 1.000, counts [2, 0])");
    assert!(paths.iter().all(|p| !p.truncated && p.purity == 1.0));

    let top = enumerate_paths(&t, Some(1));
    assert_eq!(top.len(), 2);
    assert!(top[0].truncated && !top[1].truncated);
    assert_eq!(top[0].counts, vec![2, 1]);
    // Balanced weights: 2 * 1.5 > 1 * 0.75, so the summary stays DESIRABLE.
    assert_eq!(top[0].class, 0);
    assert_eq!(enumerate_paths(&t, Some(0))[0].to_string().split(" ->").next(), Some("(always)"));
}

#[test]
fn edits_copy_and_reshape() {
    let t = two_level_tree();
    let pruned = edit_tree(&t, &TreeEdit::PruneToLeaf { path: "L".parse().unwrap() }).unwrap();
    assert_eq!(pruned.node_count(), 3);
    assert_eq!(t.node_count(), 5, "original untouched");

    let relabeled = edit_tree(
        &t,
        &TreeEdit::RelabelLeaf {
            path: "R".parse().unwrap(),
            class: 0,
        },
    )
    .unwrap();
    assert_eq!(relabeled.classify(&[1.0, 1.0]), 0);

    let moved = edit_tree(
        &t,
        &TreeEdit::SetThreshold {
            path: NodePath::root(),
            threshold: 2.0,
        },
    )
    .unwrap();
    assert_eq!(moved.classify(&[1.0, 0.0]), 0);

    let bad = [
        TreeEdit::PruneToLeaf { path: "RL".parse().unwrap() },
        TreeEdit::RelabelLeaf { path: NodePath::root(), class: 0 },
        TreeEdit::RelabelLeaf { path: "R".parse().unwrap(), class: 2 },
        TreeEdit::SetThreshold { path: "R".parse().unwrap(), threshold: 0.0 },
        TreeEdit::SetThreshold { path: NodePath::root(), threshold: f64::NAN },
    ];
    for e in &bad {
        assert!(matches!(edit_tree(&t, e), Err(Error::TreeEdit(_))), "{e:?}");
    }
    assert!(NodePath::from_str("LX").is_err());
    let edit: TreeEdit = serde_json::from_str(r#"{"op":"prune_to_leaf","path":"LR"}"#).unwrap();
    assert_eq!(edit.path().to_string(), "LR");
}

#[test]
fn truncation_matches_depth_limited_paths() {
    let mut rng = rng_for(19, 0);
    for _ in 0..20 {
        let (x, y, k) = common::random_dataset(&mut rng);
        let t = fit(&x, &y, k, &TreeParams::with_depth(6));
        for d in 0..4 {
            let cut = truncate_depth(&t, d);
            assert!(cut.depth() <= d);
            let paths = enumerate_paths(&t, Some(d));
            assert_eq!(paths.len(), cut.leaf_count());
            for row in x.rows() {
                let row = row.to_vec();
                let leaf = paths
                    .iter()
                    .find(|p| p.clauses.iter().all(|c| (row[c.feature] <= c.threshold) == c.le))
                    .unwrap();
                assert_eq!(cut.classify(&row), leaf.class);
            }
        }
        assert_eq!(truncate_depth(&t, 10), t);
    }
}

#[test]
fn dot_export_has_one_node_per_tree_node() {
    let t = two_level_tree();
    let dot = export_dot(&t);
    assert!(dot.starts_with("digraph"));
    let declared = dot.lines().filter(|l| l.contains(" [") && !l.contains("->") && !l.contains("node [")).count();
    assert_eq!(declared, t.node_count());
    assert_eq!(dot.matches(" -> ").count(), t.node_count() - 1);
    assert!(dot.contains("x0 <= 0.5"));
}

#[test]
fn constant_tree_labels_everything() {
    let t = DecisionTree::constant(ubr_core::grammar::instantiate_grammar(ubr_core::EnvId::Snake), Label::Undesirable);
    assert_eq!(t.classify_pair_label(&[0.0; 12], &ubr_core::Action::discrete(0)), Label::Undesirable);
    assert_eq!(t.node_count(), 1);
}
