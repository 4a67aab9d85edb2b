//! Oracles shared by the integration suites.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ubr_core::grammar::{FeatureSet, GrammarRule, RuleKind};
use ubr_core::tree::{ClassWeights, TreeParams};
use ubr_core::EnvId;

/// Value features over the first `n` congestion state entries.
pub fn raw_features(n: usize) -> FeatureSet {
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

/// A small random dataset with few distinct values, so ties occur.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>, usize) {
    let n = rng.random_range(2..40);
    let d = rng.random_range(1..5);
    let k = rng.random_range(2..4);
    let levels = rng.random_range(2..6);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..levels) as f64 * 0.5);
    let y = (0..n).map(|_| rng.random_range(0..k)).collect();
    (x, y, k)
}

pub fn class_weights(params: &TreeParams, y: &[usize], k: usize) -> Vec<f64> {
    match &params.class_weights {
        ClassWeights::Uniform => vec![1.0; k],
        ClassWeights::Custom(w) => w.clone(),
        ClassWeights::Balanced => {
            let present: Vec<usize> = (0..k).filter(|c| y.contains(c)).collect();
            (0..k)
                .map(|c| {
                    let nc = y.iter().filter(|&&v| v == c).count();
                    if nc == 0 {
                        1.0
                    } else {
                        y.len() as f64 / (present.len() * nc) as f64
                    }
                })
                .collect()
        }
    }
}

fn gini(mass: &[f64]) -> f64 {
    let t: f64 = mass.iter().sum();
    if t <= 0.0 {
        return 0.0;
    }
    1.0 - mass.iter().map(|m| (m / t).powi(2)).sum::<f64>()
}

/// Exhaustive split search: every feature, every midpoint between
/// consecutive distinct values, weighted Gini of the two sides. Ties within
/// 1e-12 keep the lowest feature, then the lowest threshold.
pub fn brute_force_split(
    x: &Array2<f64>,
    y: &[usize],
    k: usize,
    params: &TreeParams,
) -> Option<(usize, f64, f64)> {
    let w = class_weights(params, y, k);
    let n = y.len();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.ncols() {
        let mut vals: Vec<f64> = (0..n).map(|i| x[[i, f]]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for pair in vals.windows(2) {
            let t = 0.5 * (pair[0] + pair[1]);
            let mut left = vec![0.0; k];
            let mut right = vec![0.0; k];
            let mut n_left = 0;
            for i in 0..n {
                if x[[i, f]] <= t {
                    left[y[i]] += w[y[i]];
                    n_left += 1;
                } else {
                    right[y[i]] += w[y[i]];
                }
            }
            if n_left < params.min_samples_leaf || n - n_left < params.min_samples_leaf {
                continue;
            }
            let wl: f64 = left.iter().sum();
            let wr: f64 = right.iter().sum();
            let imp = (wl * gini(&left) + wr * gini(&right)) / (wl + wr);
            if best.is_none_or(|b| imp < b.2 - 1e-12) {
                best = Some((f, t, imp));
            }
        }
    }
    best
}

/// Central-difference derivative of `f` at `x` along coordinate `i`.
pub fn numeric_partial(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut m = x.to_vec();
    p[i] += h;
    m[i] -= h;
    (f(&p) - f(&m)) / (2.0 * h)
}
