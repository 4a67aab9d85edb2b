//! Multiplicative reward penalty driven by a label tree.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tree::{DecisionTree, TreeFlavor};
use crate::types::{Action, BehaviorCounts, EnvId, Label};

/// Scales `reward` so the result never exceeds it: non-negative rewards are
/// multiplied by `modifier`, negative ones divided by it.
pub fn modify_reward(reward: f64, modifier: f64) -> Result<f64> {
    if !(modifier > 0.0 && modifier <= 1.0) {
        return Err(Error::invalid(format!(
            "reward modifier must lie in (0, 1], got {modifier}"
        )));
    }
    Ok(if reward >= 0.0 {
        reward * modifier
    } else {
        reward * (1.0 / modifier)
    })
}

#[derive(Debug, Clone)]
pub struct ShapingConfig {
    tree: Arc<DecisionTree>,
    reward_modifier: f64,
}

impl ShapingConfig {
    /// Checks the modifier range and that `tree` labels pairs of `env`.
    pub fn new(env: EnvId, tree: Arc<DecisionTree>, reward_modifier: f64) -> Result<Self> {
        modify_reward(0.0, reward_modifier)?;
        if tree.flavor != TreeFlavor::Classifier || tree.num_classes() != 2 {
            return Err(Error::Config(
                "shaping needs a DESIRABLE/UNDESIRABLE classifier tree".into(),
            ));
        }
        if tree.features.env != env {
            return Err(Error::MixedEnvironments {
                expected: env,
                found: tree.features.env,
            });
        }
        tree.features.validate()?;
        Ok(ShapingConfig {
            tree,
            reward_modifier,
        })
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }

    pub fn reward_modifier(&self) -> f64 {
        self.reward_modifier
    }

    pub fn classify(&self, state: &[f64], action: &Action) -> Label {
        self.tree.classify_pair_label(state, action)
    }

    /// The modifier for an undesirable pair, 1 otherwise.
    pub fn get_reward_modifier(&self, state: &[f64], action: &Action) -> f64 {
        match self.classify(state, action) {
            Label::Undesirable => self.reward_modifier,
            Label::Desirable => 1.0,
        }
    }
}

/// Per-run hook the trainer calls once per step, between computing the
/// reward and the learning update.
#[derive(Debug, Clone)]
pub struct ShapingHook {
    config: ShapingConfig,
    counts: BehaviorCounts,
}

impl ShapingHook {
    pub fn new(config: ShapingConfig) -> Self {
        ShapingHook {
            config,
            counts: BehaviorCounts::default(),
        }
    }

    pub fn config(&self) -> &ShapingConfig {
        &self.config
    }

    /// Tree classifications seen so far.
    pub fn counts(&self) -> BehaviorCounts {
        self.counts
    }

    pub fn apply(&mut self, state: &[f64], action: &Action, reward: f64) -> f64 {
        let label = self.config.classify(state, action);
        self.counts.record(label);
        match label {
            Label::Undesirable => modify_reward(reward, self.config.reward_modifier)
                .expect("modifier validated at construction"),
            Label::Desirable => reward,
        }
    }
}
