//! Decision-tree guided reward shaping for reducing undesirable behavior in
//! reinforcement-learning agents.
//!
//! The workflow: record traces of a baseline agent, label (state, action)
//! pairs, fit a [`tree::DecisionTree`] over grammar features, then retrain
//! with a [`shaping::ShapingHook`] that penalizes the reward whenever the
//! tree calls a pair undesirable.

pub mod agents;
pub mod distill;
pub mod env;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod labelers;
pub mod pipeline;
pub mod shaping;
pub mod tree;
pub mod types;

pub use error::{Error, Result};
pub use types::{Action, BehaviorCounts, EnvId, Label, LabelSource, LabeledPair, Transition};
