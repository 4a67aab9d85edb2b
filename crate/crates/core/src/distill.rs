//! Tree-policy distillation by dataset aggregation: imitate a trained
//! agent with a decision tree over raw state entries.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::agents::{run_policy, EvalReport, Policy};
use crate::env::{make_env_on, stream, EnvConfig};
use crate::error::{Error, Result};
use crate::grammar::raw_feature_set;
use crate::labelers::LabelRuleConfig;
use crate::tree::{train_tree, ClassWeights, DecisionTree, TreeFlavor, TreeParams};
use crate::types::{Action, EnvId};

/// A policy-flavored tree acting greedily.
#[derive(Debug, Clone)]
pub struct TreePolicy {
    pub tree: DecisionTree,
}

impl TreePolicy {
    pub fn new(tree: DecisionTree) -> Result<Self> {
        if tree.flavor != TreeFlavor::Policy {
            return Err(Error::Config("expected a policy tree".into()));
        }
        Ok(TreePolicy { tree })
    }
}

impl Policy for TreePolicy {
    fn env(&self) -> EnvId {
        self.tree.features.env
    }

    fn act(&self, state: &[f64]) -> usize {
        // Raw features never read the action.
        self.tree.classify_pair(state, &Action::discrete(0))
    }
}

pub fn action_names(env: EnvId) -> Vec<String> {
    match env {
        EnvId::Snake => crate::env::snake::Direction::NAMES.iter().map(|s| s.to_string()).collect(),
        EnvId::Traffic => crate::env::traffic::Phase::NAMES.iter().map(|s| s.to_string()).collect(),
        EnvId::Congestion => crate::env::congestion::RATE_DELTAS
            .iter()
            .map(|d| format!("{d:+}"))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub rounds: usize,
    pub rollouts_per_round: usize,
    pub params: TreeParams,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            rounds: 4,
            rollouts_per_round: 50,
            params: TreeParams {
                max_depth: 10,
                min_samples_leaf: 1,
                class_weights: ClassWeights::Uniform,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub new_states: usize,
    pub dataset_size: usize,
    /// Tree/teacher agreement on the aggregated dataset after retraining.
    pub train_agreement: f64,
    pub node_count: usize,
}

/// Round 0 rolls out the teacher; each later round rolls out the current
/// tree, labels the visited states with the teacher's action, and retrains
/// on everything gathered so far.
pub fn distill_policy(
    teacher: &dyn Policy,
    env_config: &EnvConfig,
    cfg: &DistillConfig,
    seed: u64,
) -> Result<(DecisionTree, Vec<RoundStats>)> {
    if cfg.rounds == 0 || cfg.rollouts_per_round == 0 {
        return Err(Error::Config("distillation needs at least one round and rollout".into()));
    }
    let env_id = teacher.env();
    let features = raw_feature_set(env_id);
    let mut env = make_env_on(env_id, env_config, seed, stream::ENV);
    let rules = LabelRuleConfig::default();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut actions: Vec<usize> = Vec::new();
    let mut tree: Option<TreePolicy> = None;
    let mut stats = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let (_, traces) = match &tree {
            None => run_policy(teacher, env.as_mut(), cfg.rollouts_per_round, &rules, true)?,
            Some(t) => run_policy(t, env.as_mut(), cfg.rollouts_per_round, &rules, true)?,
        };
        let new_states = traces.len();
        for t in traces {
            actions.push(teacher.act(&t.state));
            states.push(t.state);
        }
        let x = Array2::from_shape_fn((states.len(), env_id.state_dim()), |(i, j)| states[i][j]);
        let fitted = train_tree(
            x.view(),
            &actions,
            &cfg.params,
            &features,
            TreeFlavor::Policy,
            action_names(env_id),
        )?;
        let pred = fitted.predict_rows(x.view());
        let agree = pred.iter().zip(&actions).filter(|(p, a)| p == a).count();
        stats.push(RoundStats {
            round,
            new_states,
            dataset_size: actions.len(),
            train_agreement: agree as f64 / actions.len() as f64,
            node_count: fitted.node_count(),
        });
        tree = Some(TreePolicy::new(fitted)?);
    }
    Ok((tree.expect("at least one round").tree, stats))
}

/// Fraction of `states` on which the two policies pick the same action.
pub fn agreement(a: &dyn Policy, b: &dyn Policy, states: &[Vec<f64>]) -> f64 {
    if states.is_empty() {
        return f64::NAN;
    }
    let same = states.iter().filter(|s| a.act(s) == b.act(s)).count();
    same as f64 / states.len() as f64
}

/// States visited by greedy rollouts of `policy` on the evaluation stream,
/// truncated to `limit`.
pub fn visited_states(
    policy: &dyn Policy,
    env_config: &EnvConfig,
    limit: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut env = make_env_on(policy.env(), env_config, seed, stream::EVAL);
    let rules = LabelRuleConfig::default();
    let mut out = Vec::with_capacity(limit);
    while out.len() < limit {
        let (_, traces) = run_policy(policy, env.as_mut(), 1, &rules, true)?;
        out.extend(traces.into_iter().map(|t| t.state));
    }
    out.truncate(limit);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePolicyReport {
    pub node_count: usize,
    pub eval: EvalReport,
}

pub fn evaluate_tree_policy(
    tree: &DecisionTree,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
    rules: &LabelRuleConfig,
) -> Result<TreePolicyReport> {
    let policy = TreePolicy::new(tree.clone())?;
    let eval = crate::agents::evaluate_policy(&policy, env_config, episodes, seed, rules)?;
    Ok(TreePolicyReport {
        node_count: tree.node_count(),
        eval,
    })
}
