use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::train_run;
use crate::agents::{AgentConfig, TrainOptions};
use crate::env::EnvConfig;
use crate::error::Result;
use crate::shaping::ShapingConfig;
use crate::tree::DecisionTree;
use crate::types::EnvId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub env: EnvId,
    pub tree_nodes: usize,
    pub unshaped_secs: Vec<f64>,
    pub shaped_secs: Vec<f64>,
    /// Time spent inside the hook during each shaped run.
    pub hook_secs: Vec<f64>,
    /// Median of `hook / (shaped - hook)`: the hook's cost relative to the
    /// rest of the same run.
    pub overhead: f64,
    /// Median of `(shaped - unshaped) / unshaped` over paired runs. Noisy
    /// when the hook costs less than run-to-run timing jitter.
    pub wall_overhead: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Relative training-time cost of the shaping hook.
///
/// Each repetition trains the same seed twice, without and with the hook.
/// The hook runs with modifier 1, so both runs follow the same trajectory
/// and differ only by the time spent classifying pairs. One unshaped
/// warm-up run is discarded first. Runs execute one at a time on the
/// calling thread.
pub fn measure_overhead(
    env: EnvId,
    agent_config: &AgentConfig,
    env_config: &EnvConfig,
    tree: Arc<DecisionTree>,
    opts: &TrainOptions,
    seed: u64,
    repetitions: usize,
) -> Result<OverheadReport> {
    let mut report = OverheadReport {
        env,
        tree_nodes: tree.node_count(),
        unshaped_secs: Vec::new(),
        shaped_secs: Vec::new(),
        hook_secs: Vec::new(),
        overhead: f64::NAN,
        wall_overhead: f64::NAN,
    };
    train_run(env, agent_config, env_config, opts, None, seed)?;
    let mut own = Vec::new();
    let mut paired = Vec::new();
    for _ in 0..repetitions.max(1) {
        let (_, plain) = train_run(env, agent_config, env_config, opts, None, seed)?;
        let shaping = ShapingConfig::new(env, Arc::clone(&tree), 1.0)?;
        let (_, shaped) = train_run(env, agent_config, env_config, opts, Some(shaping), seed)?;
        report.unshaped_secs.push(plain.wall_time_secs);
        report.shaped_secs.push(shaped.wall_time_secs);
        report.hook_secs.push(shaped.hook_time_secs);
        own.push(shaped.hook_time_secs / (shaped.wall_time_secs - shaped.hook_time_secs));
        paired.push((shaped.wall_time_secs - plain.wall_time_secs) / plain.wall_time_secs);
    }
    report.overhead = median(&own);
    report.wall_overhead = median(&paired);
    Ok(report)
}
