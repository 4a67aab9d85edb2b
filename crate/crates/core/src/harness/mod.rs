//! Modifier sweeps: train shaped agents across seeds, evaluate them with
//! the rule labeler, aggregate, and export.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{evaluate_policy, train_agent, Agent, AgentConfig, EvalReport, TrainOptions, TrainOutcome};
use crate::env::{make_env, EnvConfig};
use crate::error::{Error, Result};
use crate::labelers::LabelRuleConfig;
use crate::shaping::{ShapingConfig, ShapingHook};
use crate::tree::DecisionTree;
use crate::types::EnvId;

mod metrics;
mod overhead;
mod results;

pub use metrics::{average_after, convergence_step, mean_std, ratio_reduction, running_average, spearman};
pub use overhead::{measure_overhead, OverheadReport};
pub use results::{export_results, parse_results, read_results, write_results, RESULT_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub env: EnvId,
    /// Must contain 1.0, the unshaped baseline.
    pub modifiers: Vec<f64>,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub max_total_steps: Option<u64>,
    pub eval_episodes: usize,
    /// Running-average window over training episodes.
    pub window: usize,
    pub tolerance: f64,
    /// `None` picks the default learner for the environment.
    pub agent: Option<AgentConfig>,
    pub env_config: EnvConfig,
    pub label_rules: LabelRuleConfig,
    /// Run cells on the rayon pool.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            env: EnvId::Snake,
            modifiers: vec![1.0, 0.75, 0.5, 0.25, 0.1],
            seeds: vec![0, 1, 2, 3],
            episodes: 3000,
            max_total_steps: None,
            eval_episodes: 100,
            window: 50,
            tolerance: 0.05,
            agent: None,
            env_config: EnvConfig::default(),
            label_rules: LabelRuleConfig::default(),
            parallel: true,
        }
    }
}

impl SweepConfig {
    /// Step budgets and evaluation sizes that fit a desk machine.
    pub fn for_env(env: EnvId) -> Self {
        let base = SweepConfig {
            env,
            ..SweepConfig::default()
        };
        match env {
            EnvId::Snake => SweepConfig {
                episodes: 6000,
                ..base
            },
            EnvId::Traffic => SweepConfig {
                modifiers: vec![1.0, 0.75, 0.5, 0.25, 0.1],
                seeds: vec![0, 1, 2],
                episodes: 100,
                eval_episodes: 20,
                window: 10,
                ..base
            },
            EnvId::Congestion => SweepConfig {
                modifiers: vec![1.0, 0.8, 0.6, 0.5, 0.4, 0.2, 0.1, 0.05, 0.01],
                seeds: vec![0, 1, 2],
                episodes: 100,
                eval_episodes: 10,
                window: 5,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.modifiers.contains(&1.0) {
            return Err(Error::Config("modifiers must include 1.0 (the baseline)".into()));
        }
        if let Some(bad) = self.modifiers.iter().find(|&&m| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::Config(format!("modifier {bad} is outside (0, 1]")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.episodes == 0 || self.window == 0 {
            return Err(Error::Config("episodes and window must be positive".into()));
        }
        self.label_rules.validate()
    }

    pub fn agent_config(&self) -> AgentConfig {
        self.agent
            .clone()
            .unwrap_or_else(|| AgentConfig::default_for(self.env))
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            episodes: self.episodes,
            max_total_steps: self.max_total_steps,
            record_traces: false,
            label_rules: self.label_rules.clone(),
        }
    }
}

/// One (modifier, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub modifier: f64,
    pub seed: u64,
    /// Mean greedy evaluation return.
    pub eval_reward: Option<f64>,
    /// Mean training return from the convergence step on.
    pub avg_reward: Option<f64>,
    /// Rule-labeled ratio over the evaluation episodes.
    pub undesirable_ratio: Option<f64>,
    pub convergence_step: Option<usize>,
    pub train_wall_time: Option<f64>,
    pub episodes: Option<usize>,
    pub error: Option<String>,
}

/// Mean and standard deviation over the successful cells of one modifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub modifier: f64,
    pub n: usize,
    pub eval_reward: (f64, f64),
    pub avg_reward: (f64, f64),
    pub undesirable_ratio: (f64, f64),
    pub convergence_step: (f64, f64),
    pub train_wall_time: (f64, f64),
    pub episodes: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub env: EnvId,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn from_cells(env: EnvId, cells: Vec<CellResult>) -> Self {
        let aggregates = aggregate(&cells);
        ExperimentResult {
            env,
            cells,
            aggregates,
        }
    }

    pub fn aggregate_for(&self, modifier: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.modifier == modifier)
    }

    /// Spearman correlation between modifier and mean undesirable ratio
    /// over the per-modifier aggregates.
    pub fn modifier_ratio_correlation(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .aggregates
            .iter()
            .filter(|a| a.undesirable_ratio.0.is_finite())
            .map(|a| (a.modifier, a.undesirable_ratio.0))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        spearman(&x, &y)
    }
}

/// Per-modifier aggregates in first-appearance order.
pub fn aggregate(cells: &[CellResult]) -> Vec<Aggregate> {
    let mut modifiers: Vec<f64> = Vec::new();
    for c in cells {
        if !modifiers.contains(&c.modifier) {
            modifiers.push(c.modifier);
        }
    }
    modifiers
        .into_iter()
        .map(|m| {
            let ok: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.modifier == m && c.error.is_none())
                .collect();
            let stat = |f: &dyn Fn(&CellResult) -> Option<f64>| {
                mean_std(&ok.iter().filter_map(|c| f(c)).collect::<Vec<_>>())
            };
            Aggregate {
                modifier: m,
                n: ok.len(),
                eval_reward: stat(&|c| c.eval_reward),
                avg_reward: stat(&|c| c.avg_reward),
                undesirable_ratio: stat(&|c| c.undesirable_ratio),
                convergence_step: stat(&|c| c.convergence_step.map(|v| v as f64)),
                train_wall_time: stat(&|c| c.train_wall_time),
                episodes: stat(&|c| c.episodes.map(|v| v as f64)),
            }
        })
        .collect()
}

/// Trains one agent; `shaping` of `None` leaves rewards untouched.
pub fn train_run(
    env: EnvId,
    agent_config: &AgentConfig,
    env_config: &EnvConfig,
    opts: &TrainOptions,
    shaping: Option<ShapingConfig>,
    seed: u64,
) -> Result<(Agent, TrainOutcome)> {
    let mut environment = make_env(env, env_config, seed);
    let mut agent = Agent::new(env, agent_config.clone(), seed)?;
    let mut hook = shaping.map(ShapingHook::new);
    let outcome = train_agent(environment.as_mut(), &mut agent, opts, hook.as_mut(), seed)?;
    Ok((agent, outcome))
}

/// A finished cell and the agent it trained.
pub struct CellRun {
    pub result: CellResult,
    pub agent: Agent,
    pub outcome: TrainOutcome,
    pub eval: EvalReport,
}

/// Trains and evaluates one cell. A modifier of 1.0 runs without a hook.
pub fn run_cell(
    cfg: &SweepConfig,
    tree: Option<&Arc<DecisionTree>>,
    modifier: f64,
    seed: u64,
) -> Result<CellRun> {
    let shaping = if modifier == 1.0 {
        None
    } else {
        let tree = tree.ok_or_else(|| Error::Config("shaped cells need a tree".into()))?;
        Some(ShapingConfig::new(cfg.env, Arc::clone(tree), modifier)?)
    };
    let started = Instant::now();
    let (agent, outcome) = train_run(
        cfg.env,
        &cfg.agent_config(),
        &cfg.env_config,
        &cfg.train_options(),
        shaping,
        seed,
    )?;
    let wall = started.elapsed().as_secs_f64();
    let eval = evaluate_policy(&agent, &cfg.env_config, cfg.eval_episodes, seed, &cfg.label_rules)?;
    let returns = outcome.log.raw_returns();
    let conv = convergence_step(&returns, cfg.window, cfg.tolerance).ok();
    let avg = (!returns.is_empty()).then(|| average_after(&returns, conv.unwrap_or(0), cfg.window));
    Ok(CellRun {
        result: CellResult {
            modifier,
            seed,
            eval_reward: Some(eval.mean_return),
            avg_reward: avg,
            undesirable_ratio: eval.undesirable_ratio,
            convergence_step: conv,
            train_wall_time: Some(wall),
            episodes: Some(outcome.log.episodes.len()),
            error: None,
        },
        agent,
        outcome,
        eval,
    })
}

fn failed_cell(modifier: f64, seed: u64, e: Error) -> CellResult {
    CellResult {
        modifier,
        seed,
        eval_reward: None,
        avg_reward: None,
        undesirable_ratio: None,
        convergence_step: None,
        train_wall_time: None,
        episodes: None,
        error: Some(e.to_string()),
    }
}

/// Every (modifier, seed) cell, in modifier-major order. A failing cell is
/// recorded with its error instead of aborting the sweep.
pub fn run_sweep(cfg: &SweepConfig, tree: Option<Arc<DecisionTree>>) -> Result<ExperimentResult> {
    run_sweep_with(cfg, tree, |_| {})
}

/// [`run_sweep`] calling `progress` with the number of finished cells.
pub fn run_sweep_with(
    cfg: &SweepConfig,
    tree: Option<Arc<DecisionTree>>,
    progress: impl Fn(usize) + Sync,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if tree.is_none() && cfg.modifiers.iter().any(|&m| m != 1.0) {
        return Err(Error::Config("modifiers below 1.0 need a shaping tree".into()));
    }
    let jobs: Vec<(f64, u64)> = cfg
        .modifiers
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let run = |&(m, s): &(f64, u64)| {
        let cell = match run_cell(cfg, tree.as_ref(), m, s) {
            Ok(run) => run.result,
            Err(e) => failed_cell(m, s, e),
        };
        progress(done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1);
        cell
    };
    let cells: Vec<CellResult> = if cfg.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    Ok(ExperimentResult::from_cells(cfg.env, cells))
}
