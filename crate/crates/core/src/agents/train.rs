use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Agent, Policy};
use crate::env::{make_env_on, rng_for, stream, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::labelers::{label_pair, LabelRuleConfig};
use crate::shaping::ShapingHook;
use crate::types::{BehaviorCounts, EnvId, Label, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub episodes: usize,
    /// Stops early once this many environment steps have run.
    pub max_total_steps: Option<u64>,
    /// Keep every transition for later labeling.
    pub record_traces: bool,
    pub label_rules: LabelRuleConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            episodes: 1000,
            max_total_steps: None,
            record_traces: false,
            label_rules: LabelRuleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    pub steps: u64,
    pub raw_return: f64,
    pub shaped_return: f64,
    /// Rule-labeler counts over the episode's steps.
    pub desirable: u64,
    pub undesirable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub env: EnvId,
    pub episodes: Vec<EpisodeLog>,
    pub total_steps: u64,
    /// Rule-labeler counts over all training steps.
    pub behavior: BehaviorCounts,
    /// Shaping-tree counts, when a hook was active.
    pub tree_behavior: Option<BehaviorCounts>,
}

impl TrainingLog {
    pub fn raw_returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.raw_return).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub traces: Vec<Transition>,
    pub wall_time_secs: f64,
    /// Time spent inside the shaping hook.
    pub hook_time_secs: f64,
}

/// The training loop: observe, act, step the environment, label the step
/// with the rule labeler, let the hook reshape the reward, learn.
///
/// Exploration draws from `seed` on its own stream; the environment is
/// seeded by its creator.
pub fn train_agent(
    env: &mut dyn Environment,
    agent: &mut Agent,
    opts: &TrainOptions,
    mut hook: Option<&mut ShapingHook>,
    seed: u64,
) -> Result<TrainOutcome> {
    let id = env.id();
    if agent.env != id {
        return Err(Error::MixedEnvironments {
            expected: id,
            found: agent.env,
        });
    }
    opts.label_rules.validate()?;
    let started = Instant::now();
    let mut hook_time = 0.0;
    let mut rng = rng_for(seed, stream::EXPLORATION);
    let mut log = TrainingLog {
        env: id,
        episodes: Vec::with_capacity(opts.episodes),
        total_steps: 0,
        behavior: BehaviorCounts::default(),
        tree_behavior: None,
    };
    let mut traces = Vec::new();

    'episodes: for episode in 0..opts.episodes as u64 {
        let mut state = env.reset();
        let mut ep = EpisodeLog {
            episode,
            steps: 0,
            raw_return: 0.0,
            shaped_return: 0.0,
            desirable: 0,
            undesirable: 0,
        };
        loop {
            if opts.max_total_steps.is_some_and(|m| log.total_steps >= m) {
                if ep.steps > 0 {
                    log.episodes.push(ep);
                }
                break 'episodes;
            }
            let a = agent.explore_action(&state, &mut rng);
            let action = id.decode_action(a);
            let out = env.step(a);

            match label_pair(id, &state, &action, &opts.label_rules) {
                Label::Desirable => ep.desirable += 1,
                Label::Undesirable => ep.undesirable += 1,
            }
            let shaped = match hook.as_deref_mut() {
                Some(h) => {
                    let t0 = Instant::now();
                    let r = h.apply(&state, &action, out.reward);
                    hook_time += t0.elapsed().as_secs_f64();
                    r
                }
                None => out.reward,
            };
            agent.learn(&state, a, shaped, &out.observation, out.terminal)?;

            if opts.record_traces {
                traces.push(Transition {
                    env: id,
                    episode,
                    step: ep.steps,
                    state: std::mem::take(&mut state),
                    action,
                    reward_raw: out.reward,
                    reward_shaped: shaped,
                    done: out.done(),
                });
            }
            ep.steps += 1;
            ep.raw_return += out.reward;
            ep.shaped_return += shaped;
            log.total_steps += 1;
            let done = out.done();
            state = out.observation;
            if done {
                break;
            }
        }
        log.behavior.merge(BehaviorCounts::new(ep.desirable, ep.undesirable));
        log.episodes.push(ep);
    }
    log.tree_behavior = hook.map(|h| h.counts());
    Ok(TrainOutcome {
        log,
        traces,
        wall_time_secs: started.elapsed().as_secs_f64(),
        hook_time_secs: hook_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_length: f64,
    pub behavior: BehaviorCounts,
    /// `None` when no step was classified.
    pub undesirable_ratio: Option<f64>,
}

/// Greedy rollouts of `policy` on `env`, measured with the rule labeler.
pub fn run_policy(
    policy: &dyn Policy,
    env: &mut dyn Environment,
    episodes: usize,
    rules: &LabelRuleConfig,
    record: bool,
) -> Result<(EvalReport, Vec<Transition>)> {
    let id = env.id();
    if policy.env() != id {
        return Err(Error::MixedEnvironments {
            expected: id,
            found: policy.env(),
        });
    }
    let mut returns = Vec::with_capacity(episodes);
    let mut behavior = BehaviorCounts::default();
    let mut total_steps = 0u64;
    let mut traces = Vec::new();
    for episode in 0..episodes as u64 {
        let mut state = env.reset();
        let mut ret = 0.0;
        let mut step = 0u64;
        loop {
            let a = policy.act(&state);
            let action = id.decode_action(a);
            behavior.record(label_pair(id, &state, &action, rules));
            let out = env.step(a);
            ret += out.reward;
            if record {
                traces.push(Transition {
                    env: id,
                    episode,
                    step,
                    state: state.clone(),
                    action,
                    reward_raw: out.reward,
                    reward_shaped: out.reward,
                    done: out.done(),
                });
            }
            step += 1;
            let done = out.done();
            state = out.observation;
            if done {
                break;
            }
        }
        total_steps += step;
        returns.push(ret);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((
        EvalReport {
            episodes,
            mean_return: mean,
            std_return: var.sqrt(),
            mean_length: total_steps as f64 / n,
            behavior,
            undesirable_ratio: behavior.ratio().ok(),
        },
        traces,
    ))
}

/// [`run_policy`] on a fresh environment seeded on the evaluation stream.
pub fn evaluate_policy(
    policy: &dyn Policy,
    env_config: &EnvConfig,
    episodes: usize,
    seed: u64,
    rules: &LabelRuleConfig,
) -> Result<EvalReport> {
    let mut env = make_env_on(policy.env(), env_config, seed, stream::EVAL);
    run_policy(policy, env.as_mut(), episodes, rules, false).map(|(r, _)| r)
}
