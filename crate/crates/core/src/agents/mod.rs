//! Q-learning agents: an exact table for small binary state spaces and a
//! replay-based neural learner for the rest.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{rng_for, stream};
use crate::error::{Error, Result};
use crate::types::EnvId;

pub mod dqn;
pub mod mlp;
pub mod tabular;
mod train;

pub use dqn::{Experience, NeuralConfig, NeuralQ, ReplayBuffer};
pub use mlp::{Grads, Mlp};
pub use tabular::{state_key, TabularConfig, TabularQ};
pub use train::{
    evaluate_policy, run_policy, train_agent, EpisodeLog, EvalReport, TrainOptions, TrainOutcome,
    TrainingLog,
};

/// Linear decay from `start` to `end` over `decay_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_steps: 50_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        EpsilonSchedule {
            start: epsilon,
            end: epsilon,
            decay_steps: 0,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start) || !(0.0..=1.0).contains(&self.end) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn greedy(q: &[f64]) -> usize {
    greedy_except(q, None)
}

/// [`greedy`] skipping `blocked`.
pub fn greedy_except(q: &[f64], blocked: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (a, &v) in q.iter().enumerate() {
        if Some(a) == blocked {
            continue;
        }
        if best.is_none_or(|b| v > q[b]) {
            best = Some(a);
        }
    }
    best.unwrap_or(0)
}

/// Largest value outside `blocked`.
pub fn max_except(q: &[f64], blocked: Option<usize>) -> f64 {
    q.iter()
        .enumerate()
        .filter(|&(a, _)| Some(a) != blocked)
        .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v))
}

/// Epsilon-greedy choice over `q`; exploration is uniform over the actions
/// other than `blocked`.
pub fn select_action(q: &[f64], epsilon: f64, blocked: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        match blocked.filter(|&b| b < q.len() && q.len() > 1) {
            Some(b) => {
                let a = rng.random_range(0..q.len() - 1);
                if a >= b {
                    a + 1
                } else {
                    a
                }
            }
            None => rng.random_range(0..q.len()),
        }
    } else {
        greedy_except(q, blocked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentConfig {
    Tabular(TabularConfig),
    Neural(NeuralConfig),
}

impl AgentConfig {
    /// Tabular for Snake, neural otherwise. Neural learners get a reward
    /// scale that brings per-step rewards near unit size and an
    /// exploration decay sized to the step budgets the environments use.
    pub fn default_for(env: EnvId) -> Self {
        let neural = |reward_scale: f64, decay_steps: u64| {
            AgentConfig::Neural(NeuralConfig {
                reward_scale,
                epsilon: EpsilonSchedule {
                    decay_steps,
                    ..EpsilonSchedule::default()
                },
                ..NeuralConfig::default()
            })
        };
        match env {
            EnvId::Snake => AgentConfig::Tabular(TabularConfig::default()),
            EnvId::Traffic => neural(0.05, 10_000),
            EnvId::Congestion => neural(1e-3, 8_000),
        }
    }

    pub fn epsilon(&self) -> &EpsilonSchedule {
        match self {
            AgentConfig::Tabular(c) => &c.epsilon,
            AgentConfig::Neural(c) => &c.epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Learner {
    Tabular(TabularQ),
    Neural(Box<NeuralQ>),
}

/// A learner bound to one environment, tracking its own step count for the
/// exploration schedule.
#[derive(Debug, Clone)]
pub struct Agent {
    pub env: EnvId,
    pub config: AgentConfig,
    pub learner: Learner,
    steps: u64,
}

/// Anything that maps a state to an action.
pub trait Policy {
    fn env(&self) -> EnvId;
    fn act(&self, state: &[f64]) -> usize;
}

impl Agent {
    /// Network initialization and replay sampling draw from `seed` on
    /// separate streams.
    pub fn new(env: EnvId, config: AgentConfig, seed: u64) -> Result<Self> {
        config.epsilon().validate()?;
        let learner = match &config {
            AgentConfig::Tabular(c) => {
                Learner::Tabular(TabularQ::new(c.clone(), env.state_dim(), env.num_actions())?)
            }
            AgentConfig::Neural(c) => Learner::Neural(Box::new(NeuralQ::new(
                c.clone(),
                env.state_dim(),
                env.num_actions(),
                &mut rng_for(seed, stream::INIT),
                rng_for(seed, stream::REPLAY),
            )?)),
        };
        Ok(Agent {
            env,
            config,
            learner,
            steps: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon().value(self.steps)
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        match &self.learner {
            Learner::Tabular(t) => t.values(state_key(state)),
            Learner::Neural(n) => n.q_values(state),
        }
    }

    pub fn greedy_action(&self, state: &[f64]) -> usize {
        greedy_except(&self.q_values(state), self.env.blocked_action(state))
    }

    /// Epsilon-greedy at the current schedule position.
    pub fn explore_action(&self, state: &[f64], rng: &mut ChaCha8Rng) -> usize {
        select_action(
            &self.q_values(state),
            self.epsilon(),
            self.env.blocked_action(state),
            rng,
        )
    }

    /// One learning step. `terminal` disables bootstrapping; truncated
    /// episodes should pass `false`.
    pub fn learn(
        &mut self,
        state: &[f64],
        action: usize,
        reward: f64,
        next_state: &[f64],
        terminal: bool,
    ) -> Result<()> {
        self.steps += 1;
        let next_blocked = self.env.blocked_action(next_state);
        match &mut self.learner {
            Learner::Tabular(t) => {
                t.q_update(state_key(state), action, reward, state_key(next_state), next_blocked, terminal);
                Ok(())
            }
            Learner::Neural(n) => n.observe(Experience {
                state: state.to_vec(),
                action,
                reward,
                next_state: next_state.to_vec(),
                next_blocked,
                terminal,
            }),
        }
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            env: self.env,
            config: self.config.clone(),
            steps: self.steps,
            params: match &self.learner {
                Learner::Tabular(t) => CheckpointParams::Tabular {
                    table: t.table.clone(),
                    visits: t.visits.clone(),
                },
                Learner::Neural(n) => CheckpointParams::Neural {
                    online: n.online.clone(),
                },
            },
        }
    }

    /// Restores parameters; a neural agent comes back with an empty replay
    /// buffer.
    pub fn from_checkpoint(ck: AgentCheckpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported agent checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let learner = match (ck.params, &ck.config) {
            (CheckpointParams::Tabular { table, visits }, AgentConfig::Tabular(c)) => {
                let mut t = TabularQ::new(c.clone(), ck.env.state_dim(), ck.env.num_actions())?;
                if table.values().any(|q| q.len() != t.num_actions) {
                    return Err(Error::Schema("Q-table row has the wrong action count".into()));
                }
                if visits.values().any(|v| v.len() != t.num_actions) {
                    return Err(Error::Schema("visit-count row has the wrong action count".into()));
                }
                t.table = table;
                t.visits = visits;
                Learner::Tabular(t)
            }
            (CheckpointParams::Neural { online }, AgentConfig::Neural(c)) => {
                if online.input_dim() != ck.env.state_dim() || online.output_dim() != ck.env.num_actions() {
                    return Err(Error::Schema("network shape does not match the environment".into()));
                }
                Learner::Neural(Box::new(NeuralQ::from_network(
                    c.clone(),
                    online,
                    rng_for(0, stream::REPLAY),
                )))
            }
            _ => return Err(Error::Schema("checkpoint parameters do not match its config".into())),
        };
        Ok(Agent {
            env: ck.env,
            config: ck.config,
            learner,
            steps: ck.steps,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.checkpoint()).map_err(|e| Error::Schema(e.to_string()))?;
        crate::types::write_text(path, &text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: AgentCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_checkpoint(ck)
    }
}

impl Policy for Agent {
    fn env(&self) -> EnvId {
        self.env
    }

    fn act(&self, state: &[f64]) -> usize {
        self.greedy_action(state)
    }
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub env: EnvId,
    pub action: usize,
}

impl Policy for ConstantPolicy {
    fn env(&self) -> EnvId {
        self.env
    }

    fn act(&self, _state: &[f64]) -> usize {
        self.action
    }
}

pub const CHECKPOINT_FORMAT: &str = "ubr-agent";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format: String,
    pub version: u32,
    pub env: EnvId,
    pub config: AgentConfig,
    pub steps: u64,
    pub params: CheckpointParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointParams {
    Tabular {
        #[serde(with = "keyed_rows")]
        table: BTreeMap<u64, Vec<f64>>,
        #[serde(default, with = "keyed_rows")]
        visits: BTreeMap<u64, Vec<u64>>,
    },
    Neural { online: Mlp },
}

/// Integer-keyed tables as `[key, row]` pairs. Tagged enums buffer their
/// content, and JSON object keys would come back as strings.
mod keyed_rows {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, V: Serialize>(map: &BTreeMap<u64, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(d: D) -> Result<BTreeMap<u64, V>, D::Error> {
        Ok(Vec::<(u64, V)>::deserialize(d)?.into_iter().collect())
    }
}
