//! Deep Q-learning with experience replay and a periodically synced target
//! network.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};
use super::EpsilonSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Environment steps between target-network syncs.
    pub target_sync: usize,
    pub replay_capacity: usize,
    /// Updates start once the buffer holds this many transitions.
    pub min_replay: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    /// Rewards are multiplied by this before they are stored.
    pub reward_scale: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub epsilon: EpsilonSchedule,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 64,
            gamma: 0.95,
            target_sync: 500,
            replay_capacity: 50_000,
            min_replay: 500,
            train_every: 1,
            reward_scale: 1.0,
            grad_clip: Some(10.0),
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.replay_capacity == 0 || self.train_every == 0 || self.target_sync == 0 {
            return bad("batch_size, replay_capacity, train_every and target_sync must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning_rate must be positive and momentum in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale must be positive");
        }
        self.epsilon.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Action excluded from the bootstrap max.
    pub next_blocked: Option<usize>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform draws with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Experience> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}

/// Regression targets `r + gamma * max_a' target(s')[a']`, with no bootstrap
/// for terminal transitions.
pub fn td_targets(target: &Mlp, batch: &[&Experience], gamma: f64) -> Vec<f64> {
    let dim = target.input_dim();
    let mut next = Array2::zeros((batch.len(), dim));
    for (k, e) in batch.iter().enumerate() {
        next.row_mut(k)
            .assign(&ndarray::ArrayView1::from(&e.next_state[..]));
    }
    let q_next = target.forward_batch(next.view());
    batch
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if e.terminal {
                e.reward
            } else {
                let best = super::max_except(q_next.row(k).as_slice().expect("standard layout"), e.next_blocked);
                e.reward + gamma * best
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NeuralQ {
    pub config: NeuralConfig,
    pub online: Mlp,
    pub target: Mlp,
    velocity: Grads,
    replay: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl NeuralQ {
    pub fn new(
        config: NeuralConfig,
        state_dim: usize,
        num_actions: usize,
        init_rng: &mut ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![state_dim];
        sizes.extend(&config.hidden);
        sizes.push(num_actions);
        let online = Mlp::new(&sizes, init_rng);
        Ok(Self::from_network(config, online, replay_rng))
    }

    pub fn from_network(config: NeuralConfig, online: Mlp, replay_rng: ChaCha8Rng) -> Self {
        NeuralQ {
            velocity: Grads::zeros_like(&online),
            target: online.clone(),
            replay: ReplayBuffer::new(config.replay_capacity),
            replay_rng,
            steps: 0,
            updates: 0,
            online,
            config,
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.online
            .forward(ndarray::ArrayView1::from(state))
            .to_vec()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn observe(&mut self, e: Experience) -> Result<()> {
        let e = Experience {
            reward: e.reward * self.config.reward_scale,
            ..e
        };
        self.replay.push(e);
        self.steps += 1;
        if self.replay.len() >= self.config.min_replay.max(1)
            && self.steps.is_multiple_of(self.config.train_every as u64)
        {
            self.train_step()?;
        }
        if self.steps.is_multiple_of(self.config.target_sync as u64) {
            self.target = self.online.clone();
        }
        Ok(())
    }

    fn train_step(&mut self) -> Result<()> {
        let batch = self.replay.sample(self.config.batch_size, &mut self.replay_rng);
        let targets = td_targets(&self.target, &batch, self.config.gamma);
        let dim = self.online.input_dim();
        let mut x = Array2::zeros((batch.len(), dim));
        for (k, e) in batch.iter().enumerate() {
            x.row_mut(k).assign(&ndarray::ArrayView1::from(&e.state[..]));
        }
        let actions: Vec<usize> = batch.iter().map(|e| e.action).collect();
        let (loss, mut grads) = self.online.loss_and_gradient(x.view(), &actions, &targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "TD loss became {loss} after {} updates",
                self.updates
            )));
        }
        if let Some(cap) = self.config.grad_clip {
            let norm = grads.norm();
            if norm > cap {
                grads.scale(cap / norm);
            }
        }
        self.online.sgd_momentum_step(
            &grads,
            &mut self.velocity,
            self.config.learning_rate,
            self.config.momentum,
        );
        self.updates += 1;
        Ok(())
    }
}
