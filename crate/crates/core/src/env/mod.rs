//! Seedable simulations of the three case studies: a Snake board, a single
//! signalized intersection and a congestion-controlled sender on one link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::EnvId;

pub mod congestion;
pub mod snake;
pub mod traffic;

pub use congestion::{CongestionConfig, CongestionEnv, CongestionState};
pub use snake::{SnakeConfig, SnakeEnv, SnakeState};
pub use traffic::{TrafficConfig, TrafficEnv, TrafficState};

/// Independent RNG streams derived from one run seed.
pub mod stream {
    pub const ENV: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EVAL: u64 = 5;
}

/// Deterministic RNG for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode ended in an absorbing state (no bootstrapping).
    pub terminal: bool,
    /// The episode was cut by a time or starvation limit.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn id(&self) -> EnvId;

    /// Starts a new episode and returns the first observation.
    fn reset(&mut self) -> Vec<f64>;

    fn observation(&self) -> Vec<f64>;

    fn step(&mut self, action: usize) -> StepOutcome;
}

/// Environment configuration file contents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub snake: SnakeConfig,
    pub traffic: TrafficConfig,
    pub congestion: CongestionConfig,
}

pub fn make_env(id: EnvId, config: &EnvConfig, seed: u64) -> Box<dyn Environment> {
    make_env_on(id, config, seed, stream::ENV)
}

/// Like [`make_env`] but drawing randomness from another stream, so
/// evaluation episodes differ from training episodes for the same seed.
pub fn make_env_on(id: EnvId, config: &EnvConfig, seed: u64, stream: u64) -> Box<dyn Environment> {
    let rng = rng_for(seed, stream);
    match id {
        EnvId::Snake => Box::new(SnakeEnv::new(config.snake.clone(), rng)),
        EnvId::Traffic => Box::new(TrafficEnv::new(config.traffic.clone(), rng)),
        EnvId::Congestion => Box::new(CongestionEnv::new(config.congestion.clone(), rng)),
    }
}
