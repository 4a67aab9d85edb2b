//! Q-learning over a table keyed by packed binary states.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EpsilonSchedule;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub alpha: f64,
    /// When set, the step size for a state-action pair visited `n` times
    /// before is `alpha * h / (h + n)`; otherwise it stays at `alpha`.
    pub alpha_half_visits: Option<f64>,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            alpha: 0.1,
            alpha_half_visits: Some(1000.0),
            gamma: 0.95,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

/// Packs a 0/1 state into an integer, bit `i` set when entry `i` is set.
pub fn state_key(state: &[f64]) -> u64 {
    debug_assert!(state.len() <= 64);
    state
        .iter()
        .enumerate()
        .fold(0u64, |k, (i, &v)| if v > 0.5 { k | (1 << i) } else { k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    pub config: TabularConfig,
    pub num_actions: usize,
    /// Unvisited states read as all zeros.
    pub table: BTreeMap<u64, Vec<f64>>,
    /// Update counts per state-action, kept only when the step size decays.
    pub visits: BTreeMap<u64, Vec<u64>>,
}

impl TabularQ {
    pub fn new(config: TabularConfig, state_dim: usize, num_actions: usize) -> Result<Self> {
        if state_dim > 64 {
            return Err(Error::Config(format!(
                "tabular agent packs at most 64 binary entries, state has {state_dim}"
            )));
        }
        Ok(TabularQ {
            config,
            num_actions,
            table: BTreeMap::new(),
            visits: BTreeMap::new(),
        })
    }

    pub fn values(&self, key: u64) -> Vec<f64> {
        self.table
            .get(&key)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.num_actions])
    }

    /// `Q[s][a] += alpha * (r + gamma * max Q[s'] - Q[s][a])`, without the
    /// bootstrap term when `terminal`. The max skips `next_blocked`.
    pub fn q_update(&mut self, s: u64, a: usize, r: f64, s2: u64, next_blocked: Option<usize>, terminal: bool) {
        let bootstrap = if terminal {
            0.0
        } else {
            super::max_except(&self.values(s2), next_blocked)
        };
        let TabularConfig {
            alpha,
            alpha_half_visits,
            gamma,
            ..
        } = self.config;
        let n = self.num_actions;
        let step = match alpha_half_visits {
            Some(h) => {
                let count = &mut self.visits.entry(s).or_insert_with(|| vec![0; n])[a];
                let step = alpha * h / (h + *count as f64);
                *count += 1;
                step
            }
            None => alpha,
        };
        let q = self.table.entry(s).or_insert_with(|| vec![0.0; n]);
        q[a] += step * (r + gamma * bootstrap - q[a]);
    }
}
