//! Rate-based sender on a single bottleneck link, observed through sliding
//! windows of latency gradient, latency ratio and sending ratio.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::types::EnvId;

pub const WINDOW: usize = 10;
pub const STATE_DIM: usize = 3 * WINDOW;
pub const LATENCY_GRADIENT: usize = 0;
pub const LATENCY_RATIO: usize = WINDOW;
pub const SENDING_RATIO: usize = 2 * WINDOW;

/// Multiplicative rate changes, one per action bin.
pub const RATE_DELTAS: [f64; 9] = [-0.4, -0.2, -0.1, -0.025, 0.0, 0.025, 0.1, 0.2, 0.4];
pub const HOLD_BIN: usize = 4;

const MAX_SENDING_RATIO: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CongestionConfig {
    /// Mean bottleneck bandwidth, packets per monitor interval.
    pub bandwidth: f64,
    /// Relative range the bandwidth is resampled in, `bandwidth * (1 ± jitter)`.
    pub bandwidth_jitter: f64,
    /// Per-interval probability the bandwidth is resampled.
    pub bandwidth_change_prob: f64,
    pub base_latency: f64,
    pub queue_capacity: f64,
    pub interval_secs: f64,
    pub horizon: usize,
    pub throughput_coef: f64,
    pub latency_coef: f64,
    pub loss_coef: f64,
    pub min_rate: f64,
    /// Rates are capped at this multiple of the mean bandwidth.
    pub max_rate_factor: f64,
    /// Initial rate drawn uniformly from this range times the bandwidth.
    pub initial_rate_range: (f64, f64),
}

impl Default for CongestionConfig {
    fn default() -> Self {
        CongestionConfig {
            bandwidth: 100.0,
            bandwidth_jitter: 0.5,
            bandwidth_change_prob: 0.02,
            base_latency: 0.05,
            queue_capacity: 50.0,
            interval_secs: 0.1,
            horizon: 400,
            throughput_coef: 10.0,
            latency_coef: 1000.0,
            loss_coef: 2000.0,
            min_rate: 1.0,
            max_rate_factor: 10.0,
            initial_rate_range: (0.3, 1.5),
        }
    }
}

impl CongestionConfig {
    /// A static link with no randomness in bandwidth.
    pub fn fixed_link(self) -> Self {
        CongestionConfig {
            bandwidth_jitter: 0.0,
            bandwidth_change_prob: 0.0,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub bandwidth: f64,
    pub base_latency: f64,
    pub queue_capacity: f64,
    pub queue_len: f64,
}

/// What happened on the link during one monitor interval.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalReport {
    pub sent: f64,
    pub delivered: f64,
    pub lost: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionState {
    pub latency_gradient: VecDeque<f64>,
    pub latency_ratio: VecDeque<f64>,
    pub sending_ratio: VecDeque<f64>,
    pub link: Link,
    pub rate: f64,
    pub last_latency: f64,
    pub t: usize,
}

impl CongestionState {
    pub fn new(link: Link, rate: f64) -> Self {
        CongestionState {
            latency_gradient: VecDeque::from(vec![0.0; WINDOW]),
            latency_ratio: VecDeque::from(vec![1.0; WINDOW]),
            sending_ratio: VecDeque::from(vec![1.0; WINDOW]),
            link,
            rate,
            last_latency: link.base_latency,
            t: 0,
        }
    }

    /// latency gradient ++ latency ratio ++ sending ratio, oldest first.
    pub fn encode(&self) -> Vec<f64> {
        self.latency_gradient
            .iter()
            .chain(&self.latency_ratio)
            .chain(&self.sending_ratio)
            .copied()
            .collect()
    }

    /// Applies the rate change for `bin` and simulates one monitor interval.
    pub fn step(&self, bin: usize, cfg: &CongestionConfig) -> (CongestionState, f64, bool, IntervalReport) {
        let delta = RATE_DELTAS[bin];
        let max_rate = cfg.max_rate_factor * cfg.bandwidth;
        let rate = (self.rate * (1.0 + delta)).clamp(cfg.min_rate, max_rate);

        let mut next = self.clone();
        next.rate = rate;
        next.t += 1;

        let link = &mut next.link;
        let sent = rate;
        let backlog = link.queue_len + sent;
        let delivered = backlog.min(link.bandwidth);
        let queued = backlog - delivered;
        let lost = (queued - link.queue_capacity).max(0.0);
        link.queue_len = queued - lost;
        let acked = sent - lost;

        let latency = link.base_latency + link.queue_len / link.bandwidth * cfg.interval_secs;
        let sending_ratio = if acked > 0.0 {
            (sent / acked).clamp(0.0, MAX_SENDING_RATIO)
        } else {
            MAX_SENDING_RATIO
        };
        let gradient = (latency - self.last_latency) / cfg.interval_secs;
        let ratio = latency / link.base_latency;
        next.last_latency = latency;

        for (window, fresh) in [
            (&mut next.latency_gradient, gradient),
            (&mut next.latency_ratio, ratio),
            (&mut next.sending_ratio, sending_ratio),
        ] {
            window.pop_front();
            window.push_back(fresh);
        }

        let loss_rate = if sent > 0.0 { lost / sent } else { 0.0 };
        let reward =
            cfg.throughput_coef * delivered - cfg.latency_coef * latency - cfg.loss_coef * loss_rate;
        let report = IntervalReport {
            sent,
            delivered,
            lost,
            latency,
        };
        let done = next.t >= cfg.horizon;
        (next, reward, done, report)
    }
}

pub struct CongestionEnv {
    cfg: CongestionConfig,
    rng: ChaCha8Rng,
    state: CongestionState,
    last_report: IntervalReport,
}

impl CongestionEnv {
    pub fn new(cfg: CongestionConfig, rng: ChaCha8Rng) -> Self {
        let link = Link {
            bandwidth: cfg.bandwidth,
            base_latency: cfg.base_latency,
            queue_capacity: cfg.queue_capacity,
            queue_len: 0.0,
        };
        let state = CongestionState::new(link, cfg.bandwidth);
        CongestionEnv {
            cfg,
            rng,
            state,
            last_report: IntervalReport::default(),
        }
    }

    pub fn state(&self) -> &CongestionState {
        &self.state
    }

    pub fn last_report(&self) -> IntervalReport {
        self.last_report
    }

    fn sample_bandwidth(&mut self) -> f64 {
        let j = self.cfg.bandwidth_jitter;
        if j > 0.0 {
            self.cfg.bandwidth * self.rng.random_range(1.0 - j..=1.0 + j)
        } else {
            self.cfg.bandwidth
        }
    }
}

impl Environment for CongestionEnv {
    fn id(&self) -> EnvId {
        EnvId::Congestion
    }

    fn reset(&mut self) -> Vec<f64> {
        let bandwidth = self.sample_bandwidth();
        let (lo, hi) = self.cfg.initial_rate_range;
        let rate = if hi > lo {
            bandwidth * self.rng.random_range(lo..hi)
        } else {
            bandwidth * lo
        };
        let link = Link {
            bandwidth,
            base_latency: self.cfg.base_latency,
            queue_capacity: self.cfg.queue_capacity,
            queue_len: 0.0,
        };
        self.state = CongestionState::new(link, rate);
        self.state.encode()
    }

    fn observation(&self) -> Vec<f64> {
        self.state.encode()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        // One draw per interval keeps the stream aligned whatever the policy does.
        let change: f64 = self.rng.random();
        if change < self.cfg.bandwidth_change_prob {
            self.state.link.bandwidth = self.sample_bandwidth();
        }
        let (next, reward, done, report) = self.state.step(action, &self.cfg);
        self.state = next;
        self.last_report = report;
        StepOutcome {
            observation: self.state.encode(),
            reward,
            terminal: false,
            truncated: done,
        }
    }
}
