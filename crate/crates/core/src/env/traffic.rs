//! A single four-way intersection modelled as eight single-file lanes of ten
//! segments each. Segment 0 is nearest the stop line.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::types::EnvId;

pub const LANES: usize = 8;
pub const SEGMENTS: usize = 10;
pub const STATE_DIM: usize = LANES * SEGMENTS;

/// Lane order of the flattened state vector.
pub const LANE_NAMES: [&str; LANES] = ["W2E", "W2TL", "E2W", "E2TL", "N2S", "N2TL", "S2N", "S2TL"];
pub const W2E: usize = 0;
pub const W2TL: usize = 1;
pub const E2W: usize = 2;
pub const E2TL: usize = 3;
pub const N2S: usize = 4;
pub const N2TL: usize = 5;
pub const S2N: usize = 6;
pub const S2TL: usize = 7;

pub fn is_turn_lane(lane: usize) -> bool {
    matches!(lane, W2TL | E2TL | N2TL | S2TL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    NS = 0,
    NSL = 1,
    EW = 2,
    EWL = 3,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::NS, Phase::NSL, Phase::EW, Phase::EWL];
    pub const NAMES: [&'static str; 4] = ["NS", "NSL", "EW", "EWL"];

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i % 4]
    }

    /// Lanes that get a green light.
    pub fn opens(self) -> [usize; 2] {
        match self {
            Phase::NS => [N2S, S2N],
            Phase::NSL => [N2TL, S2TL],
            Phase::EW => [E2W, W2E],
            Phase::EWL => [E2TL, W2TL],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    pub arrival_prob_straight: f64,
    pub arrival_prob_turn: f64,
    /// Cars leaving an open lane per step.
    pub discharge_per_step: usize,
    pub segment_capacity: usize,
    /// Segments a car can advance in one step.
    pub max_advance: usize,
    /// Reward weight of each discharged car.
    pub discharge_weight: f64,
    /// A phase change spends its first step on a clearance interval in
    /// which no lane discharges.
    pub clearance_on_switch: bool,
    pub horizon: usize,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            arrival_prob_straight: 0.3,
            arrival_prob_turn: 0.1,
            discharge_per_step: 4,
            segment_capacity: 2,
            max_advance: 3,
            discharge_weight: 2.0,
            clearance_on_switch: true,
            horizon: 200,
        }
    }
}

impl TrafficConfig {
    pub fn arrival_prob(&self, lane: usize) -> f64 {
        if is_turn_lane(lane) {
            self.arrival_prob_turn
        } else {
            self.arrival_prob_straight
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub discharged: usize,
    pub arrivals: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficState {
    /// Car count per lane and segment.
    pub queues: [[u8; SEGMENTS]; LANES],
    pub current_phase: Phase,
    pub t: usize,
}

impl Default for TrafficState {
    fn default() -> Self {
        TrafficState {
            queues: [[0; SEGMENTS]; LANES],
            current_phase: Phase::NS,
            t: 0,
        }
    }
}

impl TrafficState {
    /// 80 booleans, lane-major, segment 0 first.
    pub fn occupancy(&self) -> Vec<f64> {
        self.queues
            .iter()
            .flat_map(|lane| lane.iter().map(|&c| f64::from(c > 0)))
            .collect()
    }

    pub fn total_cars(&self) -> usize {
        self.queues.iter().flatten().map(|&c| c as usize).sum()
    }

    /// One signal interval: discharge, advance, arrive.
    pub fn step(
        &self,
        action: usize,
        cfg: &TrafficConfig,
        rng: &mut ChaCha8Rng,
    ) -> (TrafficState, f64, bool, StepStats) {
        let phase = Phase::from_index(action);
        let clearing = cfg.clearance_on_switch && phase != self.current_phase;
        let mut next = self.clone();
        next.current_phase = phase;
        next.t += 1;
        let cap = cfg.segment_capacity as u8;
        let mut stats = StepStats::default();

        // Only the segments a full discharge could empty are served.
        let reach = cfg.discharge_per_step.div_ceil(cfg.segment_capacity.max(1));
        let served = if clearing { &[][..] } else { &phase.opens()[..] };
        for &lane in served {
            let mut budget = cfg.discharge_per_step;
            for seg in 0..reach.min(SEGMENTS) {
                let take = (next.queues[lane][seg] as usize).min(budget);
                next.queues[lane][seg] -= take as u8;
                budget -= take;
                stats.discharged += take;
            }
        }

        for lane in next.queues.iter_mut() {
            advance_lane(lane, cap, cfg.max_advance);
        }

        for lane in 0..LANES {
            let u: f64 = rng.random();
            if u < cfg.arrival_prob(lane) && next.queues[lane][SEGMENTS - 1] < cap {
                next.queues[lane][SEGMENTS - 1] += 1;
                stats.arrivals += 1;
            }
        }

        let waiting = next.total_cars() as f64;
        let reward = -waiting + cfg.discharge_weight * stats.discharged as f64;
        let done = next.t >= cfg.horizon;
        (next, reward, done, stats)
    }
}

/// Moves every car up to `max_advance` segments forward, front cars first,
/// without overtaking through a full segment.
fn advance_lane(lane: &mut [u8; SEGMENTS], cap: u8, max_advance: usize) {
    for seg in 1..SEGMENTS {
        let cars = lane[seg];
        for _ in 0..cars {
            let limit = seg.saturating_sub(max_advance);
            let mut target = seg;
            while target > limit && lane[target - 1] < cap {
                target -= 1;
            }
            if target != seg {
                lane[seg] -= 1;
                lane[target] += 1;
            }
        }
    }
}

pub struct TrafficEnv {
    cfg: TrafficConfig,
    rng: ChaCha8Rng,
    state: TrafficState,
    last_stats: StepStats,
}

impl TrafficEnv {
    pub fn new(cfg: TrafficConfig, rng: ChaCha8Rng) -> Self {
        TrafficEnv {
            cfg,
            rng,
            state: TrafficState::default(),
            last_stats: StepStats::default(),
        }
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    pub fn last_stats(&self) -> StepStats {
        self.last_stats
    }
}

impl Environment for TrafficEnv {
    fn id(&self) -> EnvId {
        EnvId::Traffic
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = TrafficState::default();
        self.state.occupancy()
    }

    fn observation(&self) -> Vec<f64> {
        self.state.occupancy()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let (next, reward, done, stats) = self.state.step(action, &self.cfg, &mut self.rng);
        self.state = next;
        self.last_stats = stats;
        StepOutcome {
            observation: self.state.occupancy(),
            reward,
            terminal: false,
            truncated: done,
        }
    }
}
