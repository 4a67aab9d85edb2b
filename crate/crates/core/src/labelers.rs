//! Rule labelers that bootstrap the labeled dataset. They also serve as the
//! ground truth for measuring undesirable behavior during evaluation.

use serde::{Deserialize, Serialize};

use crate::env::congestion::{SENDING_RATIO, WINDOW};
use crate::env::snake::{APL, DIR, OBS};
use crate::env::traffic::{Phase, LANES, SEGMENTS};
use crate::error::{Error, Result};
use crate::types::{Action, EnvId, Label, LabelSource, LabeledPair, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuroraRule {
    pub ratio_threshold: f64,
}

impl Default for AuroraRule {
    fn default() -> Self {
        AuroraRule {
            ratio_threshold: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficRule {
    /// A lane is jammed when this many segments nearest the stop line are
    /// all occupied.
    pub near_segments: usize,
}

impl Default for TrafficRule {
    fn default() -> Self {
        TrafficRule { near_segments: 2 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRuleConfig {
    pub aurora: AuroraRule,
    pub traffic: TrafficRule,
}

impl LabelRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.aurora.ratio_threshold > 1.0) {
            return Err(Error::Config("aurora.ratio_threshold must exceed 1".into()));
        }
        if !(1..=SEGMENTS).contains(&self.traffic.near_segments) {
            return Err(Error::Config(format!(
                "traffic.near_segments must lie in 1..={SEGMENTS}"
            )));
        }
        Ok(())
    }
}

fn check_len(state: &[f64], env: EnvId) {
    assert_eq!(
        state.len(),
        env.state_dim(),
        "{env} state must have {} entries",
        env.state_dim()
    );
}

/// UNDESIRABLE when the link looks perfect (every sending ratio below the
/// threshold) and the sender still slows down.
///
/// # Panics
/// If `state` is not a congestion state.
pub fn label_aurora(state: &[f64], action: &Action, rule: &AuroraRule) -> Label {
    check_len(state, EnvId::Congestion);
    let window = &state[SENDING_RATIO..SENDING_RATIO + WINDOW];
    let clean = window.iter().all(|&r| r < rule.ratio_threshold);
    if clean && action.real_value() < 0.0 {
        Label::Undesirable
    } else {
        Label::Desirable
    }
}

fn lane(state: &[f64], lane: usize) -> &[f64] {
    &state[lane * SEGMENTS..(lane + 1) * SEGMENTS]
}

/// UNDESIRABLE when some lane is jammed at the stop line, the chosen phase
/// serves only empty lanes, and a jammed lane stays red.
///
/// # Panics
/// If `state` is not a traffic state.
pub fn label_traffic(state: &[f64], action: &Action, rule: &TrafficRule) -> Label {
    check_len(state, EnvId::Traffic);
    let near = rule.near_segments.min(SEGMENTS);
    let jammed = |l: usize| lane(state, l)[..near].iter().all(|&v| v > 0.0);
    let opened = Phase::from_index(action.index).opens();
    let opened_empty = opened
        .iter()
        .all(|&l| lane(state, l).iter().all(|&v| v == 0.0));
    let jam_left_red = (0..LANES).any(|l| jammed(l) && !opened.contains(&l));
    if opened_empty && jam_left_red {
        Label::Undesirable
    } else {
        Label::Desirable
    }
}

/// UNDESIRABLE when the snake heads toward the apple with nothing adjacent
/// and the agent turns away anyway. The chosen action is judged as chosen,
/// even if the game would coerce a reverse into going straight.
///
/// # Panics
/// If `state` is not a snake state.
pub fn label_snake(state: &[f64], action: &Action) -> Label {
    check_len(state, EnvId::Snake);
    let Some(dir) = (0..4).find(|&d| state[DIR + d] > 0.0) else {
        return Label::Desirable;
    };
    let toward_apple = state[APL + dir] > 0.0;
    let clear = state[OBS..OBS + 4].iter().all(|&v| v == 0.0);
    if toward_apple && clear && action.index != dir {
        Label::Undesirable
    } else {
        Label::Desirable
    }
}

pub fn label_pair(env: EnvId, state: &[f64], action: &Action, cfg: &LabelRuleConfig) -> Label {
    match env {
        EnvId::Snake => label_snake(state, action),
        EnvId::Traffic => label_traffic(state, action, &cfg.traffic),
        EnvId::Congestion => label_aurora(state, action, &cfg.aurora),
    }
}

/// One RULE label per transition.
pub fn autolabel_traces(traces: &[Transition], cfg: &LabelRuleConfig) -> Result<Vec<LabeledPair>> {
    cfg.validate()?;
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    let env = first.env;
    traces
        .iter()
        .map(|t| {
            if t.env != env {
                return Err(Error::MixedEnvironments {
                    expected: env,
                    found: t.env,
                });
            }
            if t.state.len() != env.state_dim() {
                return Err(Error::Schema(format!(
                    "transition {}/{} has {} state entries, expected {}",
                    t.episode,
                    t.step,
                    t.state.len(),
                    env.state_dim()
                )));
            }
            Ok(LabeledPair {
                env,
                state: t.state.clone(),
                action: t.action,
                label: label_pair(env, &t.state, &t.action, cfg),
                source: LabelSource::Rule,
                trace_ref: Some(t.trace_ref()),
            })
        })
        .collect()
}
