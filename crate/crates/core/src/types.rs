//! Shared data model: transitions, labeled pairs, behavior counters and the
//! line-delimited trace/label logs.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::env::congestion::RATE_DELTAS;
use crate::error::{Error, Result};

/// The three case-study environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Snake,
    Traffic,
    Congestion,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::Snake, EnvId::Traffic, EnvId::Congestion];

    pub fn state_dim(self) -> usize {
        match self {
            EnvId::Snake => 12,
            EnvId::Traffic => 80,
            EnvId::Congestion => 30,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            EnvId::Snake => 4,
            EnvId::Traffic => 4,
            EnvId::Congestion => RATE_DELTAS.len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvId::Snake => "snake",
            EnvId::Traffic => "traffic",
            EnvId::Congestion => "congestion",
        }
    }

    /// The action an agent may not pick in `state`: Snake's reverse, which
    /// the game would coerce into going straight.
    pub fn blocked_action(self, state: &[f64]) -> Option<usize> {
        match self {
            EnvId::Snake => (0..4)
                .find(|&d| state.get(crate::env::snake::DIR + d).is_some_and(|&v| v > 0.0))
                .map(|d| (d + 2) % 4),
            _ => None,
        }
    }

    /// Decodes an agent's action index into the stored action encoding.
    pub fn decode_action(self, index: usize) -> Action {
        match self {
            EnvId::Congestion => Action::rate_bin(index),
            _ => Action::discrete(index),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "snake" => Ok(EnvId::Snake),
            "traffic" => Ok(EnvId::Traffic),
            "congestion" | "aurora" => Ok(EnvId::Congestion),
            other => Err(Error::invalid(format!("unknown environment '{other}'"))),
        }
    }
}

/// An agent action. Discrete environments only use `index`; the congestion
/// sender also stores the real rate delta the bin decodes to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl Action {
    pub fn discrete(index: usize) -> Self {
        Action { index, value: None }
    }

    /// # Panics
    /// If `bin` is not a valid rate-change bin.
    pub fn rate_bin(bin: usize) -> Self {
        Action {
            index: bin,
            value: Some(RATE_DELTAS[bin]),
        }
    }

    /// Real value read by the `Action` grammar rule.
    pub fn real_value(&self) -> f64 {
        self.value.unwrap_or(self.index as f64)
    }
}

/// One time step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub env: EnvId,
    pub episode: u64,
    pub step: u64,
    pub state: Vec<f64>,
    pub action: Action,
    pub reward_raw: f64,
    pub reward_shaped: f64,
    pub done: bool,
}

impl Transition {
    pub fn trace_ref(&self) -> TraceRef {
        TraceRef {
            episode: self.episode,
            step: self.step,
        }
    }

    fn validate(&self) -> Result<()> {
        let dim = self.env.state_dim();
        if self.state.len() != dim {
            return Err(Error::Schema(format!(
                "{} state has {} entries, expected {dim}",
                self.env,
                self.state.len()
            )));
        }
        if self.action.index >= self.env.num_actions() {
            return Err(Error::Schema(format!(
                "action index {} out of range for {}",
                self.action.index, self.env
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Desirable,
    Undesirable,
}

impl Label {
    /// Class index used by the decision tree (UNDESIRABLE = 1).
    pub fn class(self) -> usize {
        match self {
            Label::Desirable => 0,
            Label::Undesirable => 1,
        }
    }

    pub fn from_class(class: usize) -> Self {
        if class == 0 {
            Label::Desirable
        } else {
            Label::Undesirable
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Desirable => f.write_str("DESIRABLE"),
            Label::Undesirable => f.write_str("UNDESIRABLE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LabelSource {
    Rule,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceRef {
    pub episode: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub env: EnvId,
    pub state: Vec<f64>,
    pub action: Action,
    pub label: Label,
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<TraceRef>,
}

impl LabeledPair {
    fn validate(&self) -> Result<()> {
        let dim = self.env.state_dim();
        if self.state.len() != dim {
            return Err(Error::Schema(format!(
                "{} label state has {} entries, expected {dim}",
                self.env,
                self.state.len()
            )));
        }
        Ok(())
    }

    pub fn dedup_key(&self) -> LabelKey {
        match self.trace_ref {
            Some(r) => LabelKey::Trace(self.env, r),
            None => LabelKey::Exact {
                env: self.env,
                state: self.state.iter().map(|v| v.to_bits()).collect(),
                action: self.action.index,
                value: self.action.value.map(f64::to_bits),
            },
        }
    }
}

/// Deduplication key: the trace back-pointer when present, else the exact
/// bit pattern of the state and action.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LabelKey {
    Trace(EnvId, TraceRef),
    Exact {
        env: EnvId,
        state: Vec<u64>,
        action: usize,
        value: Option<u64>,
    },
}

/// Merges `incoming` into `existing`. A MANUAL label is never replaced by a
/// RULE label for the same key; otherwise the incoming record wins. The
/// output keeps first-insertion order.
pub fn merge_labels(existing: &[LabeledPair], incoming: &[LabeledPair]) -> Vec<LabeledPair> {
    let mut order: Vec<LabeledPair> = Vec::with_capacity(existing.len() + incoming.len());
    let mut index: std::collections::HashMap<LabelKey, usize> = Default::default();
    for pair in existing.iter().chain(incoming) {
        let key = pair.dedup_key();
        match index.get(&key) {
            Some(&slot) => {
                let keep_old =
                    order[slot].source == LabelSource::Manual && pair.source == LabelSource::Rule;
                if !keep_old {
                    order[slot] = pair.clone();
                }
            }
            None => {
                index.insert(key, order.len());
                order.push(pair.clone());
            }
        }
    }
    order
}

/// Desirable/undesirable counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorCounts {
    pub desirable: u64,
    pub undesirable: u64,
}

impl BehaviorCounts {
    pub fn new(desirable: u64, undesirable: u64) -> Self {
        BehaviorCounts {
            desirable,
            undesirable,
        }
    }

    pub fn record(&mut self, label: Label) {
        match label {
            Label::Desirable => self.desirable += 1,
            Label::Undesirable => self.undesirable += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.desirable + self.undesirable
    }

    pub fn merge(&mut self, other: BehaviorCounts) {
        self.desirable += other.desirable;
        self.undesirable += other.undesirable;
    }

    pub fn ratio(&self) -> Result<f64> {
        undesirable_ratio(*self)
    }
}

/// UNDESIRABLE / (DESIRABLE + UNDESIRABLE).
pub fn undesirable_ratio(counts: BehaviorCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::NoClassifiedBehavior);
    }
    Ok(counts.undesirable as f64 / total as f64)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes one JSON record per line, creating parent directories.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record)
            .map_err(|e| Error::Schema(format!("cannot serialize record: {e}")))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads one JSON record per line; blank lines are skipped.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_trace_log(path: impl AsRef<Path>, transitions: &[Transition]) -> Result<()> {
    for t in transitions {
        t.validate()?;
    }
    write_ndjson(path.as_ref(), transitions)
}

pub fn read_trace_log(path: impl AsRef<Path>) -> Result<Vec<Transition>> {
    let records: Vec<Transition> = read_ndjson(path.as_ref())?;
    for t in &records {
        t.validate()?;
    }
    Ok(records)
}

pub fn write_label_log(path: impl AsRef<Path>, labels: &[LabeledPair]) -> Result<()> {
    for l in labels {
        l.validate()?;
    }
    write_ndjson(path.as_ref(), labels)
}

pub fn read_label_log(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    let records: Vec<LabeledPair> = read_ndjson(path.as_ref())?;
    for l in &records {
        l.validate()?;
    }
    Ok(records)
}
