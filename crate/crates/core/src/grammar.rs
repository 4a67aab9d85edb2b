//! Grammar rules as feature templates, their per-environment instantiation
//! sets and featurization of (state, action) pairs.
//!
//! Rules index an *extended* vector: the raw state followed by the one-hot
//! action. Only the Snake grammar reaches into the action part (its ACT
//! partition); the others read the action through `Action`/`IsAction`.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::env::congestion::{SENDING_RATIO, WINDOW};
use crate::env::snake::Direction;
use crate::env::traffic::{self, Phase, LANE_NAMES, SEGMENTS};
use crate::error::{Error, Result};
use crate::types::{Action, EnvId, LabeledPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RuleKind {
    Value { index: usize },
    Diff { i: usize, j: usize },
    Sign { i: usize, j: usize },
    Average { indices: Vec<usize> },
    Action,
    IsAction { action: usize },
    IsEqual { left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    pub display_name: String,
}

impl GrammarRule {
    fn new(kind: RuleKind, display_name: impl Into<String>) -> Self {
        GrammarRule {
            kind,
            display_name: display_name.into(),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match &self.kind {
            RuleKind::Value { index } => Some(*index),
            RuleKind::Diff { i, j } | RuleKind::Sign { i, j } => Some(*i.max(j)),
            RuleKind::Average { indices } => indices.iter().copied().max(),
            RuleKind::IsEqual { left, right } => Some(*left.max(right)),
            RuleKind::Action | RuleKind::IsAction { .. } => None,
        }
    }
}

/// Ordered feature columns for one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub env: EnvId,
    pub features: Vec<GrammarRule>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Length of state ++ one-hot action for this environment.
    pub fn extended_dim(&self) -> usize {
        self.env.state_dim() + self.env.num_actions()
    }

    /// Checks every index against the environment layout.
    pub fn validate(&self) -> Result<()> {
        let limit = self.extended_dim();
        for (c, rule) in self.features.iter().enumerate() {
            if let RuleKind::Average { indices } = &rule.kind {
                if indices.is_empty() {
                    return Err(Error::Schema(format!("feature {c}: empty Average index set")));
                }
            }
            if let RuleKind::IsAction { action } = rule.kind {
                if action >= self.env.num_actions() {
                    return Err(Error::Schema(format!("feature {c}: action {action} out of range")));
                }
            }
            if let Some(max) = rule.max_index() {
                if max >= limit {
                    return Err(Error::Schema(format!(
                        "feature {c} ({}) indexes {max}, layout has {limit} entries",
                        rule.display_name
                    )));
                }
            }
        }
        Ok(())
    }

    /// One row of feature values.
    pub fn eval_row(&self, state: &[f64], action: &Action) -> Vec<f64> {
        self.features
            .iter()
            .map(|r| eval_feature(r, state, action))
            .collect()
    }

    pub fn write_lines(&self, mut out: impl Write) -> Result<()> {
        let header = serde_json::json!({ "env": self.env, "count": self.features.len() });
        let map = |e: std::io::Error| Error::io("<feature set>", e);
        writeln!(out, "{header}").map_err(map)?;
        for rule in &self.features {
            let line = serde_json::to_string(rule).map_err(|e| Error::Schema(e.to_string()))?;
            writeln!(out, "{line}").map_err(map)?;
        }
        Ok(())
    }

    pub fn read_lines(input: impl BufRead) -> Result<FeatureSet> {
        #[derive(Deserialize)]
        struct Header {
            env: EnvId,
            count: usize,
        }
        let mut lines = input.lines().enumerate();
        let parse_err = |line: usize, e: &dyn std::fmt::Display| Error::Parse {
            line,
            message: e.to_string(),
        };
        let header: Header = match lines.next() {
            Some((_, Ok(l))) => serde_json::from_str(&l).map_err(|e| parse_err(1, &e))?,
            Some((_, Err(e))) => return Err(Error::io("<feature set>", e)),
            None => return Err(parse_err(1, &"missing feature set header")),
        };
        let mut features = Vec::with_capacity(header.count);
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io("<feature set>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            features.push(serde_json::from_str(&line).map_err(|e| parse_err(n + 1, &e))?);
        }
        if features.len() != header.count {
            return Err(Error::Schema(format!(
                "header declares {} features, found {}",
                header.count,
                features.len()
            )));
        }
        let fs = FeatureSet {
            env: header.env,
            features,
        };
        fs.validate()?;
        Ok(fs)
    }
}

fn extended(state: &[f64], action: &Action, k: usize) -> f64 {
    match state.get(k) {
        Some(&v) => v,
        None => f64::from(action.index == k - state.len()),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Value of one feature on a (state, action) pair.
///
/// # Panics
/// If the rule indexes past the extended layout; feature sets are checked by
/// [`FeatureSet::validate`] before use.
pub fn eval_feature(rule: &GrammarRule, state: &[f64], action: &Action) -> f64 {
    let s = |k: usize| extended(state, action, k);
    match &rule.kind {
        RuleKind::Value { index } => s(*index),
        RuleKind::Diff { i, j } => s(*i) - s(*j),
        RuleKind::Sign { i, j } => sign(s(*i) - s(*j)),
        RuleKind::Average { indices } => {
            indices.iter().map(|&k| s(k)).sum::<f64>() / indices.len() as f64
        }
        RuleKind::Action => action.real_value(),
        RuleKind::IsAction { action: d } => f64::from(action.index == *d),
        RuleKind::IsEqual { left, right } => f64::from(s(*left) == s(*right)),
    }
}

/// Feature matrix (rows follow `pairs`) and labels, UNDESIRABLE = 1.
pub fn featurize(pairs: &[LabeledPair], fs: &FeatureSet) -> Result<(Array2<f64>, Vec<usize>)> {
    fs.validate()?;
    let mut x = Array2::zeros((pairs.len(), fs.len()));
    let mut y = Vec::with_capacity(pairs.len());
    for (k, pair) in pairs.iter().enumerate() {
        if pair.env != fs.env {
            return Err(Error::MixedEnvironments {
                expected: fs.env,
                found: pair.env,
            });
        }
        if pair.state.len() != fs.env.state_dim() {
            return Err(Error::Schema(format!(
                "pair {k} has {} state entries, expected {}",
                pair.state.len(),
                fs.env.state_dim()
            )));
        }
        for (c, rule) in fs.features.iter().enumerate() {
            x[[k, c]] = eval_feature(rule, &pair.state, &pair.action);
        }
        y.push(pair.label.class());
    }
    Ok((x, y))
}

fn subscript(n: usize) -> String {
    const DIGITS: [char; 10] = ['₀', '₁', '₂', '₃', '₄', '₅', '₆', '₇', '₈', '₉'];
    n.to_string()
        .chars()
        .map(|c| DIGITS[c.to_digit(10).unwrap() as usize])
        .collect()
}

fn subscripts(ns: &[usize]) -> String {
    ns.iter().map(|&n| subscript(n)).collect::<Vec<_>>().join(",")
}

/// The grammar instantiation for an environment.
pub fn instantiate_grammar(env: EnvId) -> FeatureSet {
    let features = match env {
        EnvId::Congestion => sliding_window_grammar(),
        EnvId::Traffic => lane_window_grammar(),
        EnvId::Snake => partition_grammar(),
    };
    FeatureSet { env, features }
}

/// Sliding-window rules over the sending-ratio window only.
fn sliding_window_grammar() -> Vec<GrammarRule> {
    let at = |i: usize| SENDING_RATIO + i;
    let mut f = Vec::with_capacity(70);
    for i in 0..WINDOW {
        f.push(GrammarRule::new(RuleKind::Value { index: at(i) }, format!("Value{}", subscript(i))));
    }
    for gap in [1, 2] {
        for i in 0..WINDOW - gap {
            f.push(GrammarRule::new(
                RuleKind::Diff { i: at(i), j: at(i + gap) },
                format!("Diff{}", subscripts(&[i, i + gap])),
            ));
        }
    }
    for gap in [1, 2] {
        for i in 0..WINDOW - gap {
            f.push(GrammarRule::new(
                RuleKind::Sign { i: at(i), j: at(i + gap) },
                format!("Sign{}", subscripts(&[i, i + gap])),
            ));
        }
    }
    let averages: [&[usize]; 3] = [&[0, 1], &[0, 2], &[0, 1, 2]];
    for offsets in averages {
        let span = offsets[offsets.len() - 1];
        for i in 0..WINDOW - span {
            let idx: Vec<usize> = offsets.iter().map(|o| i + o).collect();
            f.push(GrammarRule::new(
                RuleKind::Average { indices: idx.iter().map(|&k| at(k)).collect() },
                format!("AVG{}", subscripts(&idx)),
            ));
        }
    }
    f.push(GrammarRule::new(RuleKind::Action, "ACT"));
    f
}

/// Lane-major order used when listing the instantiation sets.
const GRAMMAR_LANES: [usize; 8] = [
    traffic::N2S,
    traffic::S2N,
    traffic::E2W,
    traffic::W2E,
    traffic::N2TL,
    traffic::S2TL,
    traffic::E2TL,
    traffic::W2TL,
];
const GRAMMAR_PHASES: [Phase; 4] = [Phase::NS, Phase::EW, Phase::NSL, Phase::EWL];

fn lane_window_grammar() -> Vec<GrammarRule> {
    let at = |lane: usize, seg: usize| lane * SEGMENTS + seg;
    let mut f = Vec::with_capacity(212);
    for lane in GRAMMAR_LANES {
        for i in 0..SEGMENTS {
            f.push(GrammarRule::new(
                RuleKind::Value { index: at(lane, i) },
                format!("Value({},{i})", LANE_NAMES[lane]),
            ));
        }
    }
    for lane in GRAMMAR_LANES {
        for i in 0..SEGMENTS - 1 {
            f.push(GrammarRule::new(
                RuleKind::Diff { i: at(lane, i), j: at(lane, i + 1) },
                format!("Diff({},{i},{})", LANE_NAMES[lane], i + 1),
            ));
        }
    }
    for lane in GRAMMAR_LANES {
        for m in 1..=7 {
            f.push(GrammarRule::new(
                RuleKind::Average { indices: (0..=m).map(|i| at(lane, i)).collect() },
                format!("Average({},0..{m})", LANE_NAMES[lane]),
            ));
        }
    }
    for phase in GRAMMAR_PHASES {
        f.push(GrammarRule::new(
            RuleKind::IsAction { action: phase as usize },
            format!("IsAction({})", Phase::NAMES[phase as usize]),
        ));
    }
    f
}

/// Equal-size partitions: APL, OBS, DIR and the synthesized ACT.
const PARTS: [(&str, usize); 4] = [("APL", 0), ("OBS", 8), ("DIR", 4), ("ACT", 12)];

fn partition_grammar() -> Vec<GrammarRule> {
    let mut f = Vec::with_capacity(44);
    for (name, base) in PARTS {
        for d in Direction::ALL {
            f.push(GrammarRule::new(
                RuleKind::Value { index: base + d.index() },
                format!("Value({name},{})", Direction::NAMES[d.index()]),
            ));
        }
    }
    for d in Direction::ALL {
        f.push(GrammarRule::new(
            RuleKind::IsAction { action: d.index() },
            format!("IsAction({})", Direction::NAMES[d.index()]),
        ));
    }
    for a in 0..PARTS.len() {
        for b in a + 1..PARTS.len() {
            let ((na, ba), (nb, bb)) = (PARTS[a], PARTS[b]);
            for d in Direction::ALL {
                f.push(GrammarRule::new(
                    RuleKind::IsEqual { left: ba + d.index(), right: bb + d.index() },
                    format!("IsEqual({na},{nb},{})", Direction::NAMES[d.index()]),
                ));
            }
        }
    }
    f
}

/// One `Value` feature per raw state entry, for tree policies.
pub fn raw_feature_set(env: EnvId) -> FeatureSet {
    let names: Vec<String> = match env {
        EnvId::Snake => ["APL", "DIR", "OBS"]
            .iter()
            .flat_map(|p| Direction::NAMES.iter().map(move |d| format!("{p}.{d}")))
            .collect(),
        EnvId::Traffic => LANE_NAMES
            .iter()
            .flat_map(|l| (0..SEGMENTS).map(move |s| format!("{l}[{s}]")))
            .collect(),
        EnvId::Congestion => ["LatGrad", "LatRatio", "SendRatio"]
            .iter()
            .flat_map(|p| (0..WINDOW).map(move |i| format!("{p}[{i}]")))
            .collect(),
    };
    FeatureSet {
        env,
        features: names
            .into_iter()
            .enumerate()
            .map(|(index, name)| GrammarRule::new(RuleKind::Value { index }, name))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Label, LabelSource};

    fn find<'a>(fs: &'a FeatureSet, name: &str) -> &'a GrammarRule {
        fs.features
            .iter()
            .find(|r| r.display_name == name)
            .unwrap_or_else(|| panic!("no feature {name}"))
    }

    #[test]
    fn instantiation_sizes() {
        let snake = instantiate_grammar(EnvId::Snake);
        let aurora = instantiate_grammar(EnvId::Congestion);
        let traffic = instantiate_grammar(EnvId::Traffic);
        assert_eq!(snake.len(), 44);
        assert_eq!(aurora.len(), 70);
        assert_eq!(traffic.len(), 212);
        for fs in [&snake, &aurora, &traffic] {
            fs.validate().unwrap();
        }

        let count = |fs: &FeatureSet, pred: fn(&RuleKind) -> bool| {
            fs.features.iter().filter(|r| pred(&r.kind)).count()
        };
        assert_eq!(count(&snake, |k| matches!(k, RuleKind::Value { .. })), 16);
        assert_eq!(count(&snake, |k| matches!(k, RuleKind::IsAction { .. })), 4);
        assert_eq!(count(&snake, |k| matches!(k, RuleKind::IsEqual { .. })), 24);
        assert_eq!(count(&aurora, |k| matches!(k, RuleKind::Diff { .. })), 17);
        assert_eq!(count(&aurora, |k| matches!(k, RuleKind::Sign { .. })), 17);
        assert_eq!(count(&aurora, |k| matches!(k, RuleKind::Average { .. })), 25);
        assert_eq!(count(&traffic, |k| matches!(k, RuleKind::Diff { .. })), 72);
        assert_eq!(count(&traffic, |k| matches!(k, RuleKind::Average { .. })), 56);
    }

    #[test]
    fn sign_of_window_difference() {
        let fs = instantiate_grammar(EnvId::Congestion);
        let mut s = vec![0.0; 30];
        s[20] = 1.3;
        s[21] = 1.1;
        let r = find(&fs, "Sign₀,₁");
        assert_eq!(eval_feature(r, &s, &Action::rate_bin(4)), 1.0);
        s[21] = 1.3;
        assert_eq!(eval_feature(r, &s, &Action::rate_bin(4)), 0.0);
    }

    #[test]
    fn apple_and_obstacle_to_the_right() {
        let fs = instantiate_grammar(EnvId::Snake);
        // APL = RIGHT, DIR = UP, OBS = RIGHT
        let mut s = vec![0.0; 12];
        s[1] = 1.0;
        s[4] = 1.0;
        s[9] = 1.0;
        let a = Action::discrete(0);
        assert_eq!(eval_feature(find(&fs, "IsEqual(APL,OBS,RIGHT)"), &s, &a), 1.0);
        // Index 2 (DOWN): both bits clear, so the parts agree there too.
        assert_eq!(eval_feature(find(&fs, "IsEqual(APL,OBS,DOWN)"), &s, &a), 1.0);
        assert_eq!(eval_feature(find(&fs, "IsEqual(APL,DIR,UP)"), &s, &a), 0.0);
        // ACT is synthesized from the action.
        assert_eq!(eval_feature(find(&fs, "Value(ACT,UP)"), &s, &a), 1.0);
        assert_eq!(eval_feature(find(&fs, "IsEqual(DIR,ACT,UP)"), &s, &a), 1.0);
    }

    #[test]
    fn average_of_constants() {
        let fs = instantiate_grammar(EnvId::Congestion);
        let s = vec![1.25; 30];
        for r in fs.features.iter().filter(|r| matches!(r.kind, RuleKind::Average { .. })) {
            assert_eq!(eval_feature(r, &s, &Action::rate_bin(0)), 1.25);
        }
    }

    #[test]
    fn featurize_shapes_and_errors() {
        let fs = instantiate_grammar(EnvId::Traffic);
        let (x, y) = featurize(&[], &fs).unwrap();
        assert_eq!(x.dim(), (0, 212));
        assert!(y.is_empty());

        let pair = LabeledPair {
            env: EnvId::Snake,
            state: vec![0.0; 12],
            action: Action::discrete(0),
            label: Label::Undesirable,
            source: LabelSource::Rule,
            trace_ref: None,
        };
        assert!(matches!(featurize(&[pair.clone()], &fs), Err(Error::MixedEnvironments { .. })));
        let snake = instantiate_grammar(EnvId::Snake);
        let (x, y) = featurize(&[pair.clone()], &snake).unwrap();
        assert_eq!(x.dim(), (1, 44));
        assert_eq!(y, vec![1]);
        for (c, rule) in snake.features.iter().enumerate() {
            assert_eq!(x[[0, c]], eval_feature(rule, &pair.state, &pair.action));
        }
    }

    #[test]
    fn out_of_range_feature_set_rejected() {
        let fs = FeatureSet {
            env: EnvId::Congestion,
            features: vec![GrammarRule::new(RuleKind::Value { index: 99 }, "bad")],
        };
        assert!(matches!(fs.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn feature_set_lines_round_trip() {
        for env in EnvId::ALL {
            let fs = instantiate_grammar(env);
            let mut buf = Vec::new();
            fs.write_lines(&mut buf).unwrap();
            assert_eq!(String::from_utf8_lossy(&buf).lines().count(), fs.len() + 1);
            let back = FeatureSet::read_lines(buf.as_slice()).unwrap();
            assert_eq!(back, fs);
        }
    }
}
