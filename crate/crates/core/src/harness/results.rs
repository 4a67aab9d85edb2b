//! Sweep results as CSV: one `cell` row per (modifier, seed) followed by
//! one `aggregate` row per modifier. Aggregate rows hold means in the value
//! columns and standard deviations in the `_std` columns; empty fields are
//! missing values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{aggregate, Aggregate, CellResult, ExperimentResult};
use crate::error::{Error, Result};
use crate::types::EnvId;

pub const RESULT_COLUMNS: [&str; 17] = [
    "env",
    "kind",
    "modifier",
    "seed",
    "n",
    "eval_reward",
    "eval_reward_std",
    "avg_reward",
    "avg_reward_std",
    "undesirable_ratio",
    "undesirable_ratio_std",
    "convergence_step",
    "convergence_step_std",
    "train_wall_time",
    "train_wall_time_std",
    "episodes",
    "error",
];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    env: EnvId,
    kind: String,
    modifier: f64,
    seed: Option<u64>,
    n: usize,
    eval_reward: Option<f64>,
    eval_reward_std: Option<f64>,
    avg_reward: Option<f64>,
    avg_reward_std: Option<f64>,
    undesirable_ratio: Option<f64>,
    undesirable_ratio_std: Option<f64>,
    convergence_step: Option<f64>,
    convergence_step_std: Option<f64>,
    train_wall_time: Option<f64>,
    train_wall_time_std: Option<f64>,
    episodes: Option<f64>,
    error: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn cell_row(env: EnvId, c: &CellResult) -> Row {
    Row {
        env,
        kind: "cell".into(),
        modifier: c.modifier,
        seed: Some(c.seed),
        n: 1,
        eval_reward: c.eval_reward,
        eval_reward_std: None,
        avg_reward: c.avg_reward,
        avg_reward_std: None,
        undesirable_ratio: c.undesirable_ratio,
        undesirable_ratio_std: None,
        convergence_step: c.convergence_step.map(|v| v as f64),
        convergence_step_std: None,
        train_wall_time: c.train_wall_time,
        train_wall_time_std: None,
        episodes: c.episodes.map(|v| v as f64),
        error: c.error.clone(),
    }
}

fn aggregate_row(env: EnvId, a: &Aggregate) -> Row {
    Row {
        env,
        kind: "aggregate".into(),
        modifier: a.modifier,
        seed: None,
        n: a.n,
        eval_reward: finite(a.eval_reward.0),
        eval_reward_std: finite(a.eval_reward.1),
        avg_reward: finite(a.avg_reward.0),
        avg_reward_std: finite(a.avg_reward.1),
        undesirable_ratio: finite(a.undesirable_ratio.0),
        undesirable_ratio_std: finite(a.undesirable_ratio.1),
        convergence_step: finite(a.convergence_step.0),
        convergence_step_std: finite(a.convergence_step.1),
        train_wall_time: finite(a.train_wall_time.0),
        train_wall_time_std: finite(a.train_wall_time.1),
        episodes: finite(a.episodes.0),
        error: None,
    }
}

pub fn write_results(result: &ExperimentResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Schema(format!("cannot write results: {e}"));
    if result.cells.is_empty() {
        w.write_record(RESULT_COLUMNS).map_err(csv_err)?;
    }
    for c in &result.cells {
        w.serialize(cell_row(result.env, c)).map_err(csv_err)?;
    }
    for a in &result.aggregates {
        w.serialize(aggregate_row(result.env, a)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))
}

pub fn export_results(result: &ExperimentResult, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_results(result, &mut buf)?;
    crate::types::write_text(path, &String::from_utf8(buf).expect("csv output is UTF-8"))
}

fn close(a: f64, b: Option<f64>) -> bool {
    match b {
        None => !a.is_finite(),
        Some(b) => (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())),
    }
}

/// Parses results and checks every aggregate row against the cells.
pub fn read_results(input: impl Read) -> Result<ExperimentResult> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.iter().ne(RESULT_COLUMNS) {
        return Err(Error::Schema(format!("unexpected result columns: {headers:?}")));
    }
    let mut env = None;
    let mut cells = Vec::new();
    let mut stated = Vec::new();
    for (i, row) in rd.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        match env {
            None => env = Some(row.env),
            Some(e) if e != row.env => {
                return Err(Error::MixedEnvironments { expected: e, found: row.env })
            }
            _ => {}
        }
        let as_usize = |v: Option<f64>| v.map(|x| x as usize);
        match row.kind.as_str() {
            "cell" => cells.push(CellResult {
                modifier: row.modifier,
                seed: row.seed.ok_or(Error::Parse { line, message: "cell row without seed".into() })?,
                eval_reward: row.eval_reward,
                avg_reward: row.avg_reward,
                undesirable_ratio: row.undesirable_ratio,
                convergence_step: as_usize(row.convergence_step),
                train_wall_time: row.train_wall_time,
                episodes: as_usize(row.episodes),
                error: row.error,
            }),
            "aggregate" => stated.push((line, row)),
            other => {
                return Err(Error::Parse { line, message: format!("unknown row kind {other:?}") })
            }
        }
    }
    let env = env.unwrap_or(EnvId::Snake);
    let computed = aggregate(&cells);
    if computed.len() != stated.len() {
        return Err(Error::Schema(format!(
            "{} aggregate rows for {} modifiers",
            stated.len(),
            computed.len()
        )));
    }
    for (a, (line, row)) in computed.iter().zip(&stated) {
        let ok = a.modifier == row.modifier
            && a.n == row.n
            && close(a.eval_reward.0, row.eval_reward)
            && close(a.eval_reward.1, row.eval_reward_std)
            && close(a.avg_reward.0, row.avg_reward)
            && close(a.avg_reward.1, row.avg_reward_std)
            && close(a.undesirable_ratio.0, row.undesirable_ratio)
            && close(a.undesirable_ratio.1, row.undesirable_ratio_std)
            && close(a.convergence_step.0, row.convergence_step)
            && close(a.convergence_step.1, row.convergence_step_std)
            && close(a.train_wall_time.0, row.train_wall_time)
            && close(a.train_wall_time.1, row.train_wall_time_std)
            && close(a.episodes.0, row.episodes);
        if !ok {
            return Err(Error::Schema(format!(
                "aggregate row at line {line} disagrees with its cells"
            )));
        }
    }
    Ok(ExperimentResult { env, cells, aggregates: computed })
}

pub fn parse_results(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_results(file)
}
