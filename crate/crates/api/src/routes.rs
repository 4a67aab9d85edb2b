use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use serde::{Deserialize, Serialize};
use ubr_core::env::{congestion, snake, traffic};
use ubr_core::grammar::{instantiate_grammar, RuleKind};
use ubr_core::harness::{run_sweep_with, ExperimentResult, SweepConfig};
use ubr_core::pipeline::{fit_label_tree, score_label_tree};
use ubr_core::tree::{edit_tree as apply_edit, enumerate_paths, serialize_tree, TreeEdit, TreeFlavor, TreeParams, TreePath};
use ubr_core::{EnvId, LabelSource, LabeledPair, Transition};

use crate::error::{ApiError, ApiResult};
use crate::store::{JobKind, JobRecord, JobStatus, TreeEntry};
use crate::AppState;

type Body<T> = Result<Json<T>, JsonRejection>;
type Params<T> = Result<Query<T>, QueryRejection>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

/// Enough layout to render a state vector without knowing the environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDescriptor {
    pub env: EnvId,
    pub state_dim: usize,
    pub action_names: Vec<String>,
    pub layout: Vec<Segment>,
    pub grammar_features: usize,
    /// Feature count per grammar rule kind.
    pub grammar_kinds: BTreeMap<String, usize>,
    pub trace_count: usize,
    pub label_count: usize,
}

fn segment(name: &str, start: usize, len: usize) -> Segment {
    Segment {
        name: name.to_string(),
        start,
        len,
    }
}

fn describe(env: EnvId, traces: usize, labels: usize) -> EnvDescriptor {
    let (action_names, layout): (Vec<String>, Vec<Segment>) = match env {
        EnvId::Snake => (
            snake::Direction::NAMES.map(String::from).to_vec(),
            vec![
                segment("apple", snake::APL, 4),
                segment("direction", snake::DIR, 4),
                segment("obstacle", snake::OBS, 4),
            ],
        ),
        EnvId::Traffic => (
            traffic::Phase::NAMES.map(String::from).to_vec(),
            traffic::LANE_NAMES
                .iter()
                .enumerate()
                .map(|(l, name)| segment(name, l * traffic::SEGMENTS, traffic::SEGMENTS))
                .collect(),
        ),
        EnvId::Congestion => (
            congestion::RATE_DELTAS.iter().map(|d| format!("{d:+}")).collect(),
            vec![
                segment("latency_gradient", congestion::LATENCY_GRADIENT, congestion::WINDOW),
                segment("latency_ratio", congestion::LATENCY_RATIO, congestion::WINDOW),
                segment("sending_ratio", congestion::SENDING_RATIO, congestion::WINDOW),
            ],
        ),
    };
    let grammar = instantiate_grammar(env);
    let mut grammar_kinds = BTreeMap::new();
    for rule in &grammar.features {
        let kind = match rule.kind {
            RuleKind::Value { .. } => "value",
            RuleKind::Diff { .. } => "diff",
            RuleKind::Sign { .. } => "sign",
            RuleKind::Average { .. } => "average",
            RuleKind::Action => "action",
            RuleKind::IsAction { .. } => "is_action",
            RuleKind::IsEqual { .. } => "is_equal",
        };
        *grammar_kinds.entry(kind.to_string()).or_insert(0) += 1;
    }
    EnvDescriptor {
        env,
        state_dim: env.state_dim(),
        action_names,
        layout,
        grammar_features: grammar.len(),
        grammar_kinds,
        trace_count: traces,
        label_count: labels,
    }
}

pub async fn envs(State(state): State<AppState>) -> Json<Vec<EnvDescriptor>> {
    let store = state.read();
    Json(
        EnvId::ALL
            .iter()
            .map(|&env| {
                let traces = store.traces.get(&env).map_or(0, Vec::len);
                let labels = store.labels.get(&env).map_or(0, |s| s.pairs.len());
                describe(env, traces, labels)
            })
            .collect(),
    )
}

const DEFAULT_PAGE: usize = 500;
const MAX_PAGE: usize = 10_000;

#[derive(Debug, Deserialize)]
pub struct TraceQuery {
    env: EnvId,
    episode: Option<u64>,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TracePage {
    pub env: EnvId,
    pub episode: Option<u64>,
    /// Matching transitions before paging.
    pub total: usize,
    pub offset: usize,
    pub transitions: Vec<Transition>,
}

fn page_limit(limit: Option<usize>) -> ApiResult<usize> {
    match limit.unwrap_or(DEFAULT_PAGE) {
        0 => Err(ApiError::bad_field("limit", "limit must be positive")),
        n => Ok(n.min(MAX_PAGE)),
    }
}

pub async fn traces(State(state): State<AppState>, q: Params<TraceQuery>) -> ApiResult<Json<TracePage>> {
    let Query(q) = q?;
    let limit = page_limit(q.limit)?;
    let store = state.read();
    let all = store.traces.get(&q.env).map(Vec::as_slice).unwrap_or_default();
    let matching: Vec<&Transition> = all
        .iter()
        .filter(|t| q.episode.is_none_or(|e| t.episode == e))
        .collect();
    Ok(Json(TracePage {
        env: q.env,
        episode: q.episode,
        total: matching.len(),
        offset: q.offset,
        transitions: matching.into_iter().skip(q.offset).take(limit).cloned().collect(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct LabelQuery {
    env: EnvId,
    #[serde(default)]
    offset: usize,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelPage {
    pub env: EnvId,
    pub revision: u64,
    pub total: usize,
    pub offset: usize,
    pub labels: Vec<LabeledPair>,
}

pub async fn get_labels(State(state): State<AppState>, q: Params<LabelQuery>) -> ApiResult<Json<LabelPage>> {
    let Query(q) = q?;
    let limit = page_limit(q.limit)?;
    let store = state.read();
    let set = store.labels.get(&q.env).cloned().unwrap_or_default();
    Ok(Json(LabelPage {
        env: q.env,
        revision: set.revision,
        total: set.pairs.len(),
        offset: q.offset,
        labels: set.pairs.into_iter().skip(q.offset).take(limit).collect(),
    }))
}

/// A bare list of pairs, or the list with the revision the client last
/// read. A stale `expected_revision` is rejected with 409.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelPost {
    Pairs(Vec<LabeledPair>),
    Guarded {
        labels: Vec<LabeledPair>,
        expected_revision: Option<u64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelPostReply {
    pub env: EnvId,
    pub revision: u64,
    pub accepted: usize,
    pub total: usize,
}

fn check_manual(pairs: &[LabeledPair]) -> ApiResult<EnvId> {
    let env = pairs
        .first()
        .ok_or_else(|| ApiError::bad_field("labels", "no labels in request"))?
        .env;
    for (i, p) in pairs.iter().enumerate() {
        if p.env != env {
            return Err(ApiError::bad_field(
                format!("labels[{i}].env"),
                format!("one environment per request: expected {env}, found {}", p.env),
            ));
        }
        if p.source != LabelSource::Manual {
            return Err(ApiError::bad_field(format!("labels[{i}].source"), "posted labels must be MANUAL"));
        }
        if p.state.len() != env.state_dim() {
            return Err(ApiError::bad_field(
                format!("labels[{i}].state"),
                format!("{env} states have {} entries, got {}", env.state_dim(), p.state.len()),
            ));
        }
        if p.action.index >= env.num_actions() {
            return Err(ApiError::bad_field(
                format!("labels[{i}].action"),
                format!("action index {} out of range for {env}", p.action.index),
            ));
        }
    }
    Ok(env)
}

pub async fn post_labels(
    State(state): State<AppState>,
    body: Body<LabelPost>,
) -> ApiResult<Json<LabelPostReply>> {
    let Json(body) = body?;
    let (pairs, expected) = match body {
        LabelPost::Pairs(p) => (p, None),
        LabelPost::Guarded {
            labels,
            expected_revision,
        } => (labels, expected_revision),
    };
    let env = check_manual(&pairs)?;
    let mut store = state.write();
    let current = store.labels.get(&env).map_or(0, |s| s.revision);
    if let Some(want) = expected.filter(|&want| want != current) {
        return Err(ApiError::conflict(format!(
            "{env} labels are at revision {current}, request expected {want}"
        )));
    }
    let revision = store.merge_labels(env, &pairs)?;
    Ok(Json(LabelPostReply {
        env,
        revision,
        accepted: pairs.len(),
        total: store.labels[&env].pairs.len(),
    }))
}

fn default_holdout() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTreeRequest {
    pub env: EnvId,
    #[serde(default)]
    pub params: TreeParams,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Label sources to train on; all when absent.
    #[serde(default)]
    pub sources: Option<Vec<LabelSource>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

fn accepted(job_id: String) -> (StatusCode, Json<JobAccepted>) {
    (StatusCode::ACCEPTED, Json(JobAccepted { job_id }))
}

/// Runs `work` on the blocking pool and records its outcome on the job.
fn launch<F>(state: &AppState, kind: JobKind, work: F) -> String
where
    F: FnOnce(&AppState, &str) -> Result<String, String> + Send + 'static,
{
    let job_id = state.write().new_job(kind);
    let (state, id) = (state.clone(), job_id.clone());
    tokio::task::spawn_blocking(move || {
        state.write().update_job(&id, JobStatus::Running, 0.0);
        let outcome = work(&state, &id);
        if let Err(e) = &outcome {
            tracing::warn!("job {id} failed: {e}");
        }
        state.write().finish_job(&id, outcome);
    });
    job_id
}

pub async fn train_tree(
    State(state): State<AppState>,
    body: Body<TrainTreeRequest>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let Json(req) = body?;
    if !(0.0..1.0).contains(&req.holdout_fraction) {
        return Err(ApiError::bad_field("holdout_fraction", "holdout_fraction must be in [0, 1)"));
    }
    if req.params.max_depth < 1 {
        return Err(ApiError::bad_field("params.max_depth", "max_depth must be at least 1"));
    }
    if req.params.min_samples_leaf < 1 {
        return Err(ApiError::bad_field("params.min_samples_leaf", "min_samples_leaf must be at least 1"));
    }
    let pairs: Vec<LabeledPair> = state
        .read()
        .labels
        .get(&req.env)
        .map(|s| {
            s.pairs
                .iter()
                .filter(|p| req.sources.as_ref().is_none_or(|src| src.contains(&p.source)))
                .cloned()
                .collect()
        })
        .unwrap_or_default();
    if pairs.is_empty() {
        return Err(ApiError::bad_field("env", format!("no {} labels match the selection", req.env)));
    }
    let job_id = launch(&state, JobKind::TrainTree, move |state, _| {
        let (tree, report) =
            fit_label_tree(&pairs, &req.params, req.holdout_fraction, req.seed).map_err(|e| e.to_string())?;
        let scores = Some(report.holdout.clone().unwrap_or_else(|| report.train.clone()));
        let id = state
            .write()
            .insert_tree(TreeEntry {
                tree,
                report: Some(report),
                scores,
                parent: None,
                edits: Vec::new(),
            })
            .map_err(|e| e.to_string())?;
        Ok(format!("/trees/{id}"))
    });
    Ok(accepted(job_id))
}

#[derive(Debug, Deserialize)]
pub struct TreeQuery {
    depth_limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeView {
    pub id: String,
    pub env: EnvId,
    pub parent: Option<String>,
    pub edits: Vec<TreeEdit>,
    pub node_count: usize,
    pub depth: usize,
    /// Holdout balanced accuracy for fit trees; for edited trees, balanced
    /// accuracy on the labels present when the edit was made.
    pub balanced_accuracy: Option<f64>,
    pub report: Option<ubr_core::pipeline::LabelTreeReport>,
    /// The tree file, as written by `ubr train-tree`.
    pub tree: serde_json::Value,
    pub depth_limit: Option<usize>,
    pub paths: Vec<TreePath>,
}

pub async fn get_tree(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Params<TreeQuery>,
) -> ApiResult<Json<TreeView>> {
    let Query(q) = q?;
    let entry = state
        .read()
        .trees
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("tree", &id))?;
    let file = serialize_tree(&entry.tree)?;
    let tree = serde_json::from_str(&file).map_err(|e| ApiError::from(ubr_core::Error::Schema(e.to_string())))?;
    Ok(Json(TreeView {
        env: entry.tree.features.env,
        parent: entry.parent,
        edits: entry.edits,
        node_count: entry.tree.node_count(),
        depth: entry.tree.depth(),
        balanced_accuracy: entry.scores.and_then(|s| s.balanced_accuracy),
        report: entry.report,
        paths: enumerate_paths(&entry.tree, q.depth_limit),
        depth_limit: q.depth_limit,
        tree,
        id,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EditPost {
    Edits(Vec<TreeEdit>),
    Wrapped { edits: Vec<TreeEdit> },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EditReply {
    pub id: String,
    pub parent: String,
    pub node_count: usize,
}

/// Applies the edits to a copy, stored under a new id; the original stays.
pub async fn edit_tree(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Body<EditPost>,
) -> ApiResult<(StatusCode, Json<EditReply>)> {
    let Json(body) = body?;
    let edits = match body {
        EditPost::Edits(e) | EditPost::Wrapped { edits: e } => e,
    };
    if edits.is_empty() {
        return Err(ApiError::bad_field("edits", "no edits in request"));
    }
    let mut store = state.write();
    let base = store.trees.get(&id).ok_or_else(|| ApiError::not_found("tree", &id))?;
    let mut tree = base.tree.clone();
    let mut history = base.edits.clone();
    for (i, edit) in edits.iter().enumerate() {
        tree = apply_edit(&tree, edit).map_err(|e| ApiError::bad_field(format!("edits[{i}]"), e.to_string()))?;
        history.push(edit.clone());
    }
    let env = tree.features.env;
    let scores = match store.labels.get(&env) {
        Some(set) if !set.pairs.is_empty() && tree.flavor == TreeFlavor::Classifier => {
            Some(score_label_tree(&tree, &set.pairs)?)
        }
        _ => None,
    };
    let node_count = tree.node_count();
    let new_id = store.insert_tree(TreeEntry {
        tree,
        report: None,
        scores,
        parent: Some(id.clone()),
        edits: history,
    })?;
    Ok((
        StatusCode::CREATED,
        Json(EditReply {
            id: new_id,
            parent: id,
            node_count,
        }),
    ))
}

/// A sweep configuration plus the label tree that shapes it. The tree may
/// be omitted when the only modifier is 1.0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRequest {
    pub tree_id: Option<String>,
    #[serde(flatten)]
    pub config: SweepConfig,
}

pub async fn sweep(
    State(state): State<AppState>,
    body: Body<SweepRequest>,
) -> ApiResult<(StatusCode, Json<JobAccepted>)> {
    let Json(req) = body?;
    let cfg = req.config;
    cfg.validate().map_err(|e| ApiError::bad_field("config", e.to_string()))?;
    let tree = match &req.tree_id {
        Some(id) => {
            let store = state.read();
            let entry = store.trees.get(id).ok_or_else(|| ApiError::not_found("tree", id))?;
            if entry.tree.features.env != cfg.env {
                return Err(ApiError::bad_field(
                    "tree_id",
                    format!("tree {id} is for {}, sweep is for {}", entry.tree.features.env, cfg.env),
                ));
            }
            if entry.tree.flavor != TreeFlavor::Classifier {
                return Err(ApiError::bad_field("tree_id", format!("tree {id} is not a label tree")));
            }
            Some(Arc::new(entry.tree.clone()))
        }
        None if cfg.modifiers.iter().any(|&m| m != 1.0) => {
            return Err(ApiError::bad_field("tree_id", "modifiers below 1.0 need a tree_id"));
        }
        None => None,
    };
    let job_id = launch(&state, JobKind::Sweep, move |state, job| {
        let total = (cfg.modifiers.len() * cfg.seeds.len()) as f64;
        let result: ExperimentResult = run_sweep_with(&cfg, tree, |done| {
            state.write().update_job(job, JobStatus::Running, done as f64 / total);
        })
        .map_err(|e| e.to_string())?;
        let id = state.write().insert_experiment(result).map_err(|e| e.to_string())?;
        Ok(format!("/experiments/{id}"))
    });
    Ok(accepted(job_id))
}

pub async fn get_experiment(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ExperimentResult>> {
    state
        .read()
        .experiments
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("experiment", &id))
}

pub async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    state
        .read()
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("job", &id))
}
