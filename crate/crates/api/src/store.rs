//! The service's state. Every mutation goes through one write lock, so the
//! lock is the single writer; jobs publish their progress through it too.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ubr_core::harness::{export_results, parse_results, ExperimentResult};
use ubr_core::pipeline::{LabelTreeReport, TreeScores};
use ubr_core::tree::{deserialize_tree, serialize_tree, DecisionTree, TreeEdit};
use ubr_core::types::{merge_labels, read_label_log, read_trace_log, write_label_log, write_text};
use ubr_core::{EnvId, LabeledPair, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    TrainTree,
    RetrainAgent,
    Sweep,
    Distill,
}

/// Declared in lifecycle order; a job only moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    /// Fraction of the work finished, in [0, 1].
    pub progress: f64,
    /// Where the product can be fetched once the job is done.
    pub result_ref: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    /// Bumped by every accepted POST.
    pub revision: u64,
    pub pairs: Vec<LabeledPair>,
}

#[derive(Debug, Clone)]
pub struct TreeEntry {
    pub tree: DecisionTree,
    /// Present for trees fit by the service.
    pub report: Option<LabelTreeReport>,
    /// Holdout scores for fit trees, scores on the current labels for edits.
    pub scores: Option<TreeScores>,
    pub parent: Option<String>,
    pub edits: Vec<TreeEdit>,
}

#[derive(Default)]
pub struct Store {
    pub traces: BTreeMap<EnvId, Vec<Transition>>,
    pub labels: BTreeMap<EnvId, LabelSet>,
    pub trees: BTreeMap<String, TreeEntry>,
    pub experiments: BTreeMap<String, ExperimentResult>,
    pub jobs: BTreeMap<String, JobRecord>,
    next_id: u64,
    data_dir: Option<PathBuf>,
}

fn traces_file(dir: &Path, env: EnvId) -> PathBuf {
    dir.join(format!("{env}.traces.ndjson"))
}

fn labels_file(dir: &Path, env: EnvId) -> PathBuf {
    dir.join(format!("{env}.labels.ndjson"))
}

/// Files named `<stem>.<ext>` in `dir`, sorted by stem.
fn stems(dir: &Path, ext: &str) -> Vec<(String, PathBuf)> {
    let mut out = Vec::new();
    let Ok(entries) = fs::read_dir(dir) else {
        return out;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    out
}

impl Store {
    /// Loads whatever the directory holds: `<env>.traces.ndjson`,
    /// `<env>.labels.ndjson`, `trees/<id>.json` and
    /// `experiments/<id>.csv`. Later mutations are written back.
    pub fn open(dir: impl Into<PathBuf>) -> ubr_core::Result<Store> {
        let dir = dir.into();
        let mut store = Store::default();
        for env in EnvId::ALL {
            let path = traces_file(&dir, env);
            if path.exists() {
                store.traces.insert(env, read_trace_log(&path)?);
            }
            let path = labels_file(&dir, env);
            if path.exists() {
                let pairs = read_label_log(&path)?;
                store.labels.insert(env, LabelSet { revision: 0, pairs });
            }
        }
        for (id, path) in stems(&dir.join("trees"), "json") {
            let text = fs::read_to_string(&path).map_err(|e| ubr_core::Error::Io { path, source: e })?;
            let tree = deserialize_tree(&text)?;
            store.bump_past(&id);
            store.trees.insert(
                id,
                TreeEntry {
                    tree,
                    report: None,
                    scores: None,
                    parent: None,
                    edits: Vec::new(),
                },
            );
        }
        for (id, path) in stems(&dir.join("experiments"), "csv") {
            store.bump_past(&id);
            store.experiments.insert(id, parse_results(&path)?);
        }
        store.data_dir = Some(dir);
        Ok(store)
    }

    fn bump_past(&mut self, id: &str) {
        if let Some(n) = id.get(1..).and_then(|s| s.parse::<u64>().ok()) {
            self.next_id = self.next_id.max(n);
        }
    }

    /// A fresh id such as `t4`; the counter is shared by all kinds.
    pub fn fresh_id(&mut self, prefix: char) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    pub fn set_traces(&mut self, env: EnvId, traces: Vec<Transition>) {
        self.traces.insert(env, traces);
    }

    /// Merges labels for one environment and returns the new revision.
    pub fn merge_labels(&mut self, env: EnvId, incoming: &[LabeledPair]) -> ubr_core::Result<u64> {
        let set = self.labels.entry(env).or_default();
        set.pairs = merge_labels(&set.pairs, incoming);
        set.revision += 1;
        let revision = set.revision;
        if let Some(dir) = &self.data_dir {
            write_label_log(labels_file(dir, env), &self.labels[&env].pairs)?;
        }
        Ok(revision)
    }

    pub fn insert_tree(&mut self, entry: TreeEntry) -> ubr_core::Result<String> {
        let id = self.fresh_id('t');
        if let Some(dir) = &self.data_dir {
            write_text(dir.join("trees").join(format!("{id}.json")), &serialize_tree(&entry.tree)?)?;
        }
        self.trees.insert(id.clone(), entry);
        Ok(id)
    }

    pub fn insert_experiment(&mut self, result: ExperimentResult) -> ubr_core::Result<String> {
        let id = self.fresh_id('x');
        if let Some(dir) = &self.data_dir {
            export_results(&result, dir.join("experiments").join(format!("{id}.csv")))?;
        }
        self.experiments.insert(id.clone(), result);
        Ok(id)
    }

    pub fn new_job(&mut self, kind: JobKind) -> String {
        let job_id = self.fresh_id('j');
        self.jobs.insert(
            job_id.clone(),
            JobRecord {
                job_id: job_id.clone(),
                kind,
                status: JobStatus::Queued,
                progress: 0.0,
                result_ref: None,
                error: None,
            },
        );
        job_id
    }

    /// Moves a job forward; backward moves and progress regressions are
    /// ignored.
    pub fn update_job(&mut self, id: &str, status: JobStatus, progress: f64) {
        if let Some(job) = self.jobs.get_mut(id) {
            if status >= job.status && job.status < JobStatus::Done {
                job.status = status;
                job.progress = job.progress.max(progress.clamp(0.0, 1.0));
            }
        }
    }

    pub fn finish_job(&mut self, id: &str, outcome: Result<String, String>) {
        let Some(job) = self.jobs.get_mut(id) else {
            return;
        };
        if job.status >= JobStatus::Done {
            return;
        }
        match outcome {
            Ok(result_ref) => {
                job.status = JobStatus::Done;
                job.progress = 1.0;
                job.result_ref = Some(result_ref);
            }
            Err(message) => {
                job.status = JobStatus::Failed;
                job.error = Some(message);
            }
        }
    }
}
