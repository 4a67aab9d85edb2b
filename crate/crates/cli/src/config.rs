//! The optional TOML config. Every key is optional; a flag given on the
//! command line beats the file, and the file beats built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;
use ubr_core::agents::AgentConfig;
use ubr_core::env::EnvConfig;
use ubr_core::labelers::LabelRuleConfig;
use ubr_core::tree::ClassWeights;
use ubr_core::EnvId;

/// A seed list, or a count `n` meaning seeds `0..n`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// `4` is a count, `0,2,5` a list.
pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}"));
    if s.contains(',') {
        s.split(',').map(parse).collect::<Result<_, _>>().map(Seeds::List)
    } else {
        parse(s).map(Seeds::Count)
    }
}

pub fn parse_weights(s: &str) -> Result<ClassWeights, String> {
    match s {
        "balanced" => Ok(ClassWeights::Balanced),
        "uniform" => Ok(ClassWeights::Uniform),
        _ => Err(format!("class weights must be balanced or uniform, got {s:?}")),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<EnvId>,
    pub seed: Option<u64>,
    pub episodes: Option<usize>,
    pub eval_episodes: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub class_weights: Option<ClassWeights>,
    pub holdout: Option<f64>,
    pub depth_limit: Option<usize>,
    pub modifier: Option<f64>,
    pub modifiers: Option<Vec<f64>>,
    pub seeds: Option<Seeds>,
    pub window: Option<usize>,
    pub tolerance: Option<f64>,
    pub parallel: Option<bool>,
    pub rounds: Option<usize>,
    pub rollouts: Option<usize>,
    pub host: Option<String>,
    pub port: Option<u16>,
    pub data_dir: Option<PathBuf>,
    pub agent: Option<AgentConfig>,
    pub env_config: Option<EnvConfig>,
    pub label_rules: Option<LabelRuleConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn env_config(&self) -> EnvConfig {
        self.env_config.clone().unwrap_or_default()
    }

    pub fn label_rules(&self) -> LabelRuleConfig {
        self.label_rules.clone().unwrap_or_default()
    }

    pub fn agent_for(&self, env: EnvId) -> AgentConfig {
        self.agent.clone().unwrap_or_else(|| AgentConfig::default_for(env))
    }
}

/// Flag, then file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
