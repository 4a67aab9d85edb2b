//! `ubr`: train baselines, record and label traces, fit and inspect label
//! trees, run modifier sweeps, distill policies and serve the API.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ubr_core::tree::ClassWeights;
use ubr_core::EnvId;

use config::{parse_seeds, parse_weights, Seeds};

#[derive(Parser)]
#[command(name = "ubr", version, about = "Reduce undesirable agent behavior with decision-tree reward shaping")]
struct Cli {
    /// TOML file with defaults for any flag; flags win over the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EnvArg {
    /// snake, traffic or congestion.
    #[arg(long)]
    env: Option<EnvId>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and save its checkpoint. With --tree it trains a
    /// shaped (UBR) agent.
    TrainBaseline {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Label tree that shapes the reward.
        #[arg(long, requires = "modifier")]
        tree: Option<PathBuf>,
        #[arg(long)]
        modifier: Option<f64>,
        #[arg(long, default_value = "agent.json")]
        out: PathBuf,
        /// Per-episode training log as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Record transitions: greedy rollouts of --agent, or the training run
    /// of a fresh baseline.
    RecordTraces {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "traces.ndjson")]
        out: PathBuf,
    },
    /// Label every recorded pair with the environment's rule.
    Autolabel {
        #[arg(long)]
        traces: PathBuf,
        /// Existing labels to merge into; their MANUAL labels are kept.
        #[arg(long)]
        merge: Option<PathBuf>,
        #[arg(long, default_value = "labels.ndjson")]
        out: PathBuf,
    },
    /// Fit a label tree on grammar features.
    TrainTree {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_samples_leaf: Option<usize>,
        /// balanced or uniform.
        #[arg(long, value_parser = parse_weights)]
        weights: Option<ClassWeights>,
        /// Fraction of pairs held out for scoring.
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "tree.json")]
        out: PathBuf,
        /// Also write a Graphviz rendering.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Print a tree's paths, optionally editing and scoring it.
    InspectTree {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        depth_limit: Option<usize>,
        /// Labels to score the tree against.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// JSON list of edits to apply before printing.
        #[arg(long, requires = "out")]
        edits: Option<PathBuf>,
        /// Where to write the edited tree.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Train and evaluate shaped agents for each (modifier, seed) cell.
    Sweep {
        #[command(flatten)]
        env: EnvArg,
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Comma-separated; must include 1.
        #[arg(long, value_delimiter = ',')]
        modifiers: Option<Vec<f64>>,
        /// A count (`4` means 0..4) or a comma-separated list.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Seeds>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        eval_episodes: Option<usize>,
        /// Run cells one at a time.
        #[arg(long)]
        serial: bool,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Greedy evaluation of an agent or a distilled policy tree.
    Eval {
        #[arg(long, required_unless_present = "policy_tree", conflicts_with = "policy_tree")]
        agent: Option<PathBuf>,
        #[arg(long)]
        policy_tree: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Distill an agent into a policy tree by dataset aggregation.
    Distill {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "policy_tree.json")]
        out: PathBuf,
    },
    /// Serve the HTTP API over a data directory.
    Serve {
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
