use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use ubr_core::agents::{run_policy, Agent, EvalReport, Policy};
use ubr_core::distill::{agreement, distill_policy, visited_states, DistillConfig, TreePolicy};
use ubr_core::env::make_env;
use ubr_core::harness::{export_results, run_sweep, running_average, train_run, SweepConfig};
use ubr_core::labelers::autolabel_traces;
use ubr_core::pipeline::{fit_label_tree, score_label_tree, TreeScores};
use ubr_core::shaping::ShapingConfig;
use ubr_core::tree::{
    deserialize_tree, edit_tree, enumerate_paths, export_dot, serialize_tree, DecisionTree, TreeEdit, TreeParams,
};
use ubr_core::types::{merge_labels, read_label_log, read_trace_log, write_label_log, write_text, write_trace_log};
use ubr_core::{EnvId, Label};

use crate::config::{pick, FileConfig};
use crate::{Cli, Command};

fn read_tree(path: &Path) -> anyhow::Result<DecisionTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize_tree(&text).with_context(|| format!("loading tree {}", path.display()))
}

fn write_tree(path: &Path, tree: &DecisionTree) -> anyhow::Result<()> {
    write_text(path, &serialize_tree(tree)?)?;
    Ok(())
}

fn load_agent(path: &Path) -> anyhow::Result<Agent> {
    Agent::load(path).with_context(|| format!("loading agent {}", path.display()))
}

/// The flag, else the config file, else what an input file implies.
fn resolve_env(flag: Option<EnvId>, file: &FileConfig, implied: Option<EnvId>) -> anyhow::Result<EnvId> {
    match (flag.or(file.env), implied) {
        (Some(a), Some(b)) if a != b => bail!("--env {a} does not match the input, which is for {b}"),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => bail!("no environment given: pass --env or set env in the config"),
    }
}

fn print_scores(name: &str, s: &TreeScores) {
    let ba = s
        .balanced_accuracy
        .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!("{name}: {} pairs, accuracy {:.4}, balanced accuracy {ba}", s.samples, s.accuracy);
}

fn print_eval(r: &EvalReport) {
    let ratio = r.undesirable_ratio.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} episodes: mean return {:.2} (std {:.2}), mean length {:.1}, undesirable ratio {ratio} ({} of {} steps)",
        r.episodes,
        r.mean_return,
        r.std_return,
        r.mean_length,
        r.behavior.undesirable,
        r.behavior.total()
    );
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let rules = file.label_rules();
    rules.validate()?;
    let env_config = file.env_config();
    match cli.command {
        Command::TrainBaseline {
            env,
            seed,
            episodes,
            tree,
            modifier,
            out,
            log,
        } => {
            let tree = tree.as_deref().map(read_tree).transpose()?;
            let env = resolve_env(env.env, &file, tree.as_ref().map(|t| t.features.env))?;
            let defaults = SweepConfig::for_env(env);
            let seed = pick(seed, file.seed, 0);
            let mut opts = defaults.train_options();
            opts.episodes = pick(episodes, file.episodes, defaults.episodes);
            opts.label_rules = rules;
            let shaping = match tree {
                Some(t) => Some(ShapingConfig::new(env, Arc::new(t), pick(modifier, file.modifier, 1.0))?),
                None => None,
            };
            let (agent, outcome) = train_run(env, &file.agent_for(env), &env_config, &opts, shaping, seed)?;
            agent.save(&out)?;
            let returns = outcome.log.raw_returns();
            let window = pick(None, file.window, defaults.window).min(returns.len()).max(1);
            let last = running_average(&returns, window).last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {env} for {} episodes ({} steps) in {:.1}s; final {window}-episode average return {last:.2}",
                returns.len(),
                outcome.log.total_steps,
                outcome.wall_time_secs
            );
            let b = outcome.log.behavior;
            println!("rule-labeled undesirable steps during training: {} of {}", b.undesirable, b.total());
            if let Some(tb) = outcome.log.tree_behavior {
                println!("tree-penalized steps: {} of {}", tb.undesirable, tb.total());
            }
            if let Some(path) = log {
                write_text(&path, &serde_json::to_string_pretty(&outcome.log)?)?;
            }
            println!("wrote {}", out.display());
        }

        Command::RecordTraces {
            env,
            agent,
            seed,
            episodes,
            out,
        } => {
            let agent = agent.as_deref().map(load_agent).transpose()?;
            let env = resolve_env(env.env, &file, agent.as_ref().map(|a| a.env))?;
            let defaults = SweepConfig::for_env(env);
            let seed = pick(seed, file.seed, 0);
            let traces = match agent {
                Some(agent) => {
                    let episodes = pick(episodes, file.episodes, defaults.eval_episodes);
                    let mut e = make_env(env, &env_config, seed);
                    let (report, traces) = run_policy(&agent, e.as_mut(), episodes, &rules, true)?;
                    print_eval(&report);
                    traces
                }
                None => {
                    let mut opts = defaults.train_options();
                    opts.episodes = pick(episodes, file.episodes, defaults.episodes);
                    opts.record_traces = true;
                    opts.label_rules = rules;
                    let (_, outcome) = train_run(env, &file.agent_for(env), &env_config, &opts, None, seed)?;
                    outcome.traces
                }
            };
            write_trace_log(&out, &traces)?;
            println!("wrote {} {env} transitions to {}", traces.len(), out.display());
        }

        Command::Autolabel { traces, merge, out } => {
            let traces = read_trace_log(&traces)?;
            let pairs = autolabel_traces(&traces, &rules)?;
            let undesirable = pairs.iter().filter(|p| p.label == Label::Undesirable).count();
            println!("labeled {} pairs: {undesirable} UNDESIRABLE, {} DESIRABLE", pairs.len(), pairs.len() - undesirable);
            let pairs = match merge {
                Some(path) => merge_labels(&read_label_log(&path)?, &pairs),
                None => pairs,
            };
            write_label_log(&out, &pairs)?;
            println!("wrote {} labels to {}", pairs.len(), out.display());
        }

        Command::TrainTree {
            labels,
            max_depth,
            min_samples_leaf,
            weights,
            holdout,
            seed,
            out,
            dot,
        } => {
            let pairs = read_label_log(&labels)?;
            let base = TreeParams::default();
            let params = TreeParams {
                max_depth: pick(max_depth, file.max_depth, base.max_depth),
                min_samples_leaf: pick(min_samples_leaf, file.min_samples_leaf, base.min_samples_leaf),
                class_weights: pick(weights, file.class_weights.clone(), base.class_weights),
            };
            let holdout = pick(holdout, file.holdout, 0.2);
            let (tree, report) = fit_label_tree(&pairs, &params, holdout, pick(seed, file.seed, 0))?;
            println!(
                "fit {} tree: {} nodes, depth {}, on {} UNDESIRABLE / {} DESIRABLE pairs",
                tree.features.env, report.node_count, report.depth, report.undesirable, report.desirable
            );
            print_scores("train", &report.train);
            if let Some(h) = &report.holdout {
                print_scores("holdout", h);
            }
            write_tree(&out, &tree)?;
            if let Some(path) = dot {
                write_text(&path, &export_dot(&tree))?;
            }
            println!("wrote {}", out.display());
        }

        Command::InspectTree {
            tree,
            depth_limit,
            labels,
            edits,
            out,
            dot,
        } => {
            let mut tree = read_tree(&tree)?;
            if let Some(path) = edits {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let edits: Vec<TreeEdit> =
                    serde_json::from_str(&text).with_context(|| format!("parsing edits {}", path.display()))?;
                for edit in &edits {
                    tree = edit_tree(&tree, edit)?;
                }
                let out: PathBuf = out.expect("clap requires --out with --edits");
                write_tree(&out, &tree)?;
                println!("applied {} edits; wrote {}", edits.len(), out.display());
            }
            let depth_limit = depth_limit.or(file.depth_limit);
            println!(
                "{} {:?} tree: {} nodes, {} leaves, depth {}",
                tree.features.env,
                tree.flavor,
                tree.node_count(),
                tree.leaf_count(),
                tree.depth()
            );
            for path in enumerate_paths(&tree, depth_limit) {
                println!("[{}] {path}", path.node_path);
            }
            if let Some(path) = labels {
                print_scores("labels", &score_label_tree(&tree, &read_label_log(&path)?)?);
            }
            if let Some(path) = dot {
                write_text(&path, &export_dot(&tree))?;
            }
        }

        Command::Sweep {
            env,
            tree,
            modifiers,
            seeds,
            episodes,
            eval_episodes,
            serial,
            out,
        } => {
            let tree = tree.as_deref().map(read_tree).transpose()?;
            let env = resolve_env(env.env, &file, tree.as_ref().map(|t| t.features.env))?;
            let d = SweepConfig::for_env(env);
            let cfg = SweepConfig {
                modifiers: pick(modifiers, file.modifiers.clone(), d.modifiers),
                seeds: seeds.or(file.seeds.clone()).map_or(d.seeds, |s| s.expand()),
                episodes: pick(episodes, file.episodes, d.episodes),
                eval_episodes: pick(eval_episodes, file.eval_episodes, d.eval_episodes),
                window: pick(None, file.window, d.window),
                tolerance: pick(None, file.tolerance, d.tolerance),
                agent: file.agent.clone(),
                env_config,
                label_rules: rules,
                parallel: !serial && file.parallel.unwrap_or(d.parallel),
                ..d
            };
            let result = run_sweep(&cfg, tree.map(Arc::new))?;
            println!("modifier  n  eval_reward        undesirable_ratio");
            for a in &result.aggregates {
                println!(
                    "{:<8}  {}  {:>9.2} ± {:<6.2}  {:.4} ± {:.4}",
                    a.modifier, a.n, a.eval_reward.0, a.eval_reward.1, a.undesirable_ratio.0, a.undesirable_ratio.1
                );
            }
            for c in result.cells.iter().filter(|c| c.error.is_some()) {
                println!("cell modifier {} seed {} failed: {}", c.modifier, c.seed, c.error.as_deref().unwrap_or(""));
            }
            match result.modifier_ratio_correlation() {
                Some(rho) => println!("Spearman(modifier, undesirable ratio) = {rho:.3}"),
                None => println!("Spearman(modifier, undesirable ratio) undefined"),
            }
            export_results(&result, &out)?;
            println!("wrote {}", out.display());
        }

        Command::Eval {
            agent,
            policy_tree,
            episodes,
            seed,
        } => {
            let policy: Box<dyn Policy> = match (agent, policy_tree) {
                (Some(path), _) => Box::new(load_agent(&path)?),
                (None, Some(path)) => Box::new(TreePolicy::new(read_tree(&path)?)?),
                (None, None) => bail!("pass --agent or --policy-tree"),
            };
            let env = policy.env();
            let episodes = pick(episodes, file.eval_episodes, SweepConfig::for_env(env).eval_episodes);
            let report =
                ubr_core::agents::evaluate_policy(policy.as_ref(), &env_config, episodes, pick(seed, file.seed, 0), &rules)?;
            print!("{env}: ");
            print_eval(&report);
        }

        Command::Distill {
            agent,
            max_depth,
            rounds,
            rollouts,
            seed,
            out,
        } => {
            let teacher = load_agent(&agent)?;
            let base = DistillConfig::default();
            let cfg = DistillConfig {
                rounds: pick(rounds, file.rounds, base.rounds),
                rollouts_per_round: pick(rollouts, file.rollouts, base.rollouts_per_round),
                params: TreeParams {
                    max_depth: pick(max_depth, file.max_depth, base.params.max_depth),
                    ..base.params
                },
            };
            let seed = pick(seed, file.seed, 0);
            let (tree, stats) = distill_policy(&teacher, &env_config, &cfg, seed)?;
            for s in &stats {
                println!(
                    "round {}: {} new states, {} total, train agreement {:.4}, {} nodes",
                    s.round, s.new_states, s.dataset_size, s.train_agreement, s.node_count
                );
            }
            let states = visited_states(&teacher, &env_config, 5000, seed + 1)?;
            let student = TreePolicy::new(tree.clone())?;
            println!("agreement with the agent on {} visited states: {:.4}", states.len(), agreement(&teacher, &student, &states));
            write_tree(&out, &tree)?;
            println!("wrote {}", out.display());
        }

        Command::Serve { host, port, data_dir } => {
            let host = pick(host, file.host.clone(), "127.0.0.1".to_string());
            let port = pick(port, file.port, 8080);
            let dir = pick(data_dir, file.data_dir.clone(), PathBuf::from("."));
            let addr = format!("{host}:{port}")
                .parse()
                .with_context(|| format!("bad listen address {host}:{port}"))?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let store = ubr_api::Store::open(&dir).with_context(|| format!("opening data directory {}", dir.display()))?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(ubr_api::serve(ubr_api::AppState::new(store), addr))?;
        }
    }
    Ok(())
}
