//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test -p ubr-core --test acceptance`; pass criterion
//! names (`A3 A6`) after `--` to run a subset. Criteria share trained
//! trees, sweeps and teachers, which are built once on first use.

mod common;

use std::cell::OnceCell;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use ubr_core::agents::{evaluate_policy, Agent, AgentConfig, EvalReport};
use ubr_core::distill::{agreement, distill_policy, evaluate_tree_policy, visited_states, DistillConfig, TreePolicy};
use ubr_core::env::congestion::{LATENCY_GRADIENT, LATENCY_RATIO, SENDING_RATIO, WINDOW};
use ubr_core::env::snake::{Direction, APL, DIR};
use ubr_core::env::rng_for;
use ubr_core::grammar::FeatureSet;
use ubr_core::harness::{
    measure_overhead, ratio_reduction, read_results, run_sweep, train_run, write_results, ExperimentResult,
    SweepConfig,
};
use ubr_core::labelers::autolabel_traces;
use ubr_core::pipeline::{fit_label_tree, score_label_tree, LabelTreeReport};
use ubr_core::shaping::{modify_reward, ShapingConfig};
use ubr_core::tree::{
    best_split, deserialize_tree, serialize_tree, truncate_depth, ClassWeights, DecisionTree, TreeEdit, TreeParams,
};
use ubr_core::types::{read_label_log, read_trace_log, write_label_log, write_trace_log};
use ubr_core::{Action, EnvId, Label, LabeledPair};

/// Seed of the baseline run whose traces train each label tree.
const TRACE_SEED: u64 = 100;

fn tree_depth(env: EnvId) -> usize {
    match env {
        EnvId::Snake => 8,
        EnvId::Congestion => 9,
        EnvId::Traffic => 10,
    }
}

struct LabelTree {
    pairs: Vec<LabeledPair>,
    tree: Arc<DecisionTree>,
    report: LabelTreeReport,
}

/// Lazily built artifacts shared between criteria.
#[derive(Default)]
struct Shared {
    trees: [OnceCell<LabelTree>; 3],
    sweeps: [OnceCell<ExperimentResult>; 3],
}

fn slot(env: EnvId) -> usize {
    EnvId::ALL.iter().position(|&e| e == env).unwrap()
}

impl Shared {
    fn label_tree(&self, env: EnvId) -> &LabelTree {
        self.trees[slot(env)].get_or_init(|| {
            let cfg = SweepConfig::for_env(env);
            let mut opts = cfg.train_options();
            opts.record_traces = true;
            let (_, out) = train_run(env, &cfg.agent_config(), &cfg.env_config, &opts, None, TRACE_SEED).unwrap();
            let pairs = autolabel_traces(&out.traces, &cfg.label_rules).unwrap();
            let (tree, report) = fit_label_tree(&pairs, &TreeParams::with_depth(tree_depth(env)), 0.2, 0).unwrap();
            LabelTree {
                pairs,
                tree: Arc::new(tree),
                report,
            }
        })
    }

    fn sweep(&self, env: EnvId) -> &ExperimentResult {
        self.sweeps[slot(env)].get_or_init(|| {
            let tree = Arc::clone(&self.label_tree(env).tree);
            let started = Instant::now();
            let result = run_sweep(&SweepConfig::for_env(env), Some(tree)).unwrap();
            println!("   ({env} sweep: {} cells in {:.0}s)", result.cells.len(), started.elapsed().as_secs_f64());
            result
        })
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn ratio_at(result: &ExperimentResult, modifier: f64) -> f64 {
    result.aggregate_for(modifier).unwrap().undesirable_ratio.0
}

fn reward_at(result: &ExperimentResult, modifier: f64) -> f64 {
    result.aggregate_for(modifier).unwrap().eval_reward.0
}

fn reduction(result: &ExperimentResult, modifier: f64) -> f64 {
    ratio_reduction(ratio_at(result, 1.0), ratio_at(result, modifier)).unwrap_or(f64::NAN)
}

/// Shaped mean reward must not fall more than `tol` of |baseline| below it.
fn reward_kept(result: &ExperimentResult, modifier: f64, tol: f64) -> (bool, f64) {
    let (base, shaped) = (reward_at(result, 1.0), reward_at(result, modifier));
    let change = (shaped - base) / base.abs();
    (shaped >= base - tol * base.abs(), change)
}

fn a1(_: &Shared) -> Verdict {
    let mut rng = rng_for(1, 0);
    let mut bad = 0;
    for k in 0..10_000 {
        let r = match k % 4 {
            0 => 0.0,
            _ => rng.random_range(-1e3..1e3),
        };
        let m = if k % 7 == 0 { 1.0 } else { 1.0 - rng.random::<f64>() };
        let out = modify_reward(r, m).unwrap();
        let equal_expected = m == 1.0 || r == 0.0;
        if out > r || (out == r) != equal_expected {
            bad += 1;
        }
    }
    let examples = modify_reward(10.0, 0.1).unwrap() == 1.0 && modify_reward(-10.0, 0.1).unwrap() == -100.0;
    verdict(
        bad == 0 && examples,
        format!("10000 random cases, {bad} violations; (10,0.1)->1 and (-10,0.1)->-100 exact: {examples}"),
    )
}

fn snake_rule_pair() -> (Vec<f64>, Action) {
    let mut s = vec![0.0; 12];
    s[DIR + Direction::Up.index()] = 1.0;
    s[APL + Direction::Up.index()] = 1.0;
    (s, Action::discrete(Direction::Left.index()))
}

fn a2(sh: &Shared) -> Verdict {
    let lt = sh.label_tree(EnvId::Snake);
    let holdout = lt.report.holdout.as_ref().unwrap().balanced_accuracy.unwrap_or(0.0);
    let shallow = truncate_depth(&lt.tree, 3);
    let shallow_ba = score_label_tree(&shallow, &lt.pairs).unwrap().balanced_accuracy.unwrap_or(0.0);
    let (s, a) = snake_rule_pair();
    let probe = lt.tree.classify_pair_label(&s, &a) == Label::Undesirable;
    verdict(
        lt.pairs.len() >= 20_000 && lt.tree.depth() <= 8 && holdout >= 0.99 && shallow_ba >= 0.90 && probe,
        format!(
            "{} pairs ({} undesirable); depth {} holdout balanced acc {:.4} (>= 0.99); depth-3 subtree {:.4} (>= 0.90); rule pair UNDESIRABLE: {probe}",
            lt.pairs.len(),
            lt.report.undesirable,
            lt.tree.depth(),
            holdout,
            shallow_ba
        ),
    )
}

fn a3(sh: &Shared) -> Verdict {
    let r = sh.sweep(EnvId::Snake);
    let red = reduction(r, 0.1);
    let (kept, change) = reward_kept(r, 0.1, 0.05);
    verdict(
        red >= 0.70 && kept,
        format!(
            "ratio {:.4} -> {:.4}, reduction {:.1}% (>= 70%); eval reward {:.1} -> {:.1} ({:+.1}%, floor -5%)",
            ratio_at(r, 1.0),
            ratio_at(r, 0.1),
            100.0 * red,
            reward_at(r, 1.0),
            reward_at(r, 0.1),
            100.0 * change
        ),
    )
}

/// Random congestion states, half of them on a clean link where the rule
/// can fire.
fn random_congestion_state(rng: &mut impl Rng) -> Vec<f64> {
    let mut s = vec![0.0; EnvId::Congestion.state_dim()];
    let clean = rng.random_bool(0.5);
    for i in 0..WINDOW {
        s[LATENCY_GRADIENT + i] = rng.random_range(-1.0..1.0);
        s[LATENCY_RATIO + i] = rng.random_range(1.0..4.0);
        s[SENDING_RATIO + i] = if clean { rng.random_range(1.0..1.2) } else { rng.random_range(1.0..3.0) };
    }
    s
}

fn a4(sh: &Shared) -> Verdict {
    let r = sh.sweep(EnvId::Congestion);
    let red = reduction(r, 0.1);
    let tree = &sh.label_tree(EnvId::Congestion).tree;
    let mut rng = rng_for(4, 0);
    let desirable = (0..1000)
        .filter(|_| {
            let s = random_congestion_state(&mut rng);
            let bin = rng.random_range(5..9);
            tree.classify_pair_label(&s, &Action::rate_bin(bin)) == Label::Desirable
        })
        .count();
    verdict(
        red >= 0.40 && desirable == 1000,
        format!(
            "ratio {:.4} -> {:.4} (0.5: {:.4}), reduction {:.1}% (>= 40%); positive-action probe {desirable}/1000 DESIRABLE",
            ratio_at(r, 1.0),
            ratio_at(r, 0.1),
            ratio_at(r, 0.5),
            100.0 * red
        ),
    )
}

fn a5(sh: &Shared) -> Verdict {
    let r = sh.sweep(EnvId::Traffic);
    let red = reduction(r, 0.1);
    let (kept, change) = reward_kept(r, 0.1, 0.05);
    verdict(
        red >= 0.60 && kept,
        format!(
            "ratio {:.4} -> {:.4} (0.25: {:.4}), reduction {:.1}% (>= 60%); eval reward {:.1} -> {:.1} ({:+.1}%, floor -5%)",
            ratio_at(r, 1.0),
            ratio_at(r, 0.1),
            ratio_at(r, 0.25),
            100.0 * red,
            reward_at(r, 1.0),
            reward_at(r, 0.1),
            100.0 * change
        ),
    )
}

fn a6(sh: &Shared) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for env in EnvId::ALL {
        let rho = sh.sweep(env).modifier_ratio_correlation().unwrap_or(f64::NAN);
        pass &= rho >= 0.6;
        parts.push(format!("{env} {rho:.3}"));
    }
    verdict(pass, format!("Spearman(modifier, ratio) {} (each >= 0.6)", parts.join(", ")))
}

fn a7(_: &Shared) -> Verdict {
    let mut rng = rng_for(7, 1);
    let mut mismatches = 0;
    let mut checked = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=200);
        let d = rng.random_range(1..=10);
        let k = rng.random_range(2..=3);
        let levels = rng.random_range(2..12);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..levels) as f64 * 0.25);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let params = TreeParams {
            max_depth: 1,
            min_samples_leaf: 1 + case % 3,
            class_weights: if case % 2 == 0 { ClassWeights::Balanced } else { ClassWeights::Uniform },
        };
        let got = best_split(x.view(), &y, k, &params).unwrap();
        let want = common::brute_force_split(&x, &y, k, &params);
        let same = match (got, want) {
            (None, None) => true,
            (Some(s), Some((f, t, imp))) => s.feature == f && s.threshold == t && (s.impurity - imp).abs() < 1e-9,
            _ => false,
        };
        mismatches += usize::from(!same);
        checked += 1;
    }
    verdict(mismatches == 0, format!("{checked} datasets (<= 200 samples, <= 10 features), {mismatches} root-split mismatches"))
}

fn a8(_: &Shared) -> Verdict {
    let mut rng = rng_for(8, 0);
    let mut net = ubr_core::agents::Mlp::new(&[4, 3, 2], &mut rng);
    let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    net.set_params(&p);
    let x = Array2::from_shape_fn((8, 4), |_| rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..8).map(|_| rng.random_range(0..2)).collect();
    let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (_, grads) = net.loss_and_gradient(x.view(), &actions, &targets);
    let analytic = grads.flatten();
    let loss = |params: &[f64]| {
        let mut n = net.clone();
        n.set_params(params);
        n.loss(x.view(), &actions, &targets)
    };
    let worst = (0..p.len())
        .map(|i| {
            let num = common::numeric_partial(loss, &p, i, 1e-6);
            (analytic[i] - num).abs() / num.abs().max(analytic[i].abs()).max(1e-8)
        })
        .fold(0.0, f64::max);
    verdict(worst < 1e-4, format!("{} parameters, worst relative error {worst:.2e} (< 1e-4)", p.len()))
}

fn teacher(env: EnvId) -> (Agent, SweepConfig, EvalReport) {
    let cfg = SweepConfig::for_env(env);
    let (agent, _) = train_run(env, &cfg.agent_config(), &cfg.env_config, &cfg.train_options(), None, 0).unwrap();
    let eval = evaluate_policy(&agent, &cfg.env_config, cfg.eval_episodes, 0, &cfg.label_rules).unwrap();
    (agent, cfg, eval)
}

fn a9(sh: &Shared) -> Verdict {
    let (snake, cfg, _) = teacher(EnvId::Snake);
    let dc = DistillConfig {
        params: TreeParams {
            max_depth: 8,
            ..DistillConfig::default().params
        },
        ..DistillConfig::default()
    };
    let (student, _) = distill_policy(&snake, &cfg.env_config, &dc, 0).unwrap();
    let states = visited_states(&snake, &cfg.env_config, 5000, 1).unwrap();
    let agree = agreement(&snake, &TreePolicy::new(student).unwrap(), &states);

    let env = EnvId::Traffic;
    let (traffic, cfg, _) = teacher(env);
    let depth = tree_depth(env);
    let dc = DistillConfig {
        rollouts_per_round: 20,
        params: TreeParams {
            max_depth: depth,
            ..DistillConfig::default().params
        },
        ..DistillConfig::default()
    };
    let (student, _) = distill_policy(&traffic, &cfg.env_config, &dc, 0).unwrap();
    let distilled = evaluate_tree_policy(&student, &cfg.env_config, cfg.eval_episodes, 0, &cfg.label_rules).unwrap();
    let ubr_nodes = sh.label_tree(env).tree.node_count();
    let sweep = sh.sweep(env);
    let (base, ubr) = (ratio_at(sweep, 1.0), ratio_at(sweep, 0.1));
    let mid = distilled.eval.undesirable_ratio.unwrap_or(f64::NAN);
    let ordered = ubr < mid && mid < base;
    verdict(
        agree >= 0.9 && ubr_nodes < distilled.node_count && ordered,
        format!(
            "snake agreement {agree:.4} (>= 0.9); traffic depth {depth}: UBR tree {ubr_nodes} nodes < distilled {} nodes; ratio UBR {ubr:.4} < distilled {mid:.4} < baseline {base:.4}",
            distilled.node_count
        ),
    )
}

fn a10(sh: &Shared) -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    // A hook at modifier 1 must not change a single update.
    for env in EnvId::ALL {
        let cfg = SweepConfig::for_env(env);
        let opts = ubr_core::agents::TrainOptions {
            episodes: if env == EnvId::Snake { 300 } else { 3 },
            ..cfg.train_options()
        };
        let tree = Arc::clone(&sh.label_tree(env).tree);
        let shaping = ShapingConfig::new(env, tree, 1.0).unwrap();
        for seed in [0, 1] {
            let (a, ra) = train_run(env, &cfg.agent_config(), &cfg.env_config, &opts, None, seed).unwrap();
            let (b, rb) = train_run(env, &cfg.agent_config(), &cfg.env_config, &opts, Some(shaping.clone()), seed).unwrap();
            let same = ra.log.episodes == rb.log.episodes && a.checkpoint() == b.checkpoint();
            pass &= same;
            if !same {
                notes.push(format!("{env} seed {seed} diverged"));
            }
        }
    }
    notes.push("modifier-1 hook bit-identical on 3 envs x 2 seeds".into());

    let dir = tempfile::tempdir().unwrap();
    let mut formats = Vec::new();
    let mut check = |name: &str, ok: bool| {
        pass &= ok;
        formats.push(format!("{name} {}", if ok { "ok" } else { "FAILED" }));
    };
    let env = EnvId::Traffic;
    let cfg = SweepConfig::for_env(env);
    let opts = ubr_core::agents::TrainOptions {
        episodes: 2,
        record_traces: true,
        ..cfg.train_options()
    };
    let (agent, out) = train_run(env, &cfg.agent_config(), &cfg.env_config, &opts, None, 3).unwrap();
    let p = dir.path().join("traces.ndjson");
    write_trace_log(&p, &out.traces).unwrap();
    check("traces", read_trace_log(&p).unwrap() == out.traces);
    let labels = &sh.label_tree(env).pairs;
    let p = dir.path().join("labels.ndjson");
    write_label_log(&p, labels).unwrap();
    check("labels", &read_label_log(&p).unwrap() == labels);
    let tree = &sh.label_tree(env).tree;
    check("tree", deserialize_tree(&serialize_tree(tree).unwrap()).unwrap() == **tree);
    let mut buf = Vec::new();
    tree.features.write_lines(&mut buf).unwrap();
    check("features", FeatureSet::read_lines(buf.as_slice()).unwrap() == tree.features);
    let p = dir.path().join("agent.json");
    agent.save(&p).unwrap();
    check("agent", Agent::load(&p).unwrap().checkpoint() == agent.checkpoint());
    let snake = dir.path().join("snake.json");
    let (tab, _) = train_run(EnvId::Snake, &AgentConfig::default_for(EnvId::Snake), &cfg.env_config, &ubr_core::agents::TrainOptions { episodes: 50, ..Default::default() }, None, 0).unwrap();
    tab.save(&snake).unwrap();
    check("tabular agent", Agent::load(&snake).unwrap().checkpoint() == tab.checkpoint());
    let edit = TreeEdit::SetThreshold {
        path: "LR".parse().unwrap(),
        threshold: 0.25,
    };
    check("edit", serde_json::from_str::<TreeEdit>(&serde_json::to_string(&edit).unwrap()).unwrap() == edit);
    let result = sh.sweep(EnvId::Congestion);
    let mut buf = Vec::new();
    write_results(result, &mut buf).unwrap();
    check("results csv", read_results(buf.as_slice()).unwrap().cells == result.cells);
    notes.push(format!("round trips: {}", formats.join(", ")));
    verdict(pass, notes.join("; "))
}

fn a11(sh: &Shared) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for env in EnvId::ALL {
        let cfg = SweepConfig::for_env(env);
        let opts = ubr_core::agents::TrainOptions {
            episodes: if env == EnvId::Snake { 1000 } else { 10 },
            ..cfg.train_options()
        };
        let tree = Arc::clone(&sh.label_tree(env).tree);
        let r = measure_overhead(env, &cfg.agent_config(), &cfg.env_config, tree, &opts, 0, 3).unwrap();
        let ok = r.tree_nodes > 1 && r.overhead >= 0.0 && r.overhead.is_finite();
        pass &= ok;
        parts.push(format!(
            "{env} {:.2}% ({} nodes, wall-clock {:+.1}%)",
            100.0 * r.overhead,
            r.tree_nodes,
            100.0 * r.wall_overhead
        ));
    }
    verdict(pass, format!("shaping overhead {} (reported, each >= 0)", parts.join(", ")))
}

type Criterion = (&'static str, &'static str, fn(&Shared) -> Verdict);

const CRITERIA: [Criterion; 11] = [
    ("A1", "reward-modifier algebra", a1),
    ("A2", "snake tree quality", a2),
    ("A3", "snake reduction", a3),
    ("A4", "congestion reduction", a4),
    ("A5", "traffic reduction", a5),
    ("A6", "modifier monotonicity", a6),
    ("A7", "CART oracle", a7),
    ("A8", "gradient check", a8),
    ("A9", "distillation comparison", a9),
    ("A10", "determinism and identity", a10),
    ("A11", "overhead report", a11),
];

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let shared = Shared::default();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run) in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| f.eq_ignore_ascii_case(id)) {
            continue;
        }
        let started = Instant::now();
        let v = run(&shared);
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{id} {status} {name}: {} [{:.1}s]", v.detail, started.elapsed().as_secs_f64());
        ran += 1;
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
