mod common;

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use ubr_core::agents::{
    select_action, train_agent, Agent, AgentConfig, ConstantPolicy, EpsilonSchedule, Mlp, NeuralConfig, Policy,
    TabularConfig, TabularQ, TrainOptions,
};
use ubr_core::env::{make_env, rng_for, EnvConfig};
use ubr_core::grammar::instantiate_grammar;
use ubr_core::labelers::LabelRuleConfig;
use ubr_core::shaping::{ShapingConfig, ShapingHook};
use ubr_core::tree::DecisionTree;
use ubr_core::{EnvId, Label};

#[test]
fn tabular_converges_on_a_two_state_chain() {
    // State 0: action 0 pays 1 and moves to state 1; action 1 pays 0 and
    // ends. State 1: action 0 pays 2 and ends; action 1 pays 0 and returns
    // to state 0.
    let gamma = 0.9;
    let mut q = TabularQ::new(
        TabularConfig {
            alpha: 0.2,
            alpha_half_visits: None,
            gamma,
            epsilon: EpsilonSchedule::constant(1.0),
        },
        1,
        2,
    )
    .unwrap();
    let mut rng = rng_for(0, 0);
    let mut s = 0u64;
    for _ in 0..20_000 {
        let a = rng.random_range(0..2);
        let (r, s2, terminal) = match (s, a) {
            (0, 0) => (1.0, 1, false),
            (0, _) => (0.0, 0, true),
            (_, 0) => (2.0, 0, true),
            _ => (0.0, 0, false),
        };
        q.q_update(s, a, r, s2, None, terminal);
        s = if terminal { 0 } else { s2 };
    }
    // Cycling beats the payout: V0 = 1 + g * V1 and V1 = g * V0, so
    // V0 = 1 / (1 - g^2).
    let v0 = 1.0 / (1.0 - gamma * gamma);
    assert!(gamma * v0 > 2.0);
    let want = [[v0, 0.0], [2.0, gamma * v0]];
    for s in 0..2u64 {
        let got = q.values(s);
        for a in 0..2 {
            assert!((got[a] - want[s as usize][a]).abs() < 1e-3, "Q({s},{a}) = {}", got[a]);
        }
    }
}

#[test]
fn decaying_step_counts_visits() {
    let mut q = TabularQ::new(TabularConfig::default(), 4, 2).unwrap();
    for _ in 0..3 {
        q.q_update(5, 1, 1.0, 5, None, true);
    }
    assert_eq!(q.visits[&5], vec![0, 3]);
    // alpha * h / (h + n) for n = 0, 1, 2.
    let h = 1000.0;
    let mut v = 0.0;
    for n in 0..3 {
        v += 0.1 * h / (h + n as f64) * (1.0 - v);
    }
    assert!((q.values(5)[1] - v).abs() < 1e-12);
}

#[test]
fn full_exploration_is_uniform_over_allowed_actions() {
    let mut rng = rng_for(1, 0);
    let q = [5.0, 0.0, 0.0, 0.0];
    let n = 30_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[select_action(&q, 1.0, Some(2), &mut rng)] += 1;
    }
    assert_eq!(counts[2], 0);
    let expect = n as f64 / 3.0;
    let chi2: f64 = [0, 1, 3]
        .iter()
        .map(|&a| (counts[a] as f64 - expect).powi(2) / expect)
        .sum();
    // 2 degrees of freedom, p = 0.001.
    assert!(chi2 < 13.8, "chi2 {chi2}, counts {counts:?}");
    assert_eq!(select_action(&q, 0.0, Some(0), &mut rng), 1);
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = rng_for(3, 0);
    let mut net = Mlp::new(&[4, 3, 2], &mut rng);
    // Move biases off zero so no ReLU sits on its kink.
    let p: Vec<f64> = net.params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    net.set_params(&p);
    let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..5).map(|_| rng.random_range(0..2)).collect();
    let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (loss, grads) = net.loss_and_gradient(x.view(), &actions, &targets);
    assert!((loss - net.loss(x.view(), &actions, &targets)).abs() < 1e-12);
    let analytic = grads.flatten();
    let f = |params: &[f64]| {
        let mut n = net.clone();
        n.set_params(params);
        n.loss(x.view(), &actions, &targets)
    };
    for i in 0..p.len() {
        let numeric = common::numeric_partial(f, &p, i, 1e-6);
        let tol = 1e-6 * (1.0 + numeric.abs());
        assert!((analytic[i] - numeric).abs() < tol, "param {i}: {} vs {numeric}", analytic[i]);
    }
}

fn tiny_neural() -> AgentConfig {
    AgentConfig::Neural(NeuralConfig {
        hidden: vec![16],
        min_replay: 64,
        batch_size: 16,
        target_sync: 100,
        reward_scale: 1e-3,
        epsilon: EpsilonSchedule {
            decay_steps: 500,
            ..EpsilonSchedule::default()
        },
        ..NeuralConfig::default()
    })
}

fn run(env: EnvId, cfg: &AgentConfig, episodes: usize, hook: Option<ShapingHook>) -> (Agent, Vec<f64>) {
    let mut e = make_env(env, &EnvConfig::default(), 9);
    let mut agent = Agent::new(env, cfg.clone(), 9).unwrap();
    let mut hook = hook;
    let opts = TrainOptions {
        episodes,
        ..TrainOptions::default()
    };
    let out = train_agent(e.as_mut(), &mut agent, &opts, hook.as_mut(), 9).unwrap();
    (agent, out.log.raw_returns())
}

#[test]
fn training_is_deterministic_per_seed() {
    for (env, cfg, episodes) in [
        (EnvId::Snake, AgentConfig::default_for(EnvId::Snake), 50),
        (EnvId::Congestion, tiny_neural(), 3),
    ] {
        let (a, ra) = run(env, &cfg, episodes, None);
        let (b, rb) = run(env, &cfg, episodes, None);
        assert_eq!(ra, rb, "{env}");
        assert_eq!(a.checkpoint(), b.checkpoint(), "{env}");
    }
}

#[test]
fn unit_modifier_hook_changes_nothing() {
    let env = EnvId::Snake;
    let tree = Arc::new(DecisionTree::constant(instantiate_grammar(env), Label::Undesirable));
    let hook = ShapingHook::new(ShapingConfig::new(env, tree, 1.0).unwrap());
    let cfg = AgentConfig::default_for(env);
    let (a, ra) = run(env, &cfg, 80, None);
    let (b, rb) = run(env, &cfg, 80, Some(hook));
    assert_eq!(ra, rb);
    assert_eq!(a.checkpoint(), b.checkpoint());
}

#[test]
fn penalized_hook_tracks_counts_and_shapes_rewards() {
    let env = EnvId::Traffic;
    let tree = Arc::new(DecisionTree::constant(instantiate_grammar(env), Label::Undesirable));
    let mut hook = ShapingHook::new(ShapingConfig::new(env, Arc::clone(&tree), 0.5).unwrap());
    let mut e = make_env(env, &EnvConfig::default(), 0);
    let mut agent = Agent::new(env, tiny_neural(), 0).unwrap();
    let opts = TrainOptions {
        episodes: 1,
        record_traces: true,
        ..TrainOptions::default()
    };
    let out = train_agent(e.as_mut(), &mut agent, &opts, Some(&mut hook), 0).unwrap();
    assert_eq!(hook.counts().undesirable, out.log.total_steps);
    for t in &out.traces {
        let want = if t.reward_raw >= 0.0 { t.reward_raw * 0.5 } else { t.reward_raw * 2.0 };
        assert_eq!(t.reward_shaped, want);
    }
    assert!(ShapingConfig::new(EnvId::Snake, tree, 0.5).is_err());
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (env, cfg, episodes) in [
        (EnvId::Snake, AgentConfig::default_for(EnvId::Snake), 30),
        (EnvId::Congestion, tiny_neural(), 2),
    ] {
        let (a, _) = run(env, &cfg, episodes, None);
        let path = dir.path().join(format!("{env}.json"));
        a.save(&path).unwrap();
        let b = Agent::load(&path).unwrap();
        assert_eq!(a.checkpoint(), b.checkpoint());
        let mut e = make_env(env, &EnvConfig::default(), 1);
        let s = e.reset();
        assert_eq!(a.q_values(&s), b.q_values(&s));
    }
}

#[test]
fn tabular_snake_beats_a_fixed_policy() {
    let env = EnvId::Snake;
    let (agent, returns) = run(env, &AgentConfig::default_for(env), 1500, None);
    let rules = LabelRuleConfig::default();
    let env_cfg = EnvConfig::default();
    let learned = ubr_core::agents::evaluate_policy(&agent, &env_cfg, 30, 0, &rules).unwrap();
    let fixed = ConstantPolicy { env, action: 0 };
    let baseline = ubr_core::agents::evaluate_policy(&fixed, &env_cfg, 30, 0, &rules).unwrap();
    assert!(learned.mean_return > baseline.mean_return + 20.0, "{learned:?} vs {baseline:?}");
    let early: f64 = returns[..100].iter().sum::<f64>() / 100.0;
    let late: f64 = returns[returns.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(late > early, "{early} -> {late}");
    assert_eq!(fixed.env(), env);
}
