use demabar::adversary::{Scope, Trigger};
use demabar::config::{AlgorithmName, ByzantineKind, CorruptionAttack, ExperimentConfig, ThreatModel};
use demabar::engine::{run_experiment, run_trial, run_trial_with, RoundLog, TrialOptions};
use demabar::environment::InstanceSpec;
use demabar::metrics::{comm_cost, pseudo_regret};
use demabar::scalar::Tolerance;
use demabar::topology::GraphSpec;

fn base(topology: GraphSpec, name: AlgorithmName, horizon: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(topology, InstanceSpec::gaussian(5, 0.05), horizon);
    cfg.algorithm.name = name;
    cfg.seed = 99;
    cfg
}

fn corruption(budget: f64, agents: Option<Vec<usize>>, scope: Scope) -> ThreatModel {
    ThreatModel::Corruption {
        budget,
        agents,
        fraction: None,
        attack: CorruptionAttack::Targeted,
        trigger: Trigger::Always,
        scope,
    }
}

fn chords() -> GraphSpec {
    let mut edges: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
    edges.extend((1..5).map(|i| (i, i + 5)));
    GraphSpec::Edges { nodes: 10, edges }
}

#[test]
fn jobs_do_not_change_results() {
    let mut cfg = base(GraphSpec::Complete { nodes: 6 }, AlgorithmName::Demabar, 3000);
    cfg.trials = 6;
    cfg.threat = corruption(50.0, None, Scope::Support);
    let one = run_experiment::<f64>(&cfg, Some(1)).unwrap();
    let many = run_experiment::<f64>(&cfg, Some(4)).unwrap();
    assert_eq!(one, many);
}

#[test]
fn agent_order_does_not_matter() {
    let mut configs = Vec::new();
    let mut c = base(GraphSpec::Complete { nodes: 6 }, AlgorithmName::Demabar, 2500);
    c.threat = corruption(40.0, Some(vec![1, 4]), Scope::Support);
    configs.push(c);
    let mut c = base(chords(), AlgorithmName::Demabar, 2500);
    c.threat = ThreatModel::byzantine(vec![0, 5], ByzantineKind::Gaussian);
    configs.push(c);
    let mut c = base(GraphSpec::Ring { nodes: 6 }, AlgorithmName::IndUcb, 2500);
    c.threat = corruption(40.0, None, Scope::Row);
    configs.push(c);
    for cfg in configs {
        let reference: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
        let v = reference.agents;
        let reversed: Vec<usize> = (0..v).rev().collect();
        let shuffled: Vec<usize> = (0..v).map(|i| (i * 7 + 3) % v).collect();
        for order in [reversed, shuffled] {
            let opts = TrialOptions { agent_order: Some(order.clone()) };
            let log: RoundLog<f64> = run_trial_with(&cfg, 0, &opts).unwrap();
            assert_eq!(log, reference, "order {order:?}");
        }
    }
}

#[test]
fn harmless_adversary_is_bit_identical_to_clean() {
    let clean_cfg = base(GraphSpec::Ring { nodes: 5 }, AlgorithmName::Demabar, 3000);
    let clean: RoundLog<f64> = run_trial(&clean_cfg, 1).unwrap();
    for threat in [corruption(0.0, None, Scope::Row), corruption(100.0, Some(vec![]), Scope::Row)] {
        let mut cfg = clean_cfg.clone();
        cfg.threat = threat;
        let log: RoundLog<f64> = run_trial(&cfg, 1).unwrap();
        assert_eq!(log, clean);
    }
}

#[test]
fn corruption_ledger_matches_log() {
    for scope in [Scope::Row, Scope::Support] {
        let mut cfg = base(GraphSpec::Complete { nodes: 4 }, AlgorithmName::Demabar, 4000);
        cfg.instance = InstanceSpec::gaussian(4, 0.01).with_means(vec![0.9, 0.7, 0.4, 0.2]);
        cfg.threat = corruption(37.5, Some(vec![0, 3]), scope);
        let log: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
        let recomputed: f64 = log.corruption.iter().sum();
        assert!(log.corruption_spent <= 37.5);
        assert!(log.corruption_spent > 37.5 - 1e-9, "budget should be exhausted: {}", log.corruption_spent);
        assert!((recomputed - log.corruption_spent).abs() < 1e-9);
        for t in 1..=4000 {
            assert_eq!(log.corruption(t, 1), 0.0);
            assert_eq!(log.corruption(t, 2), 0.0);
        }
        assert!(log.violations.is_empty());
    }
}

#[test]
fn byzantine_mode_leaves_ledger_untouched() {
    let mut cfg = base(chords(), AlgorithmName::Demabar, 5000);
    cfg.trials = 2;
    cfg.threat = ThreatModel::byzantine(vec![0, 5], ByzantineKind::Adaptive);
    let log: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
    assert_eq!(log.corruption_spent, 0.0);
    assert!(log.corruption.iter().all(|&c| c == 0.0));
    assert_eq!(log.normal_agents(), vec![1, 2, 3, 4, 6, 7, 8, 9]);
    assert!(log.violations.is_empty(), "{:?}", log.violations);
    for rec in log.epochs.iter().filter(|e| e.completed) {
        assert!(rec.gaps[0].is_empty() && rec.gaps[5].is_empty());
        assert_eq!(rec.fallback[0], None);
    }

    let res = run_experiment::<f64>(&cfg, Some(2)).unwrap();
    assert!(res.per_agent[0].is_none() && res.per_agent[5].is_none());
    // The all-agent average only covers the eight normal agents.
    let t0 = &res.trials[0];
    let manual: f64 = t0.agent_curves.iter().flatten().map(|c| c[4999]).sum::<f64>() / 8.0;
    assert!((t0.average[4999] - manual).abs() < 1e-9);
}

#[test]
fn gaussian_byzantine_run_is_healthy() {
    let mut cfg = base(chords(), AlgorithmName::Demabar, 6000);
    cfg.threat = ThreatModel::Byzantine {
        agents: vec![0, 5],
        attack: ByzantineKind::Gaussian,
        noise_scale: 0.001,
        noise: demabar::adversary::NoiseParam::Std,
        biases: Some(vec![vec![0.9; 5], vec![0.1; 5]]),
    };
    let log: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
    assert!(log.violations.is_empty());
    assert!(log.completed_epochs() >= 1);
}

#[test]
fn one_node_demabar_equals_ind_barbar() {
    for seed in 0..5 {
        let mut a = base(GraphSpec::Complete { nodes: 1 }, AlgorithmName::Demabar, 5000);
        a.seed = seed;
        a.algorithm.alpha = Tolerance::ZERO;
        a.algorithm.w = 0;
        let mut b = a.clone();
        b.algorithm.name = AlgorithmName::IndBarbar;
        assert_eq!(run_trial::<f64>(&a, 0).unwrap(), run_trial::<f64>(&b, 0).unwrap());
    }
}

#[test]
fn multi_hop_synchrony_and_cost() {
    let mut cfg = base(GraphSpec::Path { nodes: 7 }, AlgorithmName::Demabar, 30_000);
    cfg.algorithm.w = 3;
    cfg.algorithm.alpha = Tolerance::new(1, 5).unwrap();
    let log: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
    assert!(log.violations.is_empty(), "{:?}", log.violations);
    let m = log.completed_epochs() as u64;
    assert!(m >= 2);
    assert_eq!(comm_cost(&log), 7 * m * 3);
    // consecutive epochs tile the horizon
    for pair in log.epochs.windows(2) {
        assert_eq!(pair[1].start, pair[0].end + 1);
    }
    assert_eq!(log.epochs[0].start, 1);
}

#[test]
fn ind_barbar_regret_is_sublinear_on_long_runs() {
    let mut cfg = base(GraphSpec::Complete { nodes: 1 }, AlgorithmName::IndBarbar, 200_000);
    cfg.instance = InstanceSpec::gaussian(2, 0.01).with_means(vec![0.8, 0.2]);
    cfg.algorithm.w = 0;
    cfg.algorithm.lambda = demabar::demabar::LambdaRule::Fixed(5.0);
    let log: RoundLog<f64> = run_trial(&cfg, 0).unwrap();
    let half = pseudo_regret(&log, 0, 100_000);
    let full = pseudo_regret(&log, 0, 200_000);
    assert!(full < 1.6 * half, "{full} vs {half}");
}

#[test]
fn f32_runs_cleanly() {
    let mut cfg = base(GraphSpec::Complete { nodes: 5 }, AlgorithmName::Demabar, 5000);
    cfg.threat = corruption(20.0, None, Scope::Support);
    let log: RoundLog<f32> = run_trial(&cfg, 0).unwrap();
    assert!(log.violations.is_empty(), "{:?}", log.violations);
    assert!(log.corruption_spent <= 20.0);
}

fn final_standard_error(trials: usize) -> f64 {
    let mut cfg = base(GraphSpec::Complete { nodes: 3 }, AlgorithmName::IndUcb, 1000);
    cfg.trials = trials;
    let res = run_experiment::<f64>(&cfg, None).unwrap();
    *res.average.standard_error().last().unwrap()
}

#[test]
fn standard_error_shrinks_with_root_n() {
    let se100 = final_standard_error(100);
    let se200 = final_standard_error(200);
    let se400 = final_standard_error(400);
    let halving = se100 / se400;
    assert!((halving - 2.0).abs() <= 0.4, "quadrupling trials: ratio {halving}");
    let doubling = se100 / se200;
    assert!((doubling - 2f64.sqrt()).abs() <= 0.2 * 2f64.sqrt(), "doubling trials: ratio {doubling}");
}
