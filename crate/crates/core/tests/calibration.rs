mod oracle;

use dimee::synth::{self, benchmark_costs, benchmark_deployment, default_scenario};
use dimee::{
    calibrate_threshold, empirical_expected_reward, threshold_grid, CostField, CostModel, DeploymentConfig, TraceSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 50 samples over 6 layers whose confidences climb from chance at a
/// random pace, so every grid value sends samples down all three branches.
fn fixture_50() -> TraceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples = (0..50)
        .map(|i| {
            let mut c = 0.5;
            let mut conf = Vec::new();
            let mut pred = Vec::new();
            for _ in 0..6 {
                c = (c + rng.random_range(0.0..0.2_f64)).min(1.0);
                conf.push(c);
                pred.push(rng.random_range(0..2));
            }
            let emb = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            oracle::sample(&format!("f{i}"), emb, conf, pred, rng.random_range(0..2))
        })
        .collect();
    TraceSet::new(oracle::manifest(6, 2, 2), samples).unwrap()
}

#[test]
fn fixture_rewards_match_hand_enumeration() {
    let set = fixture_50();
    let cfg = DeploymentConfig::new(2, 4, 6).unwrap();
    let costs = CostModel::default_costs(0.03).unwrap();
    for a in oracle::grid(2) {
        let lib = empirical_expected_reward(&set, a, &cfg, &costs).unwrap();
        let naive = oracle::expected_reward(&set, a, 2, 4, &costs);
        assert!((lib - naive).abs() <= 1e-12, "alpha {a}: {lib} vs {naive}");
    }
}

#[test]
fn fixture_branches_cover_all_devices() {
    let set = fixture_50();
    let mut seen = [false; 3];
    for t in &set.samples {
        seen[oracle::cascade(t, 0.8, 2, 4).0] = true;
    }
    assert_eq!(seen, [true; 3]);
}

#[test]
fn identical_layer_one_exits_tie_to_smallest_alpha() {
    let samples = (0..5)
        .map(|i| oracle::sample(&format!("s{i}"), vec![0.0], vec![0.99; 4], vec![1; 4], 1))
        .collect();
    let set = TraceSet::new(oracle::manifest(4, 2, 1), samples).unwrap();
    let cfg = DeploymentConfig::new(1, 2, 4).unwrap();
    let costs = CostModel::default_costs(1e-6).unwrap();
    let report = calibrate_threshold(&set, &threshold_grid(2).unwrap(), &cfg, &costs).unwrap();
    assert_eq!(report.alpha_star, 0.5);
}

#[test]
fn dominant_cloud_reward_selects_one() {
    let samples = (0..8)
        .map(|i| {
            let early = 0.5 + 0.07 * i as f64;
            oracle::sample(&format!("s{i}"), vec![i as f64], vec![early, early, early, early, 1.0], vec![0; 5], 0)
        })
        .collect();
    let set = TraceSet::new(oracle::manifest(5, 2, 1), samples).unwrap();
    let cfg = DeploymentConfig::new(2, 4, 5).unwrap();
    let costs = CostModel {
        lambda_mobile: 0.2,
        lambda_edge: 0.2,
        offload_edge: 0.3,
        offload_cloud: 0.0,
        cloud_charge: 0.0,
    };
    let report = calibrate_threshold(&set, &threshold_grid(2).unwrap(), &cfg, &costs).unwrap();
    let (oracle_alpha, oracle_rewards) = oracle::calibrate(&set, 2, 4, &costs);
    assert_eq!(report.alpha_star, 1.0);
    assert_eq!(oracle_alpha, 1.0);
    for (a, b) in report.expected_reward.iter().zip(&oracle_rewards) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn two_hundred_samples_match_exhaustive_reevaluation() {
    let config = synth::ScenarioConfig {
        num_samples: 200,
        ..default_scenario()
    };
    let set = synth::generate(&config).unwrap();
    let cfg = benchmark_deployment();
    for costs in [CostModel::default_costs(0.02).unwrap(), benchmark_costs()] {
        let report = calibrate_threshold(&set, &threshold_grid(2).unwrap(), &cfg, &costs).unwrap();
        let (alpha, rewards) = oracle::calibrate(&set, cfg.m, cfg.n, &costs);
        assert_eq!(report.alpha_star, alpha);
        assert_eq!(report.grid, oracle::grid(2));
        for (a, b) in report.expected_reward.iter().zip(&rewards) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn raising_cloud_offload_never_raises_threshold() {
    let set = synth::generate(&default_scenario()).unwrap();
    let cfg = benchmark_deployment();
    let grid = threshold_grid(2).unwrap();
    let base = benchmark_costs();
    let mut last = f64::INFINITY;
    for k in 0..12 {
        let costs = base.with(CostField::OffloadCloud, 0.05 * k as f64);
        let report = calibrate_threshold(&set, &grid, &cfg, &costs).unwrap();
        assert_eq!(report.alpha_star, oracle::calibrate(&set, cfg.m, cfg.n, &costs).0);
        assert!(report.alpha_star <= last, "o_c step {k}: {} after {last}", report.alpha_star);
        last = report.alpha_star;
    }
    assert!(last < 1.0);
}
