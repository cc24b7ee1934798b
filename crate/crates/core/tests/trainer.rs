mod common;

use common::{finite_difference, gae_oracle, max_relative_error, model};
use entroseed::entropy::Execution;
use entroseed::initializer::{entropy_aware_init, InitConfig};
use entroseed::rng::mix;
use entroseed::trainer::{
    collect_batch, gae_advantages, ppo_loss_and_gradient, ppo_ratios, reinforce_gradient,
    reinforce_objective, train, Algo, PpoCoefficients, Sample, TrainConfig,
};
use proptest::prelude::*;

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_experiences: 256,
        workers: 4,
        ..TrainConfig::default()
    }
}

proptest! {
    #[test]
    fn gae_matches_double_sum(
        steps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, prop::bool::weighted(0.2)), 1..40),
        bootstrap in -1.0f64..1.0,
        gamma in 0.5f64..1.0,
        lambda in 0.0f64..1.0,
    ) {
        let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let mut values: Vec<f64> = steps.iter().map(|s| s.1).collect();
        values.push(bootstrap);
        let dones: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let fast = gae_advantages(&rewards, &values, &dones, gamma, lambda).unwrap();
        let slow = gae_oracle(&rewards, &values, &dones, gamma, lambda);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn ratios_are_one_right_after_collection() {
    for env in ["gridworld-4", "catch-5x7"] {
        let m = model(env, 3, 1.5, 8.0);
        let batch = collect_batch(&m, env, &small_config(), 9, 0, Execution::Parallel).unwrap();
        assert_eq!(batch.samples.len(), 256);
        for r in ppo_ratios(&m, &batch.samples).unwrap() {
            assert!((r - 1.0).abs() <= 1e-12);
        }
    }
}

fn frozen_batch(env: &str, seed: u64, n: usize) -> (entroseed::policy::PolicyModel, Vec<Sample>) {
    let m = model(env, seed, 1.2, 2.0);
    let cfg = TrainConfig {
        batch_experiences: n,
        workers: 2,
        algo: Algo::Reinforce,
        ..TrainConfig::default()
    };
    let batch = collect_batch(&m, env, &cfg, seed, 0, Execution::Sequential).unwrap();
    (m, batch.samples)
}

#[test]
fn reinforce_gradient_matches_finite_differences() {
    for case in 0..50u64 {
        let env = if case % 2 == 0 { "gridworld-4" } else { "catch-5x7" };
        let (m, samples) = frozen_batch(env, case, 32);
        let refs: Vec<&Sample> = samples.iter().collect();
        let analytic = reinforce_gradient(&m, &refs).unwrap().to_flat();
        let numeric = finite_difference(&m, 1e-5, |w| reinforce_objective(w, &refs).unwrap());
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-3, "case {case}: relative error {err}");
    }
}

#[test]
fn ppo_loss_gradient_matches_finite_differences() {
    let coeffs = PpoCoefficients {
        clip_epsilon: 0.2,
        value_coeff: 0.5,
        entropy_coeff: 0.01,
    };
    for case in 0..10u64 {
        let (m, mut samples) = frozen_batch("catch-5x7", 100 + case, 32);
        // Off-policy log-probs keep the ratios away from the clip kinks.
        for (i, s) in samples.iter_mut().enumerate() {
            s.log_prob_old += 0.05 * ((i % 5) as f64 - 2.0);
            s.value_target = 0.3 * ((i % 7) as f64 - 3.0);
        }
        let refs: Vec<&Sample> = samples.iter().collect();
        let (_, grad) = ppo_loss_and_gradient(&m, &refs, coeffs).unwrap();
        let numeric = finite_difference(&m, 1e-6, |w| ppo_loss_and_gradient(w, &refs, coeffs).unwrap().0);
        let err = max_relative_error(&grad.to_flat(), &numeric);
        assert!(err < 1e-4, "case {case}: relative error {err}");
    }
}

#[test]
fn training_is_deterministic() {
    let m = model("catch-5x7", 1, 1.0, 1.0);
    let cfg = TrainConfig {
        iterations: 3,
        ..small_config()
    };
    let (a, ca) = train(&m, "catch-5x7", &cfg, 5).unwrap();
    let (b, cb) = train(&m, "catch-5x7", &cfg, 5).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    assert_eq!(ca.mean_returns, cb.mean_returns);
    assert_eq!(ca.mean_returns.len(), 3);
}

#[test]
fn reinforce_solves_gridworld_from_high_entropy_init() {
    let m = model("gridworld-4", mix(7, 0), 1.0, 1.0);
    let cfg = TrainConfig {
        iterations: 200,
        algo: Algo::Reinforce,
        ..TrainConfig::default()
    };
    let (_, curve) = train(&m, "gridworld-4", &cfg, 11).unwrap();
    assert!(curve.final_reward >= 0.8, "final reward {}", curve.final_reward);
}

#[test]
fn accepted_default_inits_learn_gridworld() {
    let cfg = TrainConfig::default();
    let mut solved = 0;
    for s in 0..20u64 {
        let mut init = InitConfig::new("gridworld-4").unwrap();
        init.base_seed = mix(3, s);
        let outcome = entropy_aware_init(&init).unwrap();
        let (_, curve) = train(&outcome.model, "gridworld-4", &cfg, mix(4, s)).unwrap();
        if curve.final_reward >= 0.8 {
            solved += 1;
        }
    }
    assert!(solved >= 18, "{solved}/20 seeds reached 0.8");
}
