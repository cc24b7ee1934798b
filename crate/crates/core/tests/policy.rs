mod common;

use common::{finite_difference, max_relative_error, model};
use entroseed::envs::EnvId;
use entroseed::policy::{
    init_model, log_softmax, restore, snapshot, softmax, Activation, ActionSpace, InitScheme,
};
use entroseed::rng::Rng;
use entroseed::Error;
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 2..9)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in logits()) {
        let p = softmax(&z).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn softmax_shift_invariance(z in logits(), c in -1e3f64..1e3) {
        let p = softmax(&z).unwrap();
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let q = softmax(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn log_softmax_agrees_with_softmax(z in prop::collection::vec(-20.0f64..20.0, 2..9)) {
        let p = softmax(&z).unwrap();
        let lp = log_softmax(&z).unwrap();
        for (a, b) in p.iter().zip(&lp) {
            prop_assert!((a.ln() - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn snapshot_round_trip(seed in any::<u64>(), hidden in 0.1f64..3.0, output in 0.01f64..50.0, relu in any::<bool>()) {
        let id: EnvId = "catch-5x7".parse().unwrap();
        let activation = if relu { Activation::Relu } else { Activation::Tanh };
        let m = init_model(
            InitScheme::scaled_normal(hidden, output),
            seed,
            id.observation_width(),
            &[7, 5],
            activation,
            id.action_space(),
        )
        .unwrap();
        let back = restore(&snapshot(&m)).unwrap();
        prop_assert_eq!(back.parameters(), m.parameters());
        prop_assert_eq!(back.seed(), m.seed());
        prop_assert_eq!(back.init_scheme(), m.init_scheme());
        prop_assert_eq!(back.layer_widths(), m.layer_widths());
        prop_assert_eq!(back.activation(), m.activation());
        prop_assert_eq!(back.action_space(), m.action_space());
    }
}

#[test]
fn reconstruction_is_bit_identical() {
    let a = model("gridworld-4", 7, 1.0, 1.0);
    let b = model("gridworld-4", 7, 1.0, 1.0);
    let c = model("gridworld-4", 8, 1.0, 1.0);
    assert_eq!(a.parameters(), b.parameters());
    assert_ne!(a.parameters(), c.parameters());
}

#[test]
fn output_gain_scales_output_weights() {
    let max_abs = |gain: f64, seed: u64| {
        model("gridworld-4", seed, 1.0, gain)
            .parameters()
            .policy
            .weights
            .iter()
            .fold(0.0f64, |m, w| m.max(w.abs()))
    };
    for seed in 0..100 {
        let (big, small) = (max_abs(10.0, seed), max_abs(1.0, seed));
        assert!(big > small, "seed {seed}");
        assert!((big - 10.0 * small).abs() <= 1e-12 * big);
    }
}

#[test]
fn uniform_point_bias_gradient_closed_form() {
    // Tiny output gain puts the policy at the uniform point up to 1e-300.
    let m = model("gridworld-4", 3, 1.0, 1e-300);
    let mut obs = vec![0.0; 16];
    obs[5] = 1.0;
    for a in 0..4 {
        let g = m.policy_gradient(&obs, a).unwrap();
        for k in 0..4 {
            let expected = if k == a { 0.75 } else { -0.25 };
            assert!((g.policy.bias[k] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let mut rng = Rng::from_seed(42);
    let mut cases = 0;
    for case in 0..60u64 {
        let env = if case % 2 == 0 { "gridworld-4" } else { "catch-5x7" };
        let id: EnvId = env.parse().unwrap();
        let activation = if case % 3 == 0 { Activation::Relu } else { Activation::Tanh };
        let m = init_model(
            InitScheme::scaled_normal(0.5 + rng.uniform(), 0.5 + 3.0 * rng.uniform()),
            case,
            id.observation_width(),
            &[6, 5],
            activation,
            id.action_space(),
        )
        .unwrap();
        let obs: Vec<f64> = (0..id.observation_width()).map(|_| rng.standard_normal()).collect();
        let action = rng.below(id.action_space().size());
        let analytic = m.policy_gradient(&obs, action).unwrap().to_flat();
        let numeric = finite_difference(&m, 1e-5, |w| w.evaluate(&obs).unwrap().log_probs[action]);
        let err = max_relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "case {case}: relative error {err}");
        cases += 1;
    }
    assert!(cases >= 50);
}

#[test]
fn configuration_errors() {
    let space = ActionSpace::from_labels(&["a", "b"]).unwrap();
    let scheme = InitScheme::default();
    assert!(matches!(
        init_model(scheme, 0, 4, &[], Activation::Tanh, space.clone()),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        init_model(scheme, 0, 4, &[3, 0], Activation::Tanh, space.clone()),
        Err(Error::Config(_))
    ));
    let bad = InitScheme::scaled_normal(0.0, 1.0);
    assert!(init_model(bad, 0, 4, &[3], Activation::Tanh, space).is_err());
    assert!(ActionSpace::from_labels(&["only"]).is_err());
    assert!(ActionSpace::from_labels(&["x", "x"]).is_err());
}
