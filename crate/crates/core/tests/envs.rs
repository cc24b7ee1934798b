use entroseed::envs::{make_env, EnvId};
use entroseed::rng::Rng;
use proptest::prelude::*;

proptest! {
    #[test]
    fn observations_and_rewards_stay_in_contract(
        env_seed in any::<u64>(),
        action_seed in any::<u64>(),
        grid in any::<bool>(),
    ) {
        let id = if grid { "gridworld-4" } else { "catch-5x7" };
        let parsed: EnvId = id.parse().unwrap();
        let mass = if grid { 1.0 } else { 2.0 };
        let mut env = make_env(id, env_seed).unwrap();
        env.set_auto_reset(true);
        let obs = env.reset();
        prop_assert_eq!(obs.len(), parsed.observation_width());
        prop_assert_eq!(obs.iter().sum::<f64>(), mass);
        let mut rng = Rng::from_seed(action_seed);
        let mut steps = 0;
        for _ in 0..200 {
            let st = env.step(rng.below(parsed.action_space().size())).unwrap();
            prop_assert_eq!(st.observation.iter().sum::<f64>(), mass);
            prop_assert!(st.observation.iter().all(|&v| v == 0.0 || v == 1.0));
            if grid {
                prop_assert!(st.reward == -0.01 || st.reward == 1.0);
            } else {
                prop_assert!(st.reward == -1.0 || st.reward == 0.0 || st.reward == 1.0);
            }
            steps += 1;
            if st.done {
                prop_assert!(steps <= parsed.episode_cap());
                steps = 0;
            }
        }
    }
}

/// Value iteration on the gridworld MDP; returns the optimal undiscounted
/// episode return from the start state.
fn value_iteration_optimum(n: usize) -> f64 {
    let goal = n * n - 1;
    let mut v = vec![0.0f64; n * n];
    for _ in 0..200 {
        let mut next = v.clone();
        for s in 0..n * n {
            if s == goal {
                continue;
            }
            let (r, c) = (s / n, s % n);
            let moves = [
                (r.saturating_sub(1), c),
                ((r + 1).min(n - 1), c),
                (r, c.saturating_sub(1)),
                (r, (c + 1).min(n - 1)),
            ];
            next[s] = moves
                .iter()
                .map(|&(rr, cc)| {
                    let t = rr * n + cc;
                    // Entering the goal pays +1 in place of the step cost.
                    if t == goal {
                        1.0
                    } else {
                        -0.01 + v[t]
                    }
                })
                .fold(f64::NEG_INFINITY, f64::max);
        }
        v = next;
    }
    v[0]
}

#[test]
fn shortest_path_reaches_value_iteration_optimum() {
    let optimum = value_iteration_optimum(4);
    let mut env = make_env("gridworld-4", 0).unwrap();
    env.reset();
    let mut total = 0.0;
    for a in [1, 1, 1, 3, 3, 3] {
        let st = env.step(a).unwrap();
        total += st.reward;
        if st.done {
            break;
        }
    }
    assert!((total - optimum).abs() < 1e-12, "{total} vs {optimum}");
    assert!((optimum - 0.95).abs() < 1e-12);
}

#[test]
fn episode_cap_forces_done() {
    let mut env = make_env("gridworld-4", 0).unwrap();
    env.reset();
    let mut done_at = None;
    for i in 1..=64 {
        if env.step(0).unwrap().done {
            done_at = Some(i);
            break;
        }
    }
    assert_eq!(done_at, Some(64));
}

#[test]
fn id_parsing() {
    assert_eq!("gridworld-4".parse::<EnvId>().unwrap().to_string(), "gridworld-4");
    assert_eq!("catch-5x7".parse::<EnvId>().unwrap().to_string(), "catch-5x7");
    for bad in ["gridworld-2", "catch-4x7", "catch-5x3", "pong", "gridworld-x"] {
        assert!(bad.parse::<EnvId>().is_err(), "{bad}");
    }
}
