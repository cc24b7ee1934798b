//! Runs the gridworld-4 comparison study for a range of hidden gains and
//! prints per-arm failure counts and attempts.
//! `cargo run --release --example comparison_sweep -- <seeds> <iterations> <hidden_gain>...`

use entroseed::harness::{run_study, Arm, RunOptions, StudyKind, StudySpec};
use entroseed::policy::InitScheme;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: usize = args.first().map_or(20, |a| a.parse().unwrap());
    let iterations: usize = args.get(1).map_or(30, |a| a.parse().unwrap());
    let gains: Vec<f64> = args.iter().skip(2).map(|a| a.parse().unwrap()).collect();
    for hidden in gains {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = StudySpec::new(StudyKind::Comparison, &["gridworld-4"], dir.path(), 0.5);
        spec.n_seeds = Some(seeds);
        spec.init.scheme = InitScheme::scaled_normal(hidden, 8.0);
        spec.train.iterations = iterations;
        let result = run_study(&spec, RunOptions::default()).unwrap();
        for arm in [Arm::Default, Arm::Proposed] {
            let s = result.arm_summary(arm).unwrap();
            let failed: Vec<String> = result
                .rows_for("gridworld-4", arm)
                .filter(|r| r.failed)
                .map(|r| format!("{}:{:.2}", r.seed_index, r.initial_entropy))
                .collect();
            println!(
                "hidden={hidden:.4} {arm:8} failures={:2}/{} attempts={:.2} exhausted={} [{}]",
                s.failure_count,
                s.runs,
                s.mean_attempts,
                s.exhausted_count,
                failed.join(" ")
            );
        }
    }
}
