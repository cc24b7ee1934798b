//! Default-arm training sweep: initial entropy vs. final reward per seed.
//! `cargo run --release --example train_sweep -- <seeds> <iterations> <hidden_gain> <output_gain> [lr]`

use std::time::Instant;

use entroseed::initializer::InitConfig;
use entroseed::policy::InitScheme;
use entroseed::rng::mix;
use entroseed::trainer::{train, TrainConfig};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let seeds = args.first().copied().unwrap_or(20.0) as u64;
    let iterations = args.get(1).copied().unwrap_or(30.0) as usize;
    let hidden = args.get(2).copied().unwrap_or(5.0 / 3.0);
    let output = args.get(3).copied().unwrap_or(8.0);
    let lr = args.get(4).copied().unwrap_or(2.5e-4);
    let env = std::env::var("ENV").unwrap_or("gridworld-4".into());
    let mut cfg = InitConfig::new(&env).unwrap();
    cfg.scheme = InitScheme::scaled_normal(hidden, output);
    let tc = TrainConfig { iterations, learning_rate: lr, ..TrainConfig::default() };
    for s in 0..seeds {
        let t0 = Instant::now();
        let m = cfg.build_model(mix(1, s)).unwrap();
        let h = cfg.measure(&m).unwrap();
        let (_, curve) = train(&m, &env, &tc, mix(2, s)).unwrap();
        let pts: Vec<String> = curve.mean_returns.iter().step_by((iterations / 10).max(1)).map(|r| format!("{r:.2}")).collect();
        println!("seed {s:2} h={h:.3} final={:.3} [{}] {:.1}s", curve.final_reward, pts.join(" "), t0.elapsed().as_secs_f64());
    }
}
