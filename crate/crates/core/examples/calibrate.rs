//! Initial-entropy sweeps used to pick the default init gains and study
//! budgets.
//! `cargo run --release --example calibrate -- [seeds] [hidden,gains] [output,gains]`

use entroseed::initializer::InitConfig;
use entroseed::policy::InitScheme;
use entroseed::rng::mix;

fn sweep(env: &str, hidden_gain: f64, output_gain: f64, seeds: u64) -> Vec<f64> {
    let mut cfg = InitConfig::new(env).unwrap();
    cfg.scheme = InitScheme::scaled_normal(hidden_gain, output_gain);
    let mut hs: Vec<f64> = (0..seeds)
        .map(|s| {
            let m = cfg.build_model(mix(0, s)).unwrap();
            cfg.measure(&m).unwrap()
        })
        .collect();
    hs.sort_by(f64::total_cmp);
    hs
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seeds = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let list = |i: usize, default: &[f64]| -> Vec<f64> {
        args.get(i)
            .map(|s| s.split(',').map(|g| g.parse().unwrap()).collect())
            .unwrap_or_else(|| default.to_vec())
    };
    let hidden_gains = list(2, &[1.0, 5.0 / 3.0]);
    let output_gains = list(3, &[0.01, 4.0, 8.0, 50.0, 200.0]);
    for env in ["gridworld-4", "catch-5x7"] {
        for &hidden_gain in &hidden_gains {
            for &output_gain in &output_gains {
                let hs = sweep(env, hidden_gain, output_gain, seeds);
                let n = hs.len() as f64;
                let above = hs.iter().filter(|&&h| h > 0.5).count() as f64 / n;
                let tiny = hs.iter().filter(|&&h| h < 0.05).count() as f64 / n;
                println!(
                    "{env:12} hidden={hidden_gain:<4} output={output_gain:<5} median={:.4} mean={:.4} p(h>0.5)={above:.3} p(h<0.05)={tiny:.3}",
                    hs[hs.len() / 2],
                    hs.iter().sum::<f64>() / n,
                );
            }
        }
    }
}
