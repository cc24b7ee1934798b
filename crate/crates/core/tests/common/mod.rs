//! Shared test helpers and independent oracles.
#![allow(dead_code)]

use entroseed::initializer::InitConfig;
use entroseed::policy::{InitScheme, Parameters, PolicyModel};
use entroseed::rng::Rng;

pub fn model(env_id: &str, seed: u64, hidden_gain: f64, output_gain: f64) -> PolicyModel {
    let mut cfg = InitConfig::new(env_id).unwrap();
    cfg.scheme = InitScheme::scaled_normal(hidden_gain, output_gain);
    cfg.build_model(seed).unwrap()
}

/// Shannon entropy by direct summation over nonzero entries.
pub fn naive_entropy(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Brute-force GAE: `A_t = sum_l (gamma lambda)^l delta_{t+l}`, truncated at
/// the first episode end.
pub fn gae_oracle(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta = |k: usize| {
        let next = if dones[k] { 0.0 } else { values[k + 1] };
        rewards[k] + gamma * next - values[k]
    };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                total += (gamma * lambda).powi((k - t) as i32) * delta(k);
                if dones[k] {
                    break;
                }
            }
            total
        })
        .collect()
}

/// Random probability vector of length `n`, some entries possibly tiny.
pub fn random_probs(rng: &mut Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| (rng.standard_normal() * 3.0).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Central-difference gradient of `f` with respect to every parameter.
pub fn finite_difference(model: &PolicyModel, eps: f64, f: impl Fn(&PolicyModel) -> f64) -> Vec<f64> {
    let base = model.parameters().to_flat();
    let mut work = model.clone();
    let mut params: Parameters = model.parameters().clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut flat = base.clone();
        flat[i] = base[i] + eps;
        params.assign_flat(&flat).unwrap();
        work.set_parameters(params.clone()).unwrap();
        let up = f(&work);
        flat[i] = base[i] - eps;
        params.assign_flat(&flat).unwrap();
        work.set_parameters(params.clone()).unwrap();
        let down = f(&work);
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Largest relative error with denominator `max(|a|, |b|, 1e-6)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
