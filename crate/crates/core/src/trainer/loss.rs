//! Advantage estimation and policy-gradient objectives.

use crate::policy::{Parameters, PolicyModel};
use crate::{Error, Result};

/// One on-policy experience with its advantage and value target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub observation: Vec<f64>,
    pub action: usize,
    /// `log pi_old(action | observation)` at collection time.
    pub log_prob_old: f64,
    pub value_old: f64,
    pub advantage: f64,
    /// Regression target of the value head.
    pub value_target: f64,
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`clipped_surrogate`] with respect to the ratio.
fn clipped_surrogate_slope(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// Generalized advantage estimates.
///
/// `values` holds one entry per step plus the bootstrap value of the state
/// after the last step. A `done` step does not bootstrap from its successor.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n + 1 {
        return Err(Error::Shape {
            expected: n + 1,
            got: values.len(),
        });
    }
    if dones.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: dones.len(),
        });
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    Ok(advantages)
}

/// Discounted rewards-to-go, restarting at episode ends and bootstrapping
/// the tail with `bootstrap`.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], gamma: f64, bootstrap: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut running = bootstrap;
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            running = 0.0;
        }
        running = rewards[t] + gamma * running;
        out[t] = running;
    }
    out
}

/// Shifts and scales advantages to zero mean and unit (population) variance.
pub fn normalize(values: &mut [f64]) {
    if values.len() < 2 {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for v in values.iter_mut() {
        *v = (*v - mean) * scale;
    }
}

/// Probability ratios `pi(a|s) / pi_old(a|s)` under the current model.
pub fn ppo_ratios(model: &PolicyModel, samples: &[Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let trace = model.evaluate(&s.observation)?;
            Ok((trace.log_probs[s.action] - s.log_prob_old).exp())
        })
        .collect()
}

/// Mean clipped surrogate over a batch.
pub fn ppo_surrogate(model: &PolicyModel, samples: &[Sample], epsilon: f64) -> Result<f64> {
    let ratios = ppo_ratios(model, samples)?;
    Ok(ratios
        .iter()
        .zip(samples)
        .map(|(&r, s)| clipped_surrogate(r, s.advantage, epsilon))
        .sum::<f64>()
        / samples.len() as f64)
}

/// Coefficients of the PPO minibatch loss.
#[derive(Debug, Clone, Copy)]
pub struct PpoCoefficients {
    pub clip_epsilon: f64,
    pub value_coeff: f64,
    pub entropy_coeff: f64,
}

/// PPO-clip loss to minimise:
/// `mean(-surrogate + c_v (V - target)^2 - c_e H(pi))`, with its gradient.
pub fn ppo_loss_and_gradient(
    model: &PolicyModel,
    samples: &[&Sample],
    coeffs: PpoCoefficients,
) -> Result<(f64, Parameters)> {
    let mut grad = Parameters::zeros_like(model.parameters());
    let scale = 1.0 / samples.len() as f64;
    let mut loss = 0.0;
    let mut d_logits = Vec::new();
    for s in samples {
        let trace = model.evaluate(&s.observation)?;
        let ratio = (trace.log_probs[s.action] - s.log_prob_old).exp();
        let surrogate = clipped_surrogate(ratio, s.advantage, coeffs.clip_epsilon);
        let slope = clipped_surrogate_slope(ratio, s.advantage, coeffs.clip_epsilon);
        let entropy: f64 = -trace
            .probs
            .iter()
            .zip(&trace.log_probs)
            .map(|(p, lp)| p * lp)
            .sum::<f64>();
        let value_err = trace.value - s.value_target;
        loss += scale
            * (-surrogate + coeffs.value_coeff * value_err * value_err
                - coeffs.entropy_coeff * entropy);

        // d ratio / d z_k = ratio (1[k = a] - p_k);
        // d H / d z_k = -p_k (ln p_k + H).
        d_logits.clear();
        d_logits.extend(trace.probs.iter().zip(&trace.log_probs).enumerate().map(
            |(k, (&p, &lp))| {
                let onehot = if k == s.action { 1.0 } else { 0.0 };
                let d_surrogate = slope * ratio * (onehot - p);
                let d_entropy = -p * (lp + entropy);
                scale * (-d_surrogate - coeffs.entropy_coeff * d_entropy)
            },
        ));
        let d_value = scale * 2.0 * coeffs.value_coeff * value_err;
        model.accumulate_backward(&trace, &d_logits, d_value, &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite PPO loss {loss}")));
    }
    Ok((loss, grad))
}

/// REINFORCE surrogate `mean(A log pi(a|s))`.
pub fn reinforce_objective(model: &PolicyModel, samples: &[&Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let trace = model.evaluate(&s.observation)?;
        total += s.advantage * trace.log_probs[s.action];
    }
    Ok(total / samples.len() as f64)
}

/// Gradient of [`reinforce_objective`] (the batch policy-gradient estimate).
pub fn reinforce_gradient(model: &PolicyModel, samples: &[&Sample]) -> Result<Parameters> {
    let mut grad = Parameters::zeros_like(model.parameters());
    let scale = 1.0 / samples.len() as f64;
    let mut d_logits = Vec::new();
    for s in samples {
        let trace = model.evaluate(&s.observation)?;
        d_logits.clear();
        d_logits.extend(trace.probs.iter().enumerate().map(|(k, &p)| {
            let onehot = if k == s.action { 1.0 } else { 0.0 };
            scale * s.advantage * (onehot - p)
        }));
        model.accumulate_backward(&trace, &d_logits, 0.0, &mut grad)?;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_surrogate_examples() {
        assert!((clipped_surrogate(1.5, 2.0, 0.2) - 2.4).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.0, 3.7, 0.1), 3.7);
        assert_eq!(clipped_surrogate(1.0, -2.0, 0.3), -2.0);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn surrogate_slope_matches_difference_quotient() {
        for &(r, a) in &[(1.5, 2.0), (0.5, -1.0), (1.1, 1.0), (0.7, 1.0), (1.3, -1.0)] {
            let h = 1e-7;
            let fd = (clipped_surrogate(r + h, a, 0.2) - clipped_surrogate(r - h, a, 0.2)) / (2.0 * h);
            assert!((fd - clipped_surrogate_slope(r, a, 0.2)).abs() < 1e-6, "r={r} a={a}");
        }
    }

    #[test]
    fn gae_examples() {
        let adv = gae_advantages(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, false], 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![2.0, 1.0]);
        let adv = gae_advantages(&[0.0; 5], &[0.0; 6], &[false; 5], 0.99, 0.95).unwrap();
        assert_eq!(adv, vec![0.0; 5]);
        assert!(matches!(
            gae_advantages(&[1.0], &[0.0], &[false], 1.0, 1.0),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            gae_advantages(&[1.0], &[0.0, 0.0], &[], 1.0, 1.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn gae_with_unit_factors_is_return_minus_value() {
        let rewards = [0.5, -1.0, 2.0, 0.25];
        let values = [0.3, 0.1, -0.4, 0.9, 0.0];
        let adv = gae_advantages(&rewards, &values, &[false, false, false, true], 1.0, 1.0).unwrap();
        for t in 0..4 {
            let to_go: f64 = rewards[t..].iter().sum();
            assert!((adv[t] - (to_go - values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn returns_restart_at_done() {
        let g = discounted_returns(&[1.0, 1.0, 1.0], &[false, true, false], 0.5, 4.0);
        assert_eq!(g, vec![1.5, 1.0, 3.0]);
    }

    #[test]
    fn normalize_moments() {
        let mut v = vec![1.0, 2.0, 3.0, 4.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-7);
    }
}
