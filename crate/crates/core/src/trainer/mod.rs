//! Downstream policy-gradient training and learning-failure detection.
//!
//! Each iteration collects `batch_experiences` steps split across `workers`
//! (each with its own environment and sampling stream), estimates advantages
//! and then runs `sgd_epochs` passes of shuffled minibatch Adam updates.

mod loss;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{Execution, SAMPLING_STREAM};
use crate::envs::EnvId;
use crate::policy::{sample_action, PolicyModel};
use crate::rng::{mix, Rng};
use crate::{Error, Result};

pub use loss::{
    clipped_surrogate, discounted_returns, gae_advantages, normalize, ppo_loss_and_gradient,
    ppo_ratios, ppo_surrogate, reinforce_gradient, reinforce_objective, PpoCoefficients, Sample,
};

const ENV_STREAM: u64 = 0xE4;
const SHUFFLE_STREAM: u64 = 0x5F;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    #[default]
    PpoClip,
    Reinforce,
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppo" | "ppo_clip" => Ok(Algo::PpoClip),
            "reinforce" => Ok(Algo::Reinforce),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::PpoClip => "ppo_clip",
            Algo::Reinforce => "reinforce",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_experiences: usize,
    pub workers: usize,
    pub sgd_epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_bonus_coeff: f64,
    pub value_coeff: f64,
    /// Global gradient-norm ceiling per minibatch step.
    pub max_grad_norm: f64,
    pub algo: Algo,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            batch_experiences: 2048,
            workers: 16,
            sgd_epochs: 6,
            minibatches: 4,
            learning_rate: 2.5e-4,
            clip_epsilon: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            entropy_bonus_coeff: 0.0,
            value_coeff: 0.5,
            max_grad_norm: 0.5,
            algo: Algo::PpoClip,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.workers == 0 || self.batch_experiences < self.workers {
            return fail(format!(
                "need 1 <= workers <= batch_experiences (workers={}, batch={})",
                self.workers, self.batch_experiences
            ));
        }
        if self.sgd_epochs == 0 || self.minibatches == 0 || self.minibatches > self.batch_experiences {
            return fail("sgd_epochs and minibatches must be positive and fit the batch".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("invalid learning_rate {}", self.learning_rate));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!("clip_epsilon {} outside (0, 1)", self.clip_epsilon));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.max_grad_norm > 0.0) {
            return fail("max_grad_norm must be positive".into());
        }
        Ok(())
    }
}

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCurve {
    /// Mean return of the episodes completed in each iteration's batch.
    pub mean_returns: Vec<f64>,
    pub episodes: Vec<usize>,
    /// Wall time since the start of training at the end of each iteration.
    pub elapsed: Vec<f64>,
    pub final_reward: f64,
    pub wall_time: f64,
}

/// Mean of the last `ceil(window * len)` (at least one) entries.
pub fn final_window_mean(values: &[f64], window: f64) -> f64 {
    let n = values.len();
    let k = ((window * n as f64).ceil() as usize).clamp(1, n.max(1));
    values[n - k..].iter().sum::<f64>() / k as f64
}

impl TrainingCurve {
    pub fn from_returns(mean_returns: Vec<f64>, episodes: Vec<usize>, elapsed: Vec<f64>) -> Self {
        let final_reward = final_window_mean(&mean_returns, 0.1);
        let wall_time = elapsed.last().copied().unwrap_or(0.0);
        Self {
            mean_returns,
            episodes,
            elapsed,
            final_reward,
            wall_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRule {
    pub env_id: String,
    pub failure_return: f64,
    pub window: f64,
}

impl FailureRule {
    /// Both tasks fail at a return of 0 or below (the goal is never reached
    /// in gridworld; no better than chance in catch).
    pub fn for_env(env_id: &str) -> Result<Self> {
        let id: EnvId = env_id.parse()?;
        let failure_return = match id {
            EnvId::Gridworld { .. } => 0.0,
            EnvId::Catch { .. } => 0.0,
        };
        Ok(Self {
            env_id: env_id.to_string(),
            failure_return,
            window: 0.1,
        })
    }
}

pub fn detect_failure(curve: &TrainingCurve, rule: &FailureRule) -> bool {
    detect_failure_in(&curve.mean_returns, rule)
}

/// True iff the mean over the final `window` fraction is at or below the
/// rule's ceiling.
pub fn detect_failure_in(mean_returns: &[f64], rule: &FailureRule) -> bool {
    assert!(!mean_returns.is_empty(), "empty training curve");
    final_window_mean(mean_returns, rule.window) <= rule.failure_return
}

/// One iteration's experience.
#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub episode_returns: Vec<f64>,
    /// Returns of episodes cut off by the end of a worker's segment.
    pub partial_returns: Vec<f64>,
}

impl Batch {
    /// Mean completed-episode return, falling back to the partial returns
    /// when no episode finished.
    pub fn mean_return(&self) -> f64 {
        let src = if self.episode_returns.is_empty() {
            &self.partial_returns
        } else {
            &self.episode_returns
        };
        src.iter().sum::<f64>() / src.len().max(1) as f64
    }
}

fn check_compatible(model: &PolicyModel, id: EnvId) -> Result<()> {
    if id.observation_width() != model.input_width() {
        return Err(Error::Shape {
            expected: model.input_width(),
            got: id.observation_width(),
        });
    }
    if id.action_space().size() != model.action_space().size() {
        return Err(Error::Config(format!(
            "model has {} actions but {id} has {}",
            model.action_space().size(),
            id.action_space().size()
        )));
    }
    Ok(())
}

fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    mix(seed, iteration as u64)
}

/// Collects one batch under `model`; worker segments are concatenated in
/// worker order whatever the scheduling.
pub fn collect_batch(
    model: &PolicyModel,
    env_id: &str,
    config: &TrainConfig,
    seed: u64,
    iteration: usize,
    execution: Execution,
) -> Result<Batch> {
    config.validate()?;
    let id: EnvId = env_id.parse()?;
    check_compatible(model, id)?;
    let iter_seed = iteration_seed(seed, iteration);
    let base = config.batch_experiences / config.workers;
    let extra = config.batch_experiences % config.workers;
    let run = |w: usize| {
        let steps = base + usize::from(w < extra);
        collect_segment(model, id, config, mix(iter_seed, w as u64), steps)
    };
    let segments: Vec<Batch> = match execution {
        Execution::Sequential => (0..config.workers).map(run).collect::<Result<_>>()?,
        Execution::Parallel => (0..config.workers)
            .into_par_iter()
            .map(run)
            .collect::<Result<_>>()?,
    };
    let mut batch = Batch {
        samples: Vec::with_capacity(config.batch_experiences),
        episode_returns: Vec::new(),
        partial_returns: Vec::new(),
    };
    for seg in segments {
        batch.samples.extend(seg.samples);
        batch.episode_returns.extend(seg.episode_returns);
        batch.partial_returns.extend(seg.partial_returns);
    }
    let mut adv: Vec<f64> = batch.samples.iter().map(|s| s.advantage).collect();
    normalize(&mut adv);
    for (s, a) in batch.samples.iter_mut().zip(adv) {
        s.advantage = a;
    }
    Ok(batch)
}

fn collect_segment(
    model: &PolicyModel,
    id: EnvId,
    config: &TrainConfig,
    worker_seed: u64,
    steps: usize,
) -> Result<Batch> {
    let mut env = id.make(mix(worker_seed, ENV_STREAM))?;
    let mut rng = Rng::from_seed(mix(worker_seed, SAMPLING_STREAM));
    let mut obs = env.reset();
    let mut samples = Vec::with_capacity(steps);
    let mut rewards = Vec::with_capacity(steps);
    let mut dones = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps + 1);
    let mut episode_returns = Vec::new();
    let mut running = 0.0;
    for _ in 0..steps {
        let trace = model.evaluate(&obs)?;
        let action = sample_action(&trace.probs, &mut rng);
        let step = env.step(action)?;
        samples.push(Sample {
            observation: std::mem::take(&mut obs),
            action,
            log_prob_old: trace.log_probs[action],
            value_old: trace.value,
            advantage: 0.0,
            value_target: 0.0,
        });
        values.push(trace.value);
        rewards.push(step.reward);
        dones.push(step.done);
        running += step.reward;
        if step.done {
            episode_returns.push(running);
            running = 0.0;
            obs = env.reset();
        } else {
            obs = step.observation;
        }
    }
    let last_done = dones.last().copied().unwrap_or(true);
    let bootstrap = if last_done {
        0.0
    } else {
        model.evaluate(&obs)?.value
    };
    let partial_returns = if last_done { vec![] } else { vec![running] };

    match config.algo {
        Algo::PpoClip => {
            values.push(bootstrap);
            let adv = gae_advantages(&rewards, &values, &dones, config.gamma, config.lambda)?;
            for (i, s) in samples.iter_mut().enumerate() {
                s.advantage = adv[i];
                s.value_target = adv[i] + values[i];
            }
        }
        Algo::Reinforce => {
            // Monte-Carlo returns; a cut-off tail is not bootstrapped.
            let returns = discounted_returns(&rewards, &dones, config.gamma, 0.0);
            for (s, g) in samples.iter_mut().zip(returns) {
                s.advantage = g;
                s.value_target = g;
            }
        }
    }
    Ok(Batch {
        samples,
        episode_returns,
        partial_returns,
    })
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(lr: f64, len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Descends along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

pub fn train(
    model: &PolicyModel,
    env_id: &str,
    config: &TrainConfig,
    seed: u64,
) -> Result<(PolicyModel, TrainingCurve)> {
    train_with(model, env_id, config, seed, Execution::default())
}

/// Trains a copy of `model`. Bit-identical for fixed inputs under either
/// execution mode.
pub fn train_with(
    model: &PolicyModel,
    env_id: &str,
    config: &TrainConfig,
    seed: u64,
    execution: Execution,
) -> Result<(PolicyModel, TrainingCurve)> {
    config.validate()?;
    let id: EnvId = env_id.parse()?;
    check_compatible(model, id)?;

    let started = Instant::now();
    let mut model = model.clone();
    let mut params = model.parameters().to_flat();
    let mut adam = Adam::new(config.learning_rate, params.len());
    let coeffs = PpoCoefficients {
        clip_epsilon: config.clip_epsilon,
        value_coeff: config.value_coeff,
        entropy_coeff: config.entropy_bonus_coeff,
    };
    let mut mean_returns = Vec::with_capacity(config.iterations);
    let mut episodes = Vec::with_capacity(config.iterations);
    let mut elapsed = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let diverged = |reason: String| Error::Divergence { iteration, reason };
        let batch = collect_batch(&model, env_id, config, seed, iteration, execution)
            .map_err(|e| diverged(e.to_string()))?;
        mean_returns.push(batch.mean_return());
        episodes.push(batch.episode_returns.len());

        let mut shuffle_rng = Rng::from_seed(mix(iteration_seed(seed, iteration), SHUFFLE_STREAM));
        let mut order: Vec<usize> = (0..batch.samples.len()).collect();
        let chunk = batch.samples.len().div_ceil(config.minibatches);
        for _ in 0..config.sgd_epochs {
            shuffle_rng.shuffle(&mut order);
            for idx in order.chunks(chunk) {
                let minibatch: Vec<&Sample> = idx.iter().map(|&i| &batch.samples[i]).collect();
                let grad = match config.algo {
                    Algo::PpoClip => {
                        ppo_loss_and_gradient(&model, &minibatch, coeffs)
                            .map_err(|e| diverged(e.to_string()))?
                            .1
                    }
                    Algo::Reinforce => {
                        // Ascent on the surrogate is descent on its negation.
                        let mut g = reinforce_gradient(&model, &minibatch)
                            .map_err(|e| diverged(e.to_string()))?;
                        g.scale(-1.0);
                        g
                    }
                };
                let mut flat = grad.to_flat();
                let norm = flat.iter().map(|g| g * g).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(diverged("non-finite gradient".into()));
                }
                if norm > config.max_grad_norm {
                    let s = config.max_grad_norm / norm;
                    flat.iter_mut().for_each(|g| *g *= s);
                }
                adam.step(&mut params, &flat);
                let mut next = model.parameters().clone();
                next.assign_flat(&params)?;
                model
                    .set_parameters(next)
                    .map_err(|e| diverged(e.to_string()))?;
            }
        }
        elapsed.push(started.elapsed().as_secs_f64());
    }
    Ok((model, TrainingCurve::from_returns(mean_returns, episodes, elapsed)))
}
