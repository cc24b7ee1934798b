//! Rollout collection and policy-entropy measurement.
//!
//! `M` actors each run the policy for `T` steps (resetting their environment
//! whenever an episode ends) and record the action-selection probabilities
//! seen at every step. The initial entropy of a model is the arithmetic mean
//! of the per-step entropies over all `M * T` records.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::policy::{sample_action, PolicyModel};
use crate::rng::{mix, Rng};
use crate::{Error, Result};

/// Stream tag separating an actor's action-sampling seed from its env seed.
pub const SAMPLING_STREAM: u64 = 0x5A;

const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `-sum p ln p`.
    #[default]
    Shannon,
    /// `-(1/|A|) sum p ln p`.
    PaperNormalized,
}

impl Normalization {
    /// Largest per-step entropy attainable over `n` actions.
    pub fn max_entropy(self, n: usize) -> f64 {
        let h = (n as f64).ln();
        match self {
            Normalization::Shannon => h,
            Normalization::PaperNormalized => h / n as f64,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Shannon => "shannon",
            Normalization::PaperNormalized => "paper_normalized",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shannon" => Ok(Normalization::Shannon),
            "paper_normalized" => Ok(Normalization::PaperNormalized),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Entropy of one action distribution in nats, with `0 ln 0 = 0`.
pub fn step_entropy(probs: &[f64], normalization: Normalization) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    let mut total = 0.0;
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        total += p;
    }
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
    }
    // Written as ln n - sum p ln(p n) so uniform and one-hot inputs land on
    // ln n and 0 exactly instead of accumulating rounding.
    let n = probs.len() as f64;
    let mut divergence = 0.0;
    for &p in probs {
        if p > 0.0 {
            divergence += p * (p * n).ln();
        }
    }
    let h = (n.ln() - divergence).max(0.0);
    Ok(match normalization {
        Normalization::Shannon => h,
        Normalization::PaperNormalized => h / probs.len() as f64,
    })
}

/// Action-selection probabilities of actor `actor` at step `timestep`
/// (both 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub actor: usize,
    pub timestep: usize,
    pub probs: Vec<f64>,
    pub observation_hash: u64,
}

/// How the actors of one measurement are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// FNV-1a over the IEEE-754 bit patterns of the observation.
pub fn observation_hash(observation: &[f64]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    observation
        .iter()
        .flat_map(|v| v.to_bits().to_le_bytes())
        .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Environment and sampling seeds of actor `actor` (1-based).
pub fn actor_seeds(base_seed: u64, actor: usize) -> (u64, u64) {
    let env_seed = mix(base_seed, actor as u64);
    (env_seed, mix(env_seed, SAMPLING_STREAM))
}

pub fn collect_rollouts(
    model: &PolicyModel,
    env_id: &str,
    actors: usize,
    horizon: usize,
    base_seed: u64,
) -> Result<Vec<RolloutRecord>> {
    collect_rollouts_with(model, env_id, actors, horizon, base_seed, Execution::default())
}

/// Rolls the policy out with `actors` independent actors for `horizon` steps
/// each. Records are returned ordered by `(actor, timestep)` regardless of
/// scheduling.
pub fn collect_rollouts_with(
    model: &PolicyModel,
    env_id: &str,
    actors: usize,
    horizon: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<Vec<RolloutRecord>> {
    if actors == 0 || horizon == 0 {
        return Err(Error::Config(format!(
            "actors and horizon must be positive (got M={actors}, T={horizon})"
        )));
    }
    let id: EnvId = env_id.parse()?;
    if id.observation_width() != model.input_width() {
        return Err(Error::Shape {
            expected: model.input_width(),
            got: id.observation_width(),
        });
    }
    if id.action_space().size() != model.action_space().size() {
        return Err(Error::Config(format!(
            "model has {} actions but {env_id} has {}",
            model.action_space().size(),
            id.action_space().size()
        )));
    }

    let run = |actor: usize| run_actor(model, id, actor, horizon, base_seed);
    let per_actor: Vec<Vec<RolloutRecord>> = match execution {
        Execution::Sequential => (1..=actors).map(run).collect::<Result<_>>()?,
        Execution::Parallel => (1..=actors)
            .into_par_iter()
            .map(run)
            .collect::<Result<_>>()?,
    };
    Ok(per_actor.into_iter().flatten().collect())
}

fn run_actor(
    model: &PolicyModel,
    id: EnvId,
    actor: usize,
    horizon: usize,
    base_seed: u64,
) -> Result<Vec<RolloutRecord>> {
    let (env_seed, sampling_seed) = actor_seeds(base_seed, actor);
    let mut env = id.make(env_seed)?;
    let mut rng = Rng::from_seed(sampling_seed);
    let mut obs = env.reset();
    let mut records = Vec::with_capacity(horizon);
    for timestep in 1..=horizon {
        let probs = model.action_probabilities(&obs)?;
        let action = sample_action(&probs, &mut rng);
        records.push(RolloutRecord {
            actor,
            timestep,
            probs,
            observation_hash: observation_hash(&obs),
        });
        let step = env.step(action)?;
        obs = if step.done { env.reset() } else { step.observation };
    }
    Ok(records)
}

/// Per-step entropies (`per_step[j][t]`, 0-based) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub per_step: Vec<Vec<f64>>,
    pub mean: f64,
    pub actors: usize,
    pub horizon: usize,
    pub normalization: Normalization,
    pub model_seed: Option<u64>,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Actor-major, timestep-minor compensated mean of a rectangular grid.
fn grid_mean(per_step: &[Vec<f64>]) -> f64 {
    let count: usize = per_step.iter().map(Vec::len).sum();
    compensated_sum(per_step.iter().flatten().copied()) / count as f64
}

/// Averages per-step entropies over a complete `M x T` record set.
///
/// Records may arrive in any order; they are sorted by `(actor, timestep)`
/// before summation so the result does not depend on arrival order.
pub fn mean_entropy(records: &[RolloutRecord], normalization: Normalization) -> Result<EntropyReport> {
    if records.is_empty() {
        return Err(Error::Integrity("no rollout records".into()));
    }
    let actors = records.iter().map(|r| r.actor).max().unwrap_or(0);
    let horizon = records.iter().map(|r| r.timestep).max().unwrap_or(0);
    if records.iter().any(|r| r.actor == 0 || r.timestep == 0) {
        return Err(Error::Integrity("actor and timestep indices are 1-based".into()));
    }
    let mut grid: Vec<Vec<Option<&RolloutRecord>>> = vec![vec![None; horizon]; actors];
    for r in records {
        let slot = &mut grid[r.actor - 1][r.timestep - 1];
        if slot.is_some() {
            return Err(Error::Integrity(format!(
                "duplicate record for actor {} timestep {}",
                r.actor, r.timestep
            )));
        }
        *slot = Some(r);
    }
    let mut per_step = Vec::with_capacity(actors);
    for (j, row) in grid.iter().enumerate() {
        let mut values = Vec::with_capacity(horizon);
        for (t, cell) in row.iter().enumerate() {
            let r = cell.ok_or_else(|| {
                Error::Integrity(format!("missing record for actor {} timestep {}", j + 1, t + 1))
            })?;
            values.push(step_entropy(&r.probs, normalization)?);
        }
        per_step.push(values);
    }
    Ok(EntropyReport {
        mean: grid_mean(&per_step),
        per_step,
        actors,
        horizon,
        normalization,
        model_seed: None,
    })
}

/// Collects rollouts for `model` and reports their mean entropy.
pub fn measure_entropy(
    model: &PolicyModel,
    env_id: &str,
    actors: usize,
    horizon: usize,
    base_seed: u64,
    normalization: Normalization,
) -> Result<EntropyReport> {
    let records = collect_rollouts(model, env_id, actors, horizon, base_seed)?;
    let mut report = mean_entropy(&records, normalization)?;
    report.model_seed = Some(model.seed());
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct EntropySummary {
    pub mean: f64,
    pub actors: usize,
    pub horizon: usize,
    pub normalization: Normalization,
    pub model_seed: Option<u64>,
}

impl EntropyReport {
    /// Entropy with sub-`1e-12` values shown as zero.
    pub fn display_value(h: f64) -> f64 {
        if h < 1e-12 {
            0.0
        } else {
            h
        }
    }

    pub fn summary(&self) -> EntropySummary {
        EntropySummary {
            mean: self.mean,
            actors: self.actors,
            horizon: self.horizon,
            normalization: self.normalization,
            model_seed: self.model_seed,
        }
    }

    /// Writes `actor,timestep,entropy` rows (1-based indices).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::harness::csv_writer(path)?;
        w.write_record(["actor", "timestep", "entropy"])?;
        for (j, row) in self.per_step.iter().enumerate() {
            for (t, h) in row.iter().enumerate() {
                w.serialize((j + 1, t + 1, *h))?;
            }
        }
        w.flush().map_err(|e| Error::storage(path, e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.summary()).expect("summary serializes");
        text.push('\n');
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::storage(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{init_model, Activation, InitScheme};

    fn grid_model(seed: u64, gain: f64) -> PolicyModel {
        let id: EnvId = "gridworld-4".parse().unwrap();
        init_model(
            InitScheme::scaled_normal(1.0, gain),
            seed,
            id.observation_width(),
            &[32, 32],
            Activation::Tanh,
            id.action_space(),
        )
        .unwrap()
    }

    #[test]
    fn closed_form_entropies() {
        let uniform = [0.25; 4];
        let h = step_entropy(&uniform, Normalization::Shannon).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-15);
        assert!((h - 1.386294).abs() < 1e-6);
        let h = step_entropy(&uniform, Normalization::PaperNormalized).unwrap();
        assert!((h - 0.346574).abs() < 1e-6);
        for norm in [Normalization::Shannon, Normalization::PaperNormalized] {
            assert_eq!(step_entropy(&[1.0, 0.0, 0.0, 0.0], norm).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_distributions_rejected() {
        for bad in [&[0.5, 0.6][..], &[1.2, -0.2], &[f64::NAN, 1.0], &[]] {
            assert!(matches!(
                step_entropy(bad, Normalization::Shannon),
                Err(Error::InvalidDistribution(_))
            ));
        }
    }

    fn record(actor: usize, timestep: usize, probs: Vec<f64>) -> RolloutRecord {
        RolloutRecord {
            actor,
            timestep,
            probs,
            observation_hash: 0,
        }
    }

    #[test]
    fn mean_of_known_entropies() {
        assert_eq!(grid_mean(&[vec![1.0, 0.5], vec![0.25, 0.25]]), 0.5);

        let recs = vec![
            record(2, 2, vec![0.5, 0.5]),
            record(1, 2, vec![1.0, 0.0]),
            record(2, 1, vec![0.5, 0.5]),
            record(1, 1, vec![0.5, 0.5]),
        ];
        let rep = mean_entropy(&recs, Normalization::Shannon).unwrap();
        assert_eq!((rep.actors, rep.horizon), (2, 2));
        assert!((rep.mean - 0.75 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(rep.per_step[0][1], 0.0);
    }

    #[test]
    fn uniform_records_average_to_max_entropy() {
        let recs: Vec<_> = (1..=3)
            .flat_map(|j| (1..=5).map(move |t| record(j, t, vec![0.25; 4])))
            .collect();
        let rep = mean_entropy(&recs, Normalization::Shannon).unwrap();
        assert!((rep.mean - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn integrity_errors() {
        let recs = vec![record(1, 1, vec![0.5, 0.5]), record(1, 1, vec![0.5, 0.5])];
        assert!(matches!(mean_entropy(&recs, Normalization::Shannon), Err(Error::Integrity(_))));
        let recs = vec![record(1, 1, vec![0.5, 0.5]), record(2, 2, vec![0.5, 0.5])];
        assert!(matches!(mean_entropy(&recs, Normalization::Shannon), Err(Error::Integrity(_))));
        assert!(matches!(mean_entropy(&[], Normalization::Shannon), Err(Error::Integrity(_))));
    }

    #[test]
    fn rollout_counts_and_order() {
        let m = grid_model(1, 1.0);
        let recs = collect_rollouts(&m, "gridworld-4", 1, 5, 3).unwrap();
        assert_eq!(recs.len(), 5);
        assert_eq!(recs.iter().map(|r| r.timestep).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        let recs = collect_rollouts(&m, "gridworld-4", 16, 128, 3).unwrap();
        assert_eq!(recs.len(), 2048);
        assert!(recs.windows(2).all(|w| (w[0].actor, w[0].timestep) < (w[1].actor, w[1].timestep)));
    }

    #[test]
    fn rollouts_are_deterministic() {
        let m = grid_model(2, 3.0);
        let a = collect_rollouts(&m, "gridworld-4", 4, 40, 9).unwrap();
        let b = collect_rollouts_with(&m, "gridworld-4", 4, 40, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rollout_errors() {
        let m = grid_model(2, 1.0);
        assert!(matches!(collect_rollouts(&m, "nope-1", 1, 1, 0), Err(Error::Config(_))));
        assert!(matches!(collect_rollouts(&m, "gridworld-4", 0, 1, 0), Err(Error::Config(_))));
        assert!(collect_rollouts(&m, "gridworld-5", 1, 1, 0).is_err());
    }

    #[test]
    fn episodes_reset_within_horizon() {
        // A horizon longer than the episode cap must span a reset: the start
        // observation hash reappears after the first episode ends.
        let m = grid_model(5, 1.0);
        let recs = collect_rollouts(&m, "gridworld-4", 1, 200, 1).unwrap();
        let start = recs[0].observation_hash;
        assert!(recs[1..].iter().filter(|r| r.observation_hash == start).count() >= 1);
    }

    #[test]
    fn display_zeroes_tiny_values() {
        assert_eq!(EntropyReport::display_value(1e-13), 0.0);
        assert_eq!(EntropyReport::display_value(0.3), 0.3);
    }
}
