//! Entropy-aware model initialization.
//!
//! Candidates are drawn from successive seeds and kept only if their measured
//! initial entropy is strictly above the threshold:
//!
//! ```text
//! for i in 0.. {
//!     model = init(seed_i)
//!     h = mean_entropy(rollouts(model, M actors, T steps))
//!     if h > h_th { return model }
//! }
//! ```
//!
//! The loop is bounded by `max_attempts`; running out is a typed error that
//! carries every measured entropy.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::entropy::{measure_entropy, Normalization};
use crate::envs::EnvId;
use crate::policy::{init_model, ActionSpace, Activation, InitScheme, PolicyModel};
use crate::rng::{mix, wallclock_seed};
use crate::{Error, Result};

/// Stream tag for the rollout seed used to measure a candidate.
pub const MEASURE_STREAM: u64 = 0x4D45_4153;

pub const DEFAULT_ACTORS: usize = 16;
pub const DEFAULT_HORIZON: usize = 128;
pub const DEFAULT_MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedMode {
    /// `seed_i = mix(base_seed, i)`.
    #[default]
    Counter,
    /// `seed_i` taken from the wall clock; not reproducible.
    Wallclock,
}

impl FromStr for SeedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counter" => Ok(SeedMode::Counter),
            "wallclock" => Ok(SeedMode::Wallclock),
            other => Err(Error::Config(format!("unknown seed mode `{other}`"))),
        }
    }
}

impl fmt::Display for SeedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeedMode::Counter => "counter",
            SeedMode::Wallclock => "wallclock",
        })
    }
}

/// `min(0.5, 0.5 ln |A|)` nats.
pub fn default_threshold(action_space: &ActionSpace) -> f64 {
    0.5f64.min(0.5 * action_space.max_entropy())
}

/// Rollout seed used to measure the candidate built from `model_seed`.
pub fn measurement_seed(model_seed: u64) -> u64 {
    mix(model_seed, MEASURE_STREAM)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub env_id: String,
    pub threshold: f64,
    pub actors: usize,
    pub horizon: usize,
    pub max_attempts: usize,
    pub base_seed: u64,
    pub seed_mode: SeedMode,
    pub normalization: Normalization,
    pub scheme: InitScheme,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl InitConfig {
    /// Defaults for `env_id`: threshold from [`default_threshold`], `M = 16`,
    /// `T = 128`, 100 attempts, `[32, 32]` tanh trunk.
    pub fn new(env_id: &str) -> Result<Self> {
        let id: EnvId = env_id.parse()?;
        Ok(Self {
            env_id: env_id.to_string(),
            threshold: default_threshold(&id.action_space()),
            actors: DEFAULT_ACTORS,
            horizon: DEFAULT_HORIZON,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            base_seed: 0,
            seed_mode: SeedMode::Counter,
            normalization: Normalization::Shannon,
            scheme: InitScheme::default(),
            hidden_widths: vec![32, 32],
            activation: Activation::Tanh,
        })
    }

    /// Checks every field; returns the parsed environment id.
    pub fn validate(&self) -> Result<EnvId> {
        let id: EnvId = self.env_id.parse()?;
        let ceiling = self.normalization.max_entropy(id.action_space().size());
        if !(self.threshold >= 0.0 && self.threshold < ceiling) {
            return Err(Error::Config(format!(
                "threshold {} is outside [0, {ceiling}) for {} with {} normalization",
                self.threshold, self.env_id, self.normalization
            )));
        }
        if self.actors == 0 || self.horizon == 0 {
            return Err(Error::Config("actors and horizon must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be non-empty and positive".into()));
        }
        self.scheme.validate()?;
        Ok(id)
    }

    /// Seed of candidate `attempt` (0-based).
    pub fn candidate_seed(&self, attempt: usize) -> u64 {
        match self.seed_mode {
            SeedMode::Counter => mix(self.base_seed, attempt as u64),
            SeedMode::Wallclock => wallclock_seed(attempt as u64),
        }
    }

    /// Builds the (unmeasured) model for `seed`.
    pub fn build_model(&self, seed: u64) -> Result<PolicyModel> {
        let id: EnvId = self.env_id.parse()?;
        init_model(
            self.scheme,
            seed,
            id.observation_width(),
            &self.hidden_widths,
            self.activation,
            id.action_space(),
        )
    }

    /// Mean initial entropy of `model` under this configuration's
    /// measurement protocol.
    pub fn measure(&self, model: &PolicyModel) -> Result<f64> {
        Ok(measure_entropy(
            model,
            &self.env_id,
            self.actors,
            self.horizon,
            measurement_seed(model.seed()),
            self.normalization,
        )?
        .mean)
    }
}

/// Supplies candidate models with their measured initial entropy.
pub trait CandidateSource {
    fn candidate(&mut self, config: &InitConfig, seed: u64) -> Result<(PolicyModel, f64)>;
}

/// Builds candidates from the config's init scheme and measures them with
/// rollouts.
#[derive(Debug, Default, Clone, Copy)]
pub struct RolloutCandidates;

impl CandidateSource for RolloutCandidates {
    fn candidate(&mut self, config: &InitConfig, seed: u64) -> Result<(PolicyModel, f64)> {
        let model = config.build_model(seed)?;
        let h = config.measure(&model)?;
        Ok((model, h))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub seed: u64,
    pub entropy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub model: PolicyModel,
    pub log: Vec<AttemptRecord>,
    pub total_seconds: f64,
}

impl InitOutcome {
    /// Number of candidates evaluated, including the accepted one.
    pub fn attempts(&self) -> usize {
        self.log.len()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.log.iter().map(|a| a.entropy).collect()
    }

    pub fn accepted_entropy(&self) -> f64 {
        self.log.last().map(|a| a.entropy).unwrap_or(f64::NAN)
    }
}

pub fn entropy_aware_init(config: &InitConfig) -> Result<InitOutcome> {
    entropy_aware_init_with(config, &mut RolloutCandidates)
}

/// Runs the acceptance loop against an arbitrary candidate source.
pub fn entropy_aware_init_with<S: CandidateSource>(
    config: &InitConfig,
    source: &mut S,
) -> Result<InitOutcome> {
    config.validate()?;
    let started = Instant::now();
    let mut log = Vec::new();
    for attempt in 0..config.max_attempts {
        let seed = config.candidate_seed(attempt);
        let t0 = Instant::now();
        let (model, entropy) = source.candidate(config, seed)?;
        log.push(AttemptRecord {
            attempt,
            seed,
            entropy,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if entropy > config.threshold {
            return Ok(InitOutcome {
                model,
                log,
                total_seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    Err(Error::Exhausted {
        attempts: log.len(),
        entropies: log.iter().map(|a| a.entropy).collect(),
    })
}
