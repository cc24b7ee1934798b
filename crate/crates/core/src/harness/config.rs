//! Study configuration documents (TOML, versioned, unknown keys rejected).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entropy::Normalization;
use crate::envs::EnvId;
use crate::initializer::{
    InitConfig, SeedMode, DEFAULT_ACTORS, DEFAULT_HORIZON, DEFAULT_MAX_ATTEMPTS,
};
use crate::policy::{Activation, InitScheme};
use crate::trainer::TrainConfig;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_BIN_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Scatter,
    Histogram,
    SeedTable,
    Comparison,
}

impl StudyKind {
    pub fn default_seeds(self) -> usize {
        match self {
            StudyKind::Histogram => 1000,
            StudyKind::SeedTable => 10,
            StudyKind::Scatter | StudyKind::Comparison => 30,
        }
    }

    /// Whether the study trains each cell after initialization.
    pub fn trains(self) -> bool {
        matches!(self, StudyKind::Scatter | StudyKind::Comparison)
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Scatter => "scatter",
            StudyKind::Histogram => "histogram",
            StudyKind::SeedTable => "seed_table",
            StudyKind::Comparison => "comparison",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(StudyKind::Scatter),
            "histogram" => Ok(StudyKind::Histogram),
            "seed_table" | "seed-table" => Ok(StudyKind::SeedTable),
            "comparison" => Ok(StudyKind::Comparison),
            other => Err(Error::Config(format!("unknown study kind `{other}`"))),
        }
    }
}

/// `[init]` table: the initializer settings shared by every environment of
/// a study. `h_th` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub h_th: f64,
    #[serde(default = "default_actors")]
    pub actors: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub seed_mode: SeedMode,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub scheme: InitScheme,
    #[serde(default = "default_widths")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_actors() -> usize {
    DEFAULT_ACTORS
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

fn default_max_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

fn default_widths() -> Vec<usize> {
    vec![32, 32]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH
}

fn default_workers() -> usize {
    1
}

impl InitSection {
    pub fn with_threshold(h_th: f64) -> Self {
        Self {
            h_th,
            actors: DEFAULT_ACTORS,
            horizon: DEFAULT_HORIZON,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            base_seed: 0,
            seed_mode: SeedMode::Counter,
            normalization: Normalization::Shannon,
            scheme: InitScheme::default(),
            hidden_widths: default_widths(),
            activation: default_activation(),
        }
    }

    /// Initializer configuration for one environment of the study.
    pub fn config_for(&self, env_id: &str) -> InitConfig {
        InitConfig {
            env_id: env_id.to_string(),
            threshold: self.h_th,
            actors: self.actors,
            horizon: self.horizon,
            max_attempts: self.max_attempts,
            base_seed: self.base_seed,
            seed_mode: self.seed_mode,
            normalization: self.normalization,
            scheme: self.scheme,
            hidden_widths: self.hidden_widths.clone(),
            activation: self.activation,
        }
    }
}

/// A complete study description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub version: u32,
    pub study_kind: StudyKind,
    pub env_ids: Vec<String>,
    /// Falls back to [`StudyKind::default_seeds`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seeds: Option<usize>,
    pub output_dir: PathBuf,
    /// Maximum number of cells run concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_bin_width")]
    pub histogram_bin_width: f64,
    pub init: InitSection,
    #[serde(default)]
    pub train: TrainConfig,
}

impl StudySpec {
    pub fn new(kind: StudyKind, env_ids: &[&str], output_dir: impl Into<PathBuf>, h_th: f64) -> Self {
        Self {
            version: CONFIG_VERSION,
            study_kind: kind,
            env_ids: env_ids.iter().map(|s| s.to_string()).collect(),
            n_seeds: None,
            output_dir: output_dir.into(),
            workers: default_workers(),
            histogram_bin_width: DEFAULT_BIN_WIDTH,
            init: InitSection::with_threshold(h_th),
            train: TrainConfig::default(),
        }
    }

    pub fn seeds(&self) -> usize {
        self.n_seeds.unwrap_or_else(|| self.study_kind.default_seeds())
    }

    /// Environment ids with duplicates removed, first occurrence first.
    ///
    /// The seed-table study keeps duplicates so that identical columns can
    /// be compared.
    pub fn distinct_envs(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.env_ids
            .iter()
            .filter(|e| seen.insert(e.as_str()))
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Schema(format!(
                "field `version`: unsupported value {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.env_ids.is_empty() {
            return Err(Error::Schema("field `env_ids`: must list at least one environment".into()));
        }
        if self.study_kind == StudyKind::SeedTable && self.env_ids.len() < 2 {
            return Err(Error::Schema(
                "field `env_ids`: seed_table needs at least two environments".into(),
            ));
        }
        if self.seeds() == 0 {
            return Err(Error::Schema("field `n_seeds`: must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Schema("field `workers`: must be at least 1".into()));
        }
        if !(self.histogram_bin_width.is_finite() && self.histogram_bin_width > 0.0) {
            return Err(Error::Schema(format!(
                "field `histogram_bin_width`: must be positive, got {}",
                self.histogram_bin_width
            )));
        }
        for env in &self.env_ids {
            env.parse::<EnvId>()
                .map_err(|e| Error::Schema(format!("field `env_ids`: {e}")))?;
            self.init
                .config_for(env)
                .validate()
                .map_err(|e| Error::Schema(format!("table `init`: {e}")))?;
        }
        self.train
            .validate()
            .map_err(|e| Error::Schema(format!("table `train`: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StudySpec = toml::from_str(text).map_err(|e| Error::Schema(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::storage(path, e))
    }
}

/// Reads and validates a study document.
pub fn load_config(path: &Path) -> Result<StudySpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    StudySpec::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
study_kind = "histogram"
env_ids = ["gridworld-4"]
output_dir = "out"

[init]
h_th = 0.5
"#;

    #[test]
    fn minimal_document_takes_defaults() {
        let spec = StudySpec::from_toml(MINIMAL).unwrap();
        assert_eq!(spec.seeds(), 1000);
        assert_eq!(spec.histogram_bin_width, 0.05);
        assert_eq!(spec.init.actors, 16);
        assert_eq!(spec.init.horizon, 128);
        assert_eq!(spec.train, TrainConfig::default());
    }

    #[test]
    fn missing_threshold_names_the_field() {
        let err = StudySpec::from_toml(&MINIMAL.replace("h_th = 0.5", "")).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("h_th"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = StudySpec::from_toml(&format!("{MINIMAL}bogus = 3\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = StudySpec::from_toml(&MINIMAL.replace("output_dir", "outdir")).unwrap_err();
        assert!(err.to_string().contains("outdir"), "{err}");
    }

    #[test]
    fn version_and_envs_are_checked() {
        assert!(StudySpec::from_toml(&MINIMAL.replace("version = 1", "version = 2")).is_err());
        assert!(StudySpec::from_toml(&MINIMAL.replace("gridworld-4", "pong")).is_err());
        let table = MINIMAL.replace("\"histogram\"", "\"seed_table\"");
        assert!(StudySpec::from_toml(&table).is_err());
    }

    #[test]
    fn round_trip() {
        let mut spec = StudySpec::new(StudyKind::Comparison, &["gridworld-4", "catch-5x7"], "x/y", 0.5);
        spec.n_seeds = Some(20);
        spec.init.scheme = InitScheme::scaled_normal(1.3, 8.0);
        spec.train.iterations = 12;
        spec.train.learning_rate = 3e-4;
        let back = StudySpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
