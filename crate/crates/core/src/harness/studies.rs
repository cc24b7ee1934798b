//! The four multi-seed studies and their shared cell runner.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{StudyKind, StudySpec};
use super::report;
use super::store::{Arm, CellKey, CellRecord, ResultStore, StudyRow};
use crate::initializer::entropy_aware_init;
use crate::rng::mix;
use crate::trainer::{detect_failure, train, FailureRule};
use crate::{Error, Result};

/// Stream tag of the training seed derived from an arm's seed.
pub const TRAIN_STREAM: u64 = 0x7EA1;

/// Environment variable overriding `output_dir`.
pub const OUTPUT_ENV_VAR: &str = "ENTROSEED_OUT";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record every timing column as 0 so reruns are byte-identical.
    pub no_timing: bool,
}

/// Seed of study seed index `s`.
pub fn study_seed(base_seed: u64, seed_index: usize) -> u64 {
    mix(base_seed, seed_index as u64)
}

/// Root of one arm's seed lineage for one study seed.
pub fn arm_seed(study_seed: u64, arm: Arm) -> u64 {
    mix(study_seed, arm.tag())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub runs: usize,
    pub failure_count: usize,
    pub exhausted_count: usize,
    pub diverged_count: usize,
    /// Mean over rows that finished training; empty if none did.
    pub mean_final_reward: Option<f64>,
    pub mean_attempts: f64,
    pub std_attempts: f64,
    pub mean_init_sec: f64,
    pub std_init_sec: f64,
    pub mean_train_sec: f64,
    pub std_train_sec: f64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub spec: StudySpec,
    pub rows: Vec<StudyRow>,
    pub curves: BTreeMap<CellKey, Vec<(f64, usize)>>,
    pub summary: Vec<ArmSummary>,
    pub output_dir: PathBuf,
}

impl StudyResult {
    pub fn rows_for(&self, env_id: &str, arm: Arm) -> impl Iterator<Item = &StudyRow> {
        let env_id = env_id.to_string();
        self.rows
            .iter()
            .filter(move |r| r.env_id == env_id && r.arm == arm)
    }

    pub fn arm_summary(&self, arm: Arm) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-arm aggregates recomputed from raw rows.
pub fn summarize(rows: &[StudyRow]) -> Vec<ArmSummary> {
    [Arm::Default, Arm::Proposed]
        .into_iter()
        .filter_map(|arm| {
            let arm_rows: Vec<&StudyRow> = rows.iter().filter(|r| r.arm == arm).collect();
            if arm_rows.is_empty() {
                return None;
            }
            let finals: Vec<f64> = arm_rows.iter().filter_map(|r| r.final_reward).collect();
            let attempts: Vec<f64> = arm_rows.iter().map(|r| r.init_attempts as f64).collect();
            let init: Vec<f64> = arm_rows.iter().map(|r| r.init_seconds).collect();
            let trained: Vec<f64> = arm_rows
                .iter()
                .filter(|r| r.final_reward.is_some())
                .map(|r| r.train_seconds)
                .collect();
            Some(ArmSummary {
                arm,
                runs: arm_rows.len(),
                failure_count: arm_rows.iter().filter(|r| r.failed).count(),
                exhausted_count: arm_rows.iter().filter(|r| r.exhausted).count(),
                diverged_count: arm_rows.iter().filter(|r| r.diverged).count(),
                mean_final_reward: (!finals.is_empty()).then(|| mean(&finals)),
                mean_attempts: mean(&attempts),
                std_attempts: population_std(&attempts),
                mean_init_sec: mean(&init),
                std_init_sec: population_std(&init),
                mean_train_sec: mean(&trained),
                std_train_sec: population_std(&trained),
            })
        })
        .collect()
}

/// Cells of `spec` in run order: seed, then environment, then arm.
pub fn study_cells(spec: &StudySpec) -> Vec<CellKey> {
    let arms: &[Arm] = match spec.study_kind {
        StudyKind::Comparison => &[Arm::Default, Arm::Proposed],
        _ => &[Arm::Default],
    };
    let envs = spec.distinct_envs();
    let mut cells = Vec::with_capacity(spec.seeds() * envs.len() * arms.len());
    for seed_index in 0..spec.seeds() {
        for env_id in &envs {
            for &arm in arms {
                cells.push(CellKey {
                    seed_index,
                    env_id: env_id.clone(),
                    arm,
                });
            }
        }
    }
    cells
}

/// Runs one cell: initialize (with or without the acceptance loop),
/// measure, and train if the study calls for it.
pub fn run_cell(spec: &StudySpec, key: &CellKey, options: RunOptions) -> Result<CellRecord> {
    let seed = study_seed(spec.init.base_seed, key.seed_index);
    let lineage = arm_seed(seed, key.arm);
    let mut cfg = spec.init.config_for(&key.env_id);
    cfg.base_seed = lineage;
    let seconds = |start: Instant| {
        if options.no_timing {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        }
    };

    let start = Instant::now();
    let (model, initial_entropy, init_attempts) = match key.arm {
        Arm::Default => {
            let model = cfg.build_model(cfg.candidate_seed(0))?;
            let h = cfg.measure(&model)?;
            (Some(model), h, 1)
        }
        Arm::Proposed => match entropy_aware_init(&cfg) {
            Ok(outcome) => {
                let h = outcome.accepted_entropy();
                let attempts = outcome.attempts();
                (Some(outcome.model), h, attempts)
            }
            Err(Error::Exhausted { attempts, entropies }) => {
                (None, entropies.last().copied().unwrap_or(f64::NAN), attempts)
            }
            Err(e) => return Err(e),
        },
    };
    let init_seconds = seconds(start);

    let mut row = StudyRow {
        seed_index: key.seed_index,
        seed,
        env_id: key.env_id.clone(),
        arm: key.arm,
        initial_entropy,
        final_reward: None,
        failed: false,
        exhausted: model.is_none(),
        diverged: false,
        init_attempts,
        init_seconds,
        train_seconds: 0.0,
    };
    let mut curve = Vec::new();
    if let (true, Some(model)) = (spec.study_kind.trains(), model) {
        let start = Instant::now();
        match train(&model, &key.env_id, &spec.train, mix(lineage, TRAIN_STREAM)) {
            Ok((_, training)) => {
                row.final_reward = Some(training.final_reward);
                row.failed = detect_failure(&training, &FailureRule::for_env(&key.env_id)?);
                curve = training
                    .mean_returns
                    .iter()
                    .copied()
                    .zip(training.episodes.iter().copied())
                    .collect();
            }
            Err(Error::Divergence { .. }) => row.diverged = true,
            Err(e) => return Err(e),
        }
        row.train_seconds = seconds(start);
    }
    Ok(CellRecord { row, curve })
}

/// Resolves the output directory, honouring [`OUTPUT_ENV_VAR`].
pub fn output_dir(spec: &StudySpec) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => spec.output_dir.clone(),
    }
}

/// Runs (or resumes) a study and writes all of its output files.
///
/// Cells already present in the output directory's store are skipped.
/// Pending cells run `workers` at a time; each batch is appended before the
/// next starts, so an interrupted study keeps its finished cells.
pub fn run_study(spec: &StudySpec, options: RunOptions) -> Result<StudyResult> {
    spec.validate()?;
    let dir = output_dir(spec);
    let mut store = ResultStore::open(&dir)?;
    let cells = study_cells(spec);
    let pending: Vec<&CellKey> = cells.iter().filter(|k| !store.contains(k)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    for chunk in pending.chunks(spec.workers) {
        let records: Vec<CellRecord> = pool.install(|| {
            chunk
                .par_iter()
                .map(|key| run_cell(spec, key, options))
                .collect::<Result<_>>()
        })?;
        store.append(records)?;
    }

    let mut rows = Vec::with_capacity(cells.len());
    let mut curves = BTreeMap::new();
    for key in &cells {
        let record = store
            .get(key)
            .ok_or_else(|| Error::Integrity(format!("missing cell {key:?}")))?;
        rows.push(record.row.clone());
        if !record.curve.is_empty() {
            curves.insert(key.clone(), record.curve.clone());
        }
    }
    let result = StudyResult {
        spec: spec.clone(),
        summary: summarize(&rows),
        rows,
        curves,
        output_dir: dir,
    };
    report::write_outputs(&result)?;
    Ok(result)
}

fn require(spec: &StudySpec, kind: StudyKind) -> Result<()> {
    if spec.study_kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind} study, got {}",
            spec.study_kind
        )));
    }
    Ok(())
}

pub fn run_histogram_study(spec: &StudySpec, options: RunOptions) -> Result<StudyResult> {
    require(spec, StudyKind::Histogram)?;
    run_study(spec, options)
}

pub fn run_scatter_study(spec: &StudySpec, options: RunOptions) -> Result<StudyResult> {
    require(spec, StudyKind::Scatter)?;
    run_study(spec, options)
}

pub fn run_seed_table_study(spec: &StudySpec, options: RunOptions) -> Result<StudyResult> {
    require(spec, StudyKind::SeedTable)?;
    run_study(spec, options)
}

pub fn run_comparison_study(spec: &StudySpec, options: RunOptions) -> Result<StudyResult> {
    require(spec, StudyKind::Comparison)?;
    run_study(spec, options)
}
