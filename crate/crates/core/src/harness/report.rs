//! Study output files: per-study CSV tables, manifest, and plot data.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{StudyKind, StudySpec};
use super::store::Arm;
use super::studies::{mean, population_std, StudyResult};
use crate::envs::EnvId;
use crate::harness::csv_writer;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const OVERHEAD_FILE: &str = "overhead.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const HISTOGRAM_RAW_FILE: &str = "histogram_raw.csv";
pub const SEED_TABLE_FILE: &str = "seed_table.csv";

/// Histogram bin of `h`: `floor(h / width)`.
pub fn bin_index(h: f64, width: f64) -> usize {
    (h / width).floor().max(0.0) as usize
}

pub fn scatter_file(env_id: &str) -> String {
    format!("scatter_{env_id}.csv")
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    spec: &'a StudySpec,
}

#[derive(Serialize)]
struct SummaryLine {
    arm: Arm,
    runs: usize,
    failure_count: usize,
    exhausted_count: usize,
    diverged_count: usize,
    mean_final_reward: Option<f64>,
    mean_attempts: f64,
    mean_init_sec: f64,
}

#[derive(Serialize)]
struct OverheadLine {
    arm: Arm,
    mean_attempts: f64,
    std_attempts: f64,
    mean_init_sec: f64,
    std_init_sec: f64,
    mean_train_sec: f64,
    std_train_sec: f64,
}

#[derive(Serialize)]
struct RawLine<'a> {
    seed_index: usize,
    seed: u64,
    env_id: &'a str,
    initial_entropy: f64,
}

#[derive(Serialize)]
struct BinLine<'a> {
    env_id: &'a str,
    bin: usize,
    lower: f64,
    upper: f64,
    count: usize,
}

#[derive(Serialize)]
struct ScatterLine {
    seed: usize,
    initial_entropy: f64,
    final_reward: Option<f64>,
    failed: bool,
}

/// Writes the manifest, summary, and study-specific tables, then the plot
/// data files.
pub fn write_outputs(result: &StudyResult) -> Result<()> {
    let dir = &result.output_dir;
    write_manifest(&result.spec, &dir.join(MANIFEST_FILE))?;

    let mut summary = csv_writer(&dir.join(SUMMARY_FILE))?;
    for s in &result.summary {
        summary.serialize(SummaryLine {
            arm: s.arm,
            runs: s.runs,
            failure_count: s.failure_count,
            exhausted_count: s.exhausted_count,
            diverged_count: s.diverged_count,
            mean_final_reward: s.mean_final_reward,
            mean_attempts: s.mean_attempts,
            mean_init_sec: s.mean_init_sec,
        })?;
    }
    flush(summary, &dir.join(SUMMARY_FILE))?;

    match result.spec.study_kind {
        StudyKind::Histogram => write_histogram(result)?,
        StudyKind::Scatter => write_scatter(result)?,
        StudyKind::SeedTable => write_seed_table(result)?,
        StudyKind::Comparison => write_overhead(result)?,
    }
    emit_plot_data(result, result.spec.study_kind)?;
    Ok(())
}

fn flush(mut writer: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    writer.flush().map_err(|e| Error::storage(path, e))
}

fn write_manifest(spec: &StudySpec, path: &Path) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        spec,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::storage(path, e))
}

/// Bin counts for one environment: `(bin, count)` from bin 0 through the
/// bin holding `ln |A|`.
pub fn histogram_counts(entropies: &[f64], width: f64, max_entropy: f64) -> Vec<usize> {
    let last = bin_index(max_entropy, width);
    let mut counts = vec![0; last + 1];
    for &h in entropies {
        counts[bin_index(h, width).min(last)] += 1;
    }
    counts
}

fn env_entropies(result: &StudyResult, env_id: &str) -> Vec<f64> {
    result
        .rows_for(env_id, Arm::Default)
        .map(|r| r.initial_entropy)
        .collect()
}

fn max_entropy(env_id: &str) -> Result<f64> {
    Ok(env_id.parse::<EnvId>()?.action_space().max_entropy())
}

fn write_histogram(result: &StudyResult) -> Result<()> {
    let dir = &result.output_dir;
    let raw_path = dir.join(HISTOGRAM_RAW_FILE);
    let mut raw = csv_writer(&raw_path)?;
    for r in &result.rows {
        raw.serialize(RawLine {
            seed_index: r.seed_index,
            seed: r.seed,
            env_id: &r.env_id,
            initial_entropy: r.initial_entropy,
        })?;
    }
    flush(raw, &raw_path)?;

    let width = result.spec.histogram_bin_width;
    let path = dir.join(HISTOGRAM_FILE);
    let mut out = csv_writer(&path)?;
    for env_id in result.spec.distinct_envs() {
        let counts = histogram_counts(&env_entropies(result, &env_id), width, max_entropy(&env_id)?);
        for (bin, &count) in counts.iter().enumerate() {
            out.serialize(BinLine {
                env_id: &env_id,
                bin,
                lower: bin as f64 * width,
                upper: (bin + 1) as f64 * width,
                count,
            })?;
        }
    }
    flush(out, &path)
}

fn write_scatter(result: &StudyResult) -> Result<()> {
    for env_id in result.spec.distinct_envs() {
        let path = result.output_dir.join(scatter_file(&env_id));
        let mut out = csv_writer(&path)?;
        for r in result.rows_for(&env_id, Arm::Default) {
            out.serialize(ScatterLine {
                seed: r.seed_index,
                initial_entropy: r.initial_entropy,
                final_reward: r.final_reward,
                failed: r.failed,
            })?;
        }
        flush(out, &path)?;
    }
    Ok(())
}

fn write_seed_table(result: &StudyResult) -> Result<()> {
    let path = result.output_dir.join(SEED_TABLE_FILE);
    let mut out = csv_writer(&path)?;
    let envs = &result.spec.env_ids;
    let mut header = vec!["seed".to_string()];
    header.extend(envs.iter().cloned());
    out.write_record(&header)?;
    let columns: Vec<Vec<f64>> = envs.iter().map(|e| env_entropies(result, e)).collect();
    for s in 0..result.spec.seeds() {
        let mut record = vec![s.to_string()];
        record.extend(columns.iter().map(|c| c[s].to_string()));
        out.write_record(&record)?;
    }
    let mut std_row = vec!["STD".to_string()];
    std_row.extend(columns.iter().map(|c| population_std(c).to_string()));
    out.write_record(&std_row)?;
    flush(out, &path)
}

fn write_overhead(result: &StudyResult) -> Result<()> {
    let path = result.output_dir.join(OVERHEAD_FILE);
    let mut out = csv_writer(&path)?;
    for s in &result.summary {
        out.serialize(OverheadLine {
            arm: s.arm,
            mean_attempts: s.mean_attempts,
            std_attempts: s.std_attempts,
            mean_init_sec: s.mean_init_sec,
            std_init_sec: s.std_init_sec,
            mean_train_sec: s.mean_train_sec,
            std_train_sec: s.std_train_sec,
        })?;
    }
    flush(out, &path)
}

/// Mean learning curve of one (env, arm) over the seeds that trained.
pub fn mean_curve(result: &StudyResult, env_id: &str, arm: Arm) -> Vec<f64> {
    let curves: Vec<&Vec<(f64, usize)>> = result
        .curves
        .iter()
        .filter(|(k, _)| k.env_id == env_id && k.arm == arm)
        .map(|(_, c)| c)
        .collect();
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let at: Vec<f64> = curves.iter().filter_map(|c| c.get(i).map(|p| p.0)).collect();
            mean(&at)
        })
        .collect()
}

/// Writes whitespace-separated plot data files (one per environment) and
/// returns their paths.
pub fn emit_plot_data(result: &StudyResult, kind: StudyKind) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for env_id in result.spec.distinct_envs() {
        let (name, text) = match kind {
            StudyKind::Histogram => {
                let width = result.spec.histogram_bin_width;
                let counts = histogram_counts(&env_entropies(result, &env_id), width, max_entropy(&env_id)?);
                let mut text = String::from("# bin_center count\n");
                for (bin, count) in counts.iter().enumerate() {
                    text.push_str(&format!("{} {count}\n", (bin as f64 + 0.5) * width));
                }
                (format!("histogram_{env_id}.dat"), text)
            }
            StudyKind::Scatter => {
                let mut text = String::from("# initial_entropy final_reward\n");
                for r in result.rows_for(&env_id, Arm::Default) {
                    if let Some(f) = r.final_reward {
                        text.push_str(&format!("{} {f}\n", r.initial_entropy));
                    }
                }
                (format!("scatter_{env_id}.dat"), text)
            }
            StudyKind::SeedTable => {
                let mut text = String::from("# seed initial_entropy\n");
                for r in result.rows_for(&env_id, Arm::Default) {
                    text.push_str(&format!("{} {}\n", r.seed_index, r.initial_entropy));
                }
                (format!("seed_table_{env_id}.dat"), text)
            }
            StudyKind::Comparison => {
                let default = mean_curve(result, &env_id, Arm::Default);
                let proposed = mean_curve(result, &env_id, Arm::Proposed);
                let mut text = String::from("# iteration default proposed\n");
                for i in 0..default.len().max(proposed.len()) {
                    let cell = |c: &[f64]| c.get(i).map_or("nan".to_string(), |v| v.to_string());
                    text.push_str(&format!("{i} {} {}\n", cell(&default), cell(&proposed)));
                }
                (format!("comparison_{env_id}.dat"), text)
            }
        };
        let path = result.output_dir.join(name);
        let mut file = std::fs::File::create(&path).map_err(|e| Error::storage(&path, e))?;
        file.write_all(text.as_bytes())
            .map_err(|e| Error::storage(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_examples() {
        assert_eq!(bin_index(0.02, 0.05), 0);
        assert_eq!(bin_index(0.07, 0.05), 1);
        assert_eq!(bin_index(0.0, 0.05), 0);
        let counts = histogram_counts(&[0.02, 0.07, 0.071, 4f64.ln()], 0.05, 4f64.ln());
        assert_eq!(counts.len(), 28);
        assert_eq!((counts[0], counts[1], counts[27]), (1, 2, 1));
        assert_eq!(counts.iter().sum::<usize>(), 4);
    }
}
