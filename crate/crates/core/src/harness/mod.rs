//! Multi-seed experiment driver: study configuration, a resumable result
//! store, the four studies, and their output files.

use std::path::Path;

use crate::{Error, Result};

pub mod config;
pub mod report;
pub mod store;
pub mod studies;

pub use config::{load_config, InitSection, StudyKind, StudySpec};
pub use report::emit_plot_data;
pub use store::{Arm, CellKey, ResultStore, StudyRow};
pub use studies::{
    run_comparison_study, run_histogram_study, run_scatter_study, run_seed_table_study, run_study,
    ArmSummary, RunOptions, StudyResult,
};

/// CSV writer with `\n` line endings.
pub fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::storage(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}
