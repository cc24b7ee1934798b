//! Append-only, write-once result store backing resumable studies.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ROWS_FILE: &str = "rows.csv";
pub const CURVES_FILE: &str = "curves.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Default,
    Proposed,
}

impl Arm {
    /// Stream tag separating the arms' seed lineages.
    pub fn tag(self) -> u64 {
        match self {
            Arm::Default => 0xDEFA_0017,
            Arm::Proposed => 0x960F_05ED,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::Default => "default",
            Arm::Proposed => "proposed",
        })
    }
}

/// Identity of one study cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub seed_index: usize,
    pub env_id: String,
    pub arm: Arm,
}

/// One (seed, env, arm) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub seed_index: usize,
    pub seed: u64,
    pub env_id: String,
    pub arm: Arm,
    /// Entropy of the model that was trained (last candidate if exhausted).
    pub initial_entropy: f64,
    /// Empty when the cell was not trained, diverged, or was exhausted.
    pub final_reward: Option<f64>,
    pub failed: bool,
    pub exhausted: bool,
    pub diverged: bool,
    pub init_attempts: usize,
    pub init_seconds: f64,
    pub train_seconds: f64,
}

impl StudyRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            seed_index: self.seed_index,
            env_id: self.env_id.clone(),
            arm: self.arm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub seed_index: usize,
    pub env_id: String,
    pub arm: Arm,
    pub iteration: usize,
    pub mean_return: f64,
    pub episodes: usize,
}

/// A finished cell: its row and, if it trained, its learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub row: StudyRow,
    pub curve: Vec<(f64, usize)>,
}

/// Rows and curves persisted under one output directory.
///
/// Keys are write-once: appending a key that is already stored is an
/// integrity error, and callers resume a study by skipping stored keys.
#[derive(Debug)]
pub struct ResultStore {
    dir: PathBuf,
    cells: BTreeMap<CellKey, CellRecord>,
}

impl ResultStore {
    /// Opens `dir`, creating it if needed and loading any stored cells.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
        let mut cells = BTreeMap::new();
        let rows_path = dir.join(ROWS_FILE);
        if rows_path.exists() {
            let mut reader = csv::Reader::from_path(&rows_path)?;
            for row in reader.deserialize::<StudyRow>() {
                let row = row?;
                let key = row.key();
                if cells.contains_key(&key) {
                    return Err(Error::Integrity(format!("duplicate stored row {key:?}")));
                }
                cells.insert(key, CellRecord { row, curve: Vec::new() });
            }
        }
        let curves_path = dir.join(CURVES_FILE);
        if curves_path.exists() {
            let mut reader = csv::Reader::from_path(&curves_path)?;
            for point in reader.deserialize::<CurveRow>() {
                let point = point?;
                let key = CellKey {
                    seed_index: point.seed_index,
                    env_id: point.env_id,
                    arm: point.arm,
                };
                let cell = cells
                    .get_mut(&key)
                    .ok_or_else(|| Error::Integrity(format!("curve point without a row: {key:?}")))?;
                if point.iteration != cell.curve.len() {
                    return Err(Error::Integrity(format!("curve of {key:?} is out of order")));
                }
                cell.curve.push((point.mean_return, point.episodes));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            cells,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.cells.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, key: &CellKey) -> Option<&CellRecord> {
        self.cells.get(key)
    }

    /// Stored cells in key order.
    pub fn cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.values()
    }

    /// Appends `records` in the given order.
    pub fn append(&mut self, records: Vec<CellRecord>) -> Result<()> {
        for record in &records {
            if self.cells.contains_key(&record.row.key()) {
                return Err(Error::Integrity(format!(
                    "row {:?} is already stored",
                    record.row.key()
                )));
            }
        }
        let mut rows = self.appender(ROWS_FILE)?;
        let mut curves = self.appender(CURVES_FILE)?;
        for record in &records {
            rows.serialize(&record.row)?;
            for (iteration, &(mean_return, episodes)) in record.curve.iter().enumerate() {
                curves.serialize(CurveRow {
                    seed_index: record.row.seed_index,
                    env_id: record.row.env_id.clone(),
                    arm: record.row.arm,
                    iteration,
                    mean_return,
                    episodes,
                })?;
            }
        }
        rows.flush().map_err(|e| Error::storage(&self.dir.join(ROWS_FILE), e))?;
        curves
            .flush()
            .map_err(|e| Error::storage(&self.dir.join(CURVES_FILE), e))?;
        for record in records {
            self.cells.insert(record.row.key(), record);
        }
        Ok(())
    }

    fn appender(&self, name: &str) -> Result<csv::Writer<File>> {
        let path = self.dir.join(name);
        let fresh = std::fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::storage(&path, e))?;
        Ok(csv::WriterBuilder::new()
            .has_headers(fresh)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(file))
    }
}
