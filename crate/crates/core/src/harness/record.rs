//! Trajectory CSV files and their JSON header sidecars.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRow;
use crate::error::{Error, Result};

pub const SCHEMA: &str = "qstab-trajectory/1";

/// Metadata written next to every trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub code_version: String,
    pub name: String,
    /// Canonical `key = value` text of the resolved config.
    pub config: String,
    pub columns: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub gamma: f64,
    pub k: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub stride: u64,
    pub t_final: f64,
    pub rows: usize,
    pub steps: Option<u64>,
    pub sup_gap: Option<f64>,
    pub max_drift_eps: Option<f64>,
    pub max_drift_av: Option<f64>,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub exit_code: i32,
}

/// `run.csv` -> `run.header.json`
pub fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("header.json")
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    create_parent(path)?;
    let tmp = tmp_path(path);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Streams rows into a temp file; [`RecordWriter::finish`] moves it into place.
pub struct RecordWriter {
    path: PathBuf,
    tmp: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        create_parent(path)?;
        let tmp = tmp_path(path);
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer
            .write_record(TrajectoryRow::COLUMNS)
            .map_err(|e| csv_error(&tmp, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            tmp,
            writer,
        })
    }

    pub fn write_row(&mut self, row: &TrajectoryRow) -> Result<()> {
        let fields = row.values().map(|v| format!("{v:.16e}"));
        self.writer
            .write_record(&fields)
            .map_err(|e| csv_error(&self.tmp, e))
    }

    /// Flushes, renames the CSV into place and writes the header sidecar.
    pub fn finish(self, header: &TrajectoryHeader) -> Result<PathBuf> {
        let Self { path, tmp, writer } = self;
        let mut inner = writer.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        inner.flush().map_err(|e| Error::io(&tmp, e))?;
        drop(inner);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        let json = serde_json::to_vec_pretty(header).map_err(|e| Error::Record {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        write_atomic(&header_path(&path), &json)?;
        Ok(path)
    }
}

pub fn read_header(path: &Path) -> Result<TrajectoryHeader> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// A numeric CSV table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Record {
                        path: path.to_path_buf(),
                        reason: format!("row {}: non-numeric field {f:?}", i + 1),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Record {
                path: self.path.clone(),
                reason: format!("missing column {name:?} (have {})", self.columns.join(", ")),
            })?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}
