//! CSV and manifest emission.
//!
//! Every CSV starts with a `# rrl-metrics v1 <table>` comment line followed by
//! a header row. Floats are written in shortest round-trip form, so identical
//! runs produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rrl_core::math::{mean, sem};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const SCHEMA: &str = "rrl-metrics v1";

/// Streaming CSV writer that flushes after every batch.
pub struct CsvSink {
    writer: csv::Writer<BufWriter<File>>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path, table: &str) -> Result<Self> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# {SCHEMA} {table}")?;
        Ok(Self {
            writer: csv::Writer::from_writer(f),
            path: path.to_path_buf(),
        })
    }

    pub fn write<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        for r in rows {
            self.writer.serialize(r)?;
        }
        self.writer.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Writes a whole table at once.
pub fn write_csv<T: Serialize>(path: &Path, table: &str, rows: &[T]) -> Result<()> {
    CsvSink::create(path, table)?.write(rows)
}

/// Mean ± SEM of a metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub sem: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            sem: if xs.len() > 1 { sem(xs) } else { 0.0 },
        }
    }
}

/// Run manifest written next to the CSV outputs.
#[derive(Debug, Serialize)]
pub struct Manifest<S: Serialize> {
    pub schema: &'static str,
    pub experiment: &'static str,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub version: &'static str,
    pub outputs: Vec<String>,
    pub cells: usize,
    pub failures: Vec<String>,
    pub elapsed_secs: f64,
    pub summary: S,
}

impl<S: Serialize> Manifest<S> {
    pub fn new(config: ExperimentConfig, summary: S) -> Self {
        Self {
            schema: SCHEMA,
            experiment: config.name(),
            config_hash: config.hash(),
            config,
            version: env!("CARGO_PKG_VERSION"),
            outputs: Vec::new(),
            cells: 0,
            failures: Vec::new(),
            elapsed_secs: 0.0,
            summary,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}
