//! Result files: manifest, summary JSON, and CSV tables.
//!
//! The contract is byte-level determinism: running the same experiment
//! with the same config and seed must reproduce every CSV byte for byte.
//! Three choices make that hold without effort elsewhere — floats are
//! formatted through one shortest-roundtrip path, JSON maps are sorted
//! (serde_json's default `BTreeMap` backing), and replicate rows are
//! emitted in index order regardless of worker scheduling.

use std::fs;
use std::path::Path;
use std::process::Command;

use serde::Serialize;

use crate::CliError;

/// Format version of `summary.json` and `manifest.json`.  Bump on any
/// breaking change to key names or table columns.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    /// `git describe` of the build tree, or "unknown" outside a checkout.
    pub build: String,
    /// The fully resolved config, defaults included.
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new<C: Serialize>(experiment: &str, seed: u64, config: &C) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            build: build_describe(),
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }
}

/// Best-effort build identifier; experiments must not depend on it.
pub fn build_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

/// One CSV output: a header and pre-formatted rows.  Cells are strings so
/// the float formatting decision is made exactly once, by the producer.
#[derive(Debug, Clone)]
pub struct Table {
    /// File stem; written as `<name>.csv`.
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width does not match header of table {}",
            self.name
        );
        self.rows.push(row);
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Everything one experiment run produces.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub manifest: RunManifest,
    pub summary: serde_json::Value,
    pub tables: Vec<Table>,
    /// Replicates that failed and were aggregated out; drives exit code 2.
    pub replicate_failures: usize,
}

impl ResultBundle {
    /// Writes `manifest.json`, `summary.json`, and one CSV per table into
    /// `dir`, creating it if needed.
    pub fn write_all(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), manifest + "\n")?;
        let summary = serde_json::to_string_pretty(&self.summary).expect("summary serializes");
        fs::write(dir.join("summary.json"), summary + "\n")?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv_bytes())?;
        }
        Ok(())
    }
}
