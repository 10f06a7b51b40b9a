//! Serialized reports and tables.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use fbmlab_core::Error;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Non-deterministic fields, excluded from the determinism hash.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub timestamp_unix: u64,
    pub wall_clock_seconds: f64,
}

impl Timing {
    pub fn now(wall_clock_seconds: f64) -> Self {
        let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { timestamp_unix, wall_clock_seconds }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Hashed<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a Value,
    results: &'a Value,
    pass: Option<bool>,
}

/// Everything a run produced. Keys of `config` and `results` are emitted in
/// sorted order.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub results: Value,
    pub pass: Option<bool>,
    /// SHA-256 of the canonical JSON of all fields except `timing`.
    pub determinism_hash: String,
    pub timing: Timing,
}

impl ExperimentReport {
    pub fn new(command: &str, config: Value, results: Value, pass: Option<bool>, seconds: f64) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let determinism_hash = digest(&Hashed { command, version: &version, config: &config, results: &results, pass });
        Self {
            command: command.to_string(),
            version,
            config,
            results,
            pass,
            determinism_hash,
            timing: Timing::now(seconds),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }
}

/// Lower-case hex SHA-256 of the compact JSON encoding of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("hash input serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A header row plus numeric records.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let io = |e: csv::Error| Error::Usage(format!("cannot write '{}': {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(io)?;
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            // normalise negative zero so tables diff cleanly
            w.write_record(row.iter().map(|&v| if v == 0.0 { 0.0 } else { v }.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Usage(format!("cannot write '{}': {e}", path.display())))
    }
}
