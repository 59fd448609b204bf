//! Deterministic artifact emission: `report.json`, `series.csv`,
//! `manifest.json`.
//!
//! Every byte written is a pure function of the config document, so
//! re-running an identical config reproduces identical checksums.  All
//! artifacts are rendered in memory first and written only after the whole
//! run has succeeded — a failing run leaves no partial outputs.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

/// One cell of the CSV series.
#[derive(Debug, Clone)]
pub enum Cell {
    /// Unsigned integer (horizons, indices, counts).
    Int(u64),
    /// Float, printed with 17 significant digits (`-inf`/`inf`/`nan` as
    /// explicit markers, matching the JSON convention).
    Float(f64),
    /// Boolean flag, printed as `true`/`false`.
    Bool(bool),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Float(v) => {
                if v.is_finite() {
                    let _ = write!(out, "{v:.16e}");
                } else if v.is_nan() {
                    out.push_str("nan");
                } else if *v > 0.0 {
                    out.push_str("inf");
                } else {
                    out.push_str("-inf");
                }
            }
            Cell::Bool(v) => {
                let _ = write!(out, "{v}");
            }
        }
    }
}

/// CSV series: `# key: value` metadata comments, a header row, then data
/// rows.  Comma-separated, `.` decimal, LF line endings.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    comments: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            comments: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, key: &str, value: impl ToString) {
        self.comments.push((key.to_string(), value.to_string()));
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.header.len(), "ragged CSV row");
        self.rows.push(cells);
    }

    /// Renders the full file contents.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.comments {
            let _ = writeln!(out, "# {key}: {value}");
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance record emitted for every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Version of this binary.
    pub artifact_version: &'static str,
    pub subcommand: String,
    /// SHA-256 of the exact config document that defined the run.
    pub config_sha256: String,
    /// Identifier of the seeded RNG pipeline.
    pub rng_algorithm: &'static str,
    /// Nominal driving steps consumed (horizon × trial counts).
    pub logical_steps: u64,
    /// Duration of the run; informational only, not covered by the
    /// reproducibility contract.
    pub wall_clock_ms: u64,
    /// Checksums of the sibling artifacts, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

/// Everything a finished run wants written to disk.
pub struct RunArtifacts {
    pub subcommand: String,
    pub config_sha256: String,
    /// Subcommand-specific results; wrapped in a versioned envelope.
    pub results: serde_json::Value,
    pub series: Option<Csv>,
    pub logical_steps: u64,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Serialize)]
struct ReportEnvelope<'a> {
    schema_version: u32,
    subcommand: &'a str,
    results: &'a serde_json::Value,
}

fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialization");
    bytes.push(b'\n');
    bytes
}

impl RunArtifacts {
    /// Writes `report.json`, optionally `series.csv`, and `manifest.json`
    /// into `dir`, returning the per-output checksum map.
    pub fn write(&self, dir: &Path, want_series: bool) -> io::Result<BTreeMap<String, String>> {
        let report = pretty_json(&ReportEnvelope {
            schema_version: crate::config::SCHEMA_VERSION,
            subcommand: &self.subcommand,
            results: &self.results,
        });
        let series = match (&self.series, want_series) {
            (Some(csv), true) => Some(csv.render().into_bytes()),
            _ => None,
        };

        let mut outputs = BTreeMap::new();
        outputs.insert("report.json".to_string(), sha256_hex(&report));
        if let Some(bytes) = &series {
            outputs.insert("series.csv".to_string(), sha256_hex(bytes));
        }

        let manifest = RunManifest {
            schema_version: crate::config::SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand.clone(),
            config_sha256: self.config_sha256.clone(),
            rng_algorithm: metlab::rng::ALGORITHM_ID,
            logical_steps: self.logical_steps,
            wall_clock_ms: self.wall_clock_ms,
            outputs: outputs.clone(),
        };

        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), &report)?;
        if let Some(bytes) = &series {
            fs::write(dir.join("series.csv"), bytes)?;
        }
        fs::write(dir.join("manifest.json"), pretty_json(&manifest))?;
        Ok(outputs)
    }
}
