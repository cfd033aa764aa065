//! Run directory management and artifact serialization.
//!
//! Every run owns a directory `<out>/<experiment>-<hash8>/` that receives
//! CSV tables and a `report.json`, followed by a `manifest.json` written
//! last. The manifest lists each artifact with its SHA-256 checksum, so
//! identical reruns can be compared file by file; it is also the only
//! place timestamps appear, keeping all other artifacts bitwise
//! reproducible for a fixed config and seed.
//!
//! Floating-point values are serialized with 17 significant digits
//! (scientific notation), enough to round-trip `f64` exactly.

use crate::outcome::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Formats a float with 17 significant digits; infinities and NaN, which
/// JSON cannot carry, become `null` (they should not reach a report).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// Formats a float for CSV cells: same 17 significant digits, with
/// non-finite values spelled out.
pub fn fmt_csv(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Serializes a value to JSON text with sorted keys, two-space indent,
/// and 17-significant-digit floats.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String, CliError> {
    let value = serde_json::to_value(value)
        .map_err(|e| CliError::Internal(format!("json serialization failed: {e}")))?;
    let mut out = String::new();
    write_value(&value, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_value(value: &serde_json::Value, indent: usize, out: &mut String) {
    match value {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        serde_json::Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        serde_json::Value::String(s) => {
            out.push_str(&serde_json::Value::String(s.clone()).to_string());
        }
        serde_json::Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(indent + 1, out);
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            pad(indent, out);
            out.push(']');
        }
        serde_json::Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push('\n');
                pad(indent + 1, out);
                out.push_str(&serde_json::Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(item, indent + 1, out);
            }
            out.push('\n');
            pad(indent, out);
            out.push('}');
        }
    }
}

fn pad(indent: usize, out: &mut String) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// One emitted file, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ArtifactRecord {
    /// File name within the run directory.
    pub name: String,
    /// Size in bytes.
    pub bytes: u64,
    /// SHA-256 of the file contents, lowercase hex.
    pub sha256: String,
}

/// A run directory accumulating artifacts; [`RunDir::finish`] writes the
/// manifest last.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    records: Vec<ArtifactRecord>,
    started_unix_ms: u64,
}

/// Manifest schema: config identity, code version, seed, wall-clock
/// bounds, and the artifact list with checksums.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    code_version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    started_unix_ms: u64,
    finished_unix_ms: u64,
    artifacts: &'a [ArtifactRecord],
}

fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RunDir {
    /// Creates the run directory, refusing to touch an existing one
    /// unless `force` is set (in which case it is removed first, so no
    /// stale artifacts survive).
    pub fn prepare(path: PathBuf, force: bool) -> Result<Self, CliError> {
        if path.exists() {
            if !force {
                return Err(CliError::Config(format!(
                    "output directory {} already exists; pass --force to overwrite",
                    path.display()
                )));
            }
            fs::remove_dir_all(&path)?;
        }
        fs::create_dir_all(&path)?;
        Ok(Self { path, records: Vec::new(), started_unix_ms: now_unix_ms() })
    }

    /// Absolute path of the run directory.
    pub fn path(&self) -> &Path {
        &self.path
    }

    fn store(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let digest = Sha256::digest(bytes);
        let sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        fs::write(self.path.join(name), bytes)?;
        self.records.push(ArtifactRecord {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256,
        });
        Ok(())
    }

    /// Writes a JSON artifact with canonical formatting.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = to_json_17(value)?;
        self.store(name, text.as_bytes())
    }

    /// Writes a CSV artifact from a header and pre-formatted rows.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header)
            .map_err(|e| CliError::Internal(format!("csv write failed: {e}")))?;
        for row in rows {
            writer
                .write_record(row)
                .map_err(|e| CliError::Internal(format!("csv write failed: {e}")))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::Internal(format!("csv write failed: {e}")))?;
        self.store(name, &bytes)
    }

    /// Writes the manifest (last) and returns the artifact records.
    pub fn finish(
        mut self,
        config_hash: &str,
        seed: Option<u64>,
    ) -> Result<Vec<ArtifactRecord>, CliError> {
        let manifest = Manifest {
            config_hash,
            code_version: env!("CARGO_PKG_VERSION"),
            seed,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: now_unix_ms(),
            artifacts: &self.records,
        };
        let text = to_json_17(&manifest)?;
        fs::write(self.path.join("manifest.json"), text.as_bytes())?;
        Ok(std::mem::take(&mut self.records))
    }
}
