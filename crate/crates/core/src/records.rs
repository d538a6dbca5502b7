//! Tabular results and their CSV / JSON forms.
//!
//! Numbers are written with the shortest representation that round-trips,
//! so reruns of the same configuration produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::{Error, Result};

/// Name and version written into every record.
pub const GENERATOR: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub command: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub generator: String,
    /// Warnings and conventions worth keeping next to the numbers.
    pub notes: Vec<String>,
}

impl ResultRecord {
    pub fn new(config_hash: &str, command: &str, columns: Vec<String>) -> Self {
        Self {
            config_hash: config_hash.to_string(),
            command: command.to_string(),
            columns,
            rows: Vec::new(),
            generator: GENERATOR.to_string(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Invalid(format!(
                "row of {} values for {} columns in {}",
                row.len(),
                self.columns.len(),
                self.command
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").expect("writing to a string");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value in {} output", self.command)));
        }
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<dir>/<stem>.<ext>` for each format and returns the paths.
    pub fn write(&self, dir: &Path, stem: &str, formats: &[Format]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for f in formats {
            let (ext, body) = match f {
                Format::Csv => ("csv", self.to_csv()),
                Format::Json => ("json", self.to_json()?),
            };
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, body)?;
            paths.push(path);
        }
        Ok(paths)
    }
}
