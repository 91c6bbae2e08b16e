//! CSV input and output and feature standardization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Columns of a headered CSV file, selected by name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
}

/// Reads the named columns of a headered CSV file. Errors carry the line number.
pub fn read_columns(bytes: &[u8], columns: &[String], source: &str) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers().map_err(|e| CliError::data(format!("{source}: cannot read header: {e}")))?.clone();
    let mut index = Vec::with_capacity(columns.len());
    for name in columns {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(format!("{source}: no column named '{name}'")))?;
        index.push(pos);
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::data(format!("{source}, line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Vec::with_capacity(index.len());
        for (&j, name) in index.iter().zip(columns) {
            let field = record.get(j).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                CliError::data(format!("{source}, line {line}: column '{name}' holds '{field}', not a number"))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!("{source}, line {line}: column '{name}' is not finite")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Table { rows })
}

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// CSV text from a header and numeric rows; values use the shortest round-trip representation.
pub fn write_csv(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
}

/// `x' = (x - mean) / scale` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Sample mean and population standard deviation; constant features keep unit scale.
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let sd = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| m + s * v).collect()
    }

    /// Volume factor of the map back to original units.
    pub fn jacobian(&self) -> f64 {
        self.scale.iter().product()
    }
}
