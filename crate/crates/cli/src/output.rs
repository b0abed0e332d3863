//! CSV tables and the metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Full double precision: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything an experiment produced.
#[derive(Debug, Default)]
pub struct Outputs {
    pub tables: Vec<(String, Table)>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Outputs {
    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.into(), serde_json::to_value(value).expect("summary values serialize"));
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a ExperimentConfig,
    files: Vec<String>,
    summary: &'a serde_json::Map<String, serde_json::Value>,
}

/// Writes every table and `meta.json` into `dir`; returns the written paths.
pub fn write_all(dir: &Path, cfg: &ExperimentConfig, seed: u64, out: &Outputs) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, table) in &out.tables {
        let p = dir.join(format!("{name}.csv"));
        table.write(&p)?;
        written.push(p);
    }
    let meta = Meta {
        tool: "z2lgt",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: cfg,
        files: out.tables.iter().map(|(n, _)| format!("{n}.csv")).collect(),
        summary: &out.summary,
    };
    let p = dir.join("meta.json");
    fs::write(&p, serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")?;
    written.push(p);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        let back: f64 = num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }
}
