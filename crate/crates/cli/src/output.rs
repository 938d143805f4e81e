//! CSV tables with `#`-prefixed metadata lines.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Formats a float so that it round-trips and stays compact.
pub fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e6) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), ..Self::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.into(), value.to_string()));
        self
    }

    pub fn row(&mut self, fields: Vec<String>) {
        debug_assert_eq!(fields.len(), self.header.len());
        self.rows.push(fields);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes only the `#` metadata lines.
    pub fn write_meta<W: Write>(&self, w: &mut W) -> Result<(), CliError> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CliError> {
        self.write_meta(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&self.header)?;
        for r in &self.rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(name);
        self.write_to(BufWriter::new(File::create(&path)?))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}
