//! Delimited-text tables with a header row. Comma or tab delimited,
//! auto-detected from the header line. Values are kept as raw cells so a
//! read-write cycle preserves every untouched column byte for byte;
//! appended numeric columns use Rust's shortest round-trip float formatting.

use anyhow::{bail, Context, Result};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct Table {
    pub delimiter: char,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header_line = lines.next().context("table is empty (no header row)")?;
        let delimiter = if header_line.contains('\t') { '\t' } else { ',' };
        let headers: Vec<String> = header_line
            .split(delimiter)
            .map(|h| h.trim().to_string())
            .collect();
        if headers.iter().any(|h| h.is_empty()) {
            bail!("header row contains an empty column name");
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split(delimiter).map(|c| c.trim().to_string()).collect();
            if cells.len() != headers.len() {
                bail!(
                    "row {} has {} fields, expected {} ({})",
                    i + 2,
                    cells.len(),
                    headers.len(),
                    headers.join(",")
                );
            }
            rows.push(cells);
        }
        if rows.is_empty() {
            bail!("table has a header but no data rows");
        }
        Ok(Table {
            delimiter,
            headers,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read table '{}'", path.display()))?;
        Table::parse(&text).with_context(|| format!("in table '{}'", path.display()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .with_context(|| {
                format!(
                    "required column '{name}' not found; available: {}",
                    self.headers.join(", ")
                )
            })
    }

    /// Parse a column as finite reals, with row/column diagnostics.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let cell = &row[idx];
                let v: f64 = cell.parse().map_err(|_| {
                    anyhow::anyhow!("row {}, column '{name}': '{cell}' is not a number", i + 2)
                })?;
                if !v.is_finite() {
                    bail!("row {}, column '{name}': value must be finite, got {v}", i + 2);
                }
                Ok(v)
            })
            .collect()
    }

    /// Optional label column; falls back to 1-based row numbers.
    pub fn labels_or_default(&self, name: &str) -> Vec<String> {
        match self.headers.iter().position(|h| h == name) {
            Some(idx) => self.rows.iter().map(|r| r[idx].clone()).collect(),
            None => (1..=self.n_rows()).map(|i| i.to_string()).collect(),
        }
    }

    /// Append a column; `values` must cover every row.
    pub fn push_column(&mut self, name: &str, values: Vec<String>) {
        assert_eq!(values.len(), self.rows.len());
        self.headers.push(name.to_string());
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(v);
        }
    }

    pub fn to_text(&self) -> String {
        let sep = self.delimiter.to_string();
        let mut out = self.headers.join(&sep);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(&sep));
            out.push('\n');
        }
        out
    }
}

/// Format a float with Rust's shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
