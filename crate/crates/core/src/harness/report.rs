//! Per-seed result rows, per-cell means and their CSV encoding.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// What happened in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Ok,
    /// Not run by policy, e.g. matrix entries outside the format's range.
    Skipped(String),
    /// Run but failed numerically.
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped(_) => "skipped",
            CellStatus::Failed(_) => "error",
        }
    }

    pub fn note(&self) -> &str {
        match self {
            CellStatus::Ok => "",
            CellStatus::Skipped(m) | CellStatus::Failed(m) => m,
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, CellStatus::Ok)
    }
}

/// How a value column is printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Float,
    Int,
    Bool,
}

/// One per-seed record. `values` line up with the report's value columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Cell identity without the seed: problem, n, k, up and (for
    /// preconditioning runs) mu.
    pub key: Vec<String>,
    pub seed: u64,
    pub status: CellStatus,
    pub values: Vec<Option<f64>>,
}

/// Means over the `ok` rows of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub key: Vec<String>,
    pub count: usize,
    pub means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// File stem, e.g. `approx` or `precond`.
    pub name: String,
    pub key_columns: Vec<&'static str>,
    pub value_columns: Vec<(&'static str, ColumnKind)>,
    pub rows: Vec<Row>,
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExperimentReport {
    pub fn new(name: &str, key_columns: Vec<&'static str>, value_columns: Vec<(&'static str, ColumnKind)>) -> Self {
        Self {
            name: name.to_string(),
            key_columns,
            value_columns,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.value_columns.iter().position(|(c, _)| *c == name)
    }

    /// Value of column `name` in `row`.
    pub fn value(&self, row: &Row, name: &str) -> Option<f64> {
        self.column(name).and_then(|i| row.values[i])
    }

    /// Cells in first-appearance order with the mean of every value column
    /// over rows with status `ok`. A column's mean is absent when any ok
    /// row lacks the value.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut cells: Vec<(Vec<String>, Vec<&Row>)> = Vec::new();
        for row in &self.rows {
            match cells.iter_mut().find(|(k, _)| *k == row.key) {
                Some((_, rows)) => rows.push(row),
                None => cells.push((row.key.clone(), vec![row])),
            }
        }
        cells
            .into_iter()
            .map(|(key, rows)| {
                let ok: Vec<&Row> = rows.into_iter().filter(|r| r.status.is_ok()).collect();
                let means = (0..self.value_columns.len())
                    .map(|c| {
                        if ok.is_empty() {
                            return None;
                        }
                        let mut sum = 0.0;
                        for r in &ok {
                            sum += r.values[c]?;
                        }
                        Some(sum / ok.len() as f64)
                    })
                    .collect();
                Aggregate {
                    key,
                    count: ok.len(),
                    means,
                }
            })
            .collect()
    }

    /// Mean of column `name` for the cell whose key matches `key`.
    pub fn mean(&self, key: &[&str], name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.aggregates()
            .into_iter()
            .find(|a| a.key.iter().map(String::as_str).eq(key.iter().copied()))
            .and_then(|a| a.means[c])
    }

    fn rows_header(&self) -> Vec<&str> {
        let mut h: Vec<&str> = self.key_columns.clone();
        h.push("seed");
        h.extend(self.value_columns.iter().map(|(c, _)| *c));
        h.push("status");
        h.push("note");
        h
    }

    fn aggregates_header(&self) -> Vec<&str> {
        let mut h: Vec<&str> = self.key_columns.clone();
        h.push("count");
        h.extend(self.value_columns.iter().map(|(c, _)| *c));
        h
    }

    fn encode(&self, kind: ColumnKind, v: Option<f64>) -> String {
        match (kind, v) {
            (_, None) => String::new(),
            (ColumnKind::Float, Some(x)) => fmt_float(x),
            (ColumnKind::Int, Some(x)) => format!("{}", x as i64),
            (ColumnKind::Bool, Some(x)) => (x != 0.0).to_string(),
        }
    }

    /// Write `<dir>/<name>_rows.csv` and `<dir>/<name>_aggregates.csv`.
    pub fn emit_csv(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rows_path = dir.join(format!("{}_rows.csv", self.name));
        let agg_path = dir.join(format!("{}_aggregates.csv", self.name));

        let csv_err = |path: &Path| {
            let path = path.to_path_buf();
            move |e: csv::Error| Error::io(&path, std::io::Error::other(e))
        };

        let mut w = csv::Writer::from_path(&rows_path).map_err(csv_err(&rows_path))?;
        w.write_record(self.rows_header()).map_err(csv_err(&rows_path))?;
        for row in &self.rows {
            let mut rec = row.key.clone();
            rec.push(row.seed.to_string());
            for ((_, kind), v) in self.value_columns.iter().zip(&row.values) {
                rec.push(self.encode(*kind, *v));
            }
            rec.push(row.status.label().to_string());
            rec.push(row.status.note().to_string());
            w.write_record(&rec).map_err(csv_err(&rows_path))?;
        }
        w.flush().map_err(|e| Error::io(&rows_path, e))?;

        let mut w = csv::Writer::from_path(&agg_path).map_err(csv_err(&agg_path))?;
        w.write_record(self.aggregates_header()).map_err(csv_err(&agg_path))?;
        for agg in self.aggregates() {
            let mut rec = agg.key.clone();
            rec.push(agg.count.to_string());
            // means of integer and boolean columns are fractional
            rec.extend(agg.means.iter().map(|m| m.map(fmt_float).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err(&agg_path))?;
        }
        w.flush().map_err(|e| Error::io(&agg_path, e))?;
        Ok((rows_path, agg_path))
    }
}
