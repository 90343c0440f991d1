//! Result tables, the run manifest, and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{Map, Value as Json};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// 17 significant digits, `.` decimal separator.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// Column-labeled table written as one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn float_column(&self, name: &str) -> Option<Vec<f64>> {
        self.column(name).map(|c| {
            c.into_iter()
                .map(|v| match v {
                    Cell::Float(x) => *x,
                    Cell::Int(i) => *i as f64,
                    Cell::Text(_) => f64::NAN,
                })
                .collect()
        })
    }
}

/// Pushes the real and imaginary parts as two cells.
pub fn complex_cells(z: Complex64) -> [Cell; 2] {
    [Cell::Float(z.re), Cell::Float(z.im)]
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub artifact: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub seed: u64,
    pub n_max: usize,
    pub n_ref: usize,
    /// Truncation error of the first harmonic at the configured point.
    pub epsilon_n: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub summary: Map<String, Json>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl ResultBundle {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Json::as_f64)
    }

    pub fn manifest(&self) -> Json {
        let tables: Vec<Json> = self
            .tables
            .iter()
            .map(|t| {
                serde_json::json!({
                    "name": t.name,
                    "file": format!("{}.csv", t.name),
                    "columns": t.columns,
                    "rows": t.rows.len(),
                })
            })
            .collect();
        serde_json::json!({
            "provenance": self.provenance,
            "config": self.config,
            "summary": self.summary,
            "warnings": self.warnings,
            "tables": tables,
        })
    }

    /// Writes every table, the manifest and the resolved config into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        for t in &self.tables {
            let p = dir.join(format!("{}.csv", t.name));
            write_atomic(&p, t.to_csv().as_bytes())?;
            written.push(p);
        }
        let p = dir.join("config.toml");
        write_atomic(&p, self.config.to_toml_string().as_bytes())?;
        written.push(p);
        let p = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        write_atomic(&p, text.as_bytes())?;
        written.push(p);
        Ok(written)
    }
}

/// Write to a sibling temp file, sync, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}
