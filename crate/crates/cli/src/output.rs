use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Version of every CSV layout; bumped whenever a column changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Shortest round-trip text; exponent form outside `[1e-4, 1e15)`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
            Cell::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Schema name and file stem.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn schema_line(&self) -> String {
        format!("# rwre-schema: {}/v{SCHEMA_VERSION}", self.name)
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, CliError> {
        let mut buf = format!("{}\n", self.schema_line()).into_bytes();
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub module: String,
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
    pub seed_generated: bool,
    pub started: String,
    pub finished: String,
    pub wall_time_secs: f64,
    pub status: &'static str,
    pub failure: Option<Failure>,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `tables` as `<out>/<name>.csv` and returns their manifest entries.
pub fn write_tables(out: &Path, tables: &[Table]) -> Result<Vec<FileEntry>, CliError> {
    std::fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(tables.len());
    for t in tables {
        let bytes = t.to_csv_bytes()?;
        let path: PathBuf = out.join(format!("{}.csv", t.name));
        std::fs::write(&path, &bytes)?;
        entries.push(FileEntry {
            path: path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            sha256: sha256_hex(&bytes),
            rows: t.rows.len(),
        });
    }
    Ok(entries)
}

pub fn manifest_path(out: &Path, command: &str) -> PathBuf {
    out.join(format!("{}.manifest.json", command.replace(' ', "_")))
}

pub fn write_manifest(out: &Path, m: &RunManifest) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    let path = manifest_path(out, &m.command);
    let text = serde_json::to_string_pretty(m).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}
