//! Deterministic artifact writers.
//!
//! CSV files start with `#` comment lines carrying the tool version, the
//! SHA-256 of the resolved configuration, the seed and the configuration
//! itself. JSON files carry the same record under a leading `"provenance"`
//! key. Floats use the shortest representation that round-trips. Files are
//! written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Identifies the code and inputs that produced an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: String,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let text = config.resolved().to_toml();
        let digest = Sha256::digest(text.as_bytes());
        Self {
            tool: "lente".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: config.seed,
            config: text,
        }
    }

    fn comment_block(&self) -> String {
        let mut s = format!(
            "# {} {}\n# command {}\n# config-sha256 {}\n# seed {}\n# config:\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        );
        for line in self.config.lines() {
            s.push_str("#   ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

/// A cell of a [`Table`].
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::UInt(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(v) => v.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::UInt(v) => json!(v),
            // NaN and infinities have no JSON literal
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(format_float(*v)),
            Cell::Text(v) => json!(v),
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
        Cell::UInt(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

/// Shortest round-trip decimal; `inf`, `-inf`, `NaN` spelled out.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

/// Rectangular data with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, provenance: &Provenance) -> Result<Vec<u8>, CliError> {
        let mut out = provenance.comment_block().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns).map_err(io)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn to_json_value(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, Value> =
                    self.columns.iter().cloned().zip(r.iter().map(Cell::to_json)).collect();
                Value::Object(obj)
            })
            .collect();
        json!(rows)
    }
}

fn io(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// An artifact ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Table(Table),
    /// Always written as JSON.
    Report { name: String, value: Value },
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Table(t) => &t.name,
            Artifact::Report { name, .. } => name,
        }
    }

    /// File extension and contents.
    pub fn render(&self, format: Format, provenance: &Provenance) -> Result<(&'static str, Vec<u8>), CliError> {
        let json_doc = |data: Value| -> Result<Vec<u8>, CliError> {
            // `provenance` precedes `data` so the record leads the file
            let mut map = serde_json::Map::new();
            map.insert("provenance".into(), serde_json::to_value(provenance).map_err(|e| CliError::Io(e.to_string()))?);
            map.insert("data".into(), data);
            let mut bytes = serde_json::to_vec_pretty(&Value::Object(map)).map_err(|e| CliError::Io(e.to_string()))?;
            bytes.push(b'\n');
            Ok(bytes)
        };
        match (self, format) {
            (Artifact::Table(t), Format::Csv) => Ok(("csv", t.to_csv(provenance)?)),
            (Artifact::Table(t), Format::Json) => Ok(("json", json_doc(t.to_json_value())?)),
            (Artifact::Report { value, .. }, _) => Ok(("json", json_doc(value.clone())?)),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// Writes every artifact into `dir` as `<prefix>_<name>.<ext>` and returns the paths.
pub fn write_all(
    artifacts: &[Artifact],
    dir: &Path,
    prefix: &str,
    format: Format,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let (ext, bytes) = a.render(format, provenance)?;
        let path = dir.join(format!("{prefix}_{}.{ext}", a.name()));
        write_atomic(&path, &bytes)?;
        paths.push(path);
    }
    Ok(paths)
}
