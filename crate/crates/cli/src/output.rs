//! Result tables with provenance metadata.
//!
//! CSV files start with `#` comment lines carrying the build, seed and
//! config hash; JSON output is newline-delimited with the metadata object
//! first. Nothing time-dependent is written, so reruns are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Meta {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tool", format!("photonwire {}", env!("CARGO_PKG_VERSION"))),
            ("build", env!("PHOTONWIRE_GIT_DESCRIBE").to_string()),
            ("command", self.command.clone()),
            ("seed", self.seed.to_string()),
            ("config_sha256", self.config_hash.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, meta: &Meta, format: Format) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        match format {
            Format::Csv => {
                for (k, v) in meta.pairs() {
                    writeln!(out, "# {k}: {v}").map_err(CliError::io)?;
                }
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut out);
                w.write_record(&self.columns)
                    .map_err(|e| CliError::io(e.into()))?;
                for r in &self.rows {
                    w.write_record(r.iter().map(Cell::csv))
                        .map_err(|e| CliError::io(e.into()))?;
                }
                w.flush().map_err(CliError::io)?;
            }
            Format::Json => {
                let m: Map<String, Value> = meta
                    .pairs()
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), Value::from(v)))
                    .collect();
                let mut head = Map::new();
                head.insert("meta".into(), Value::Object(m));
                writeln!(out, "{}", Value::Object(head)).map_err(CliError::io)?;
                for r in &self.rows {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    writeln!(out, "{}", Value::Object(obj)).map_err(CliError::io)?;
                }
            }
        }
        Ok(out)
    }

    /// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.jsonl`.
    pub fn write(
        &self,
        dir: &Path,
        stem: &str,
        meta: &Meta,
        format: Format,
    ) -> Result<PathBuf, CliError> {
        let ext = match format {
            Format::Csv => "csv",
            Format::Json => "jsonl",
        };
        let path = dir.join(format!("{stem}.{ext}"));
        write_bytes(&path, &self.render(meta, format)?)?;
        Ok(path)
    }
}

/// Pretty JSON document with the metadata merged in.
pub fn write_json(path: &Path, meta: &Meta, body: Map<String, Value>) -> Result<(), CliError> {
    let mut doc: Map<String, Value> = meta
        .pairs()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::from(v)))
        .collect();
    doc.extend(body);
    let mut text =
        serde_json::to_string_pretty(&Value::Object(doc)).map_err(|e| CliError::io(e.into()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io)?;
    }
    fs::write(path, bytes).map_err(CliError::io)
}
