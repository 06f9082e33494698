//! Plot-ready output files.
//!
//! Tables are written as CSV (one header row, metadata in `#` comment lines)
//! or as a JSON array of row objects. Single records are JSON objects. The
//! generation timestamp is the only field allowed to differ between two runs
//! of the same configuration; [`data_section`] strips it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::{OutputFormat, RunConfig, CONFIG_LINE_PREFIX};
use crate::error::CliError;

pub const TOOL_NAME: &str = "qcm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const TIMESTAMP_KEY: &str = "generated_at";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            // 17 significant digits: every double survives a text round trip.
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Float(_) | Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key: value` metadata lines.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.push((key.to_string(), value.into()));
    }
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn render_csv(table: &Table, config: &RunConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# tool: {TOOL_NAME} {TOOL_VERSION} (qcm-core {})\n",
        qcm_core::VERSION
    ));
    out.push_str(&format!("# seed: {}\n", config.seed));
    for (k, v) in &table.notes {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str(&format!("{CONFIG_LINE_PREFIX}{}\n", config.to_json()));
    out.push_str(&format!("# {TIMESTAMP_KEY}: {}\n", timestamp()));
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::csv).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn envelope(config: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!(TOOL_NAME));
    m.insert("version".into(), json!(TOOL_VERSION));
    m.insert("core_version".into(), json!(qcm_core::VERSION));
    m.insert("seed".into(), json!(config.seed));
    m.insert(
        "config".into(),
        serde_json::to_value(config).expect("config serializes"),
    );
    m.insert(TIMESTAMP_KEY.into(), json!(timestamp()));
    m
}

fn render_table_json(table: &Table, config: &RunConfig) -> String {
    let mut m = envelope(config);
    let notes: Map<String, Value> = table.notes.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    m.insert("notes".into(), Value::Object(notes));
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            Value::Object(
                table
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, cell)| (c.to_string(), cell.json()))
                    .collect(),
            )
        })
        .collect();
    m.insert("rows".into(), Value::Array(rows));
    let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("json");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `table` as `<out>/<stem>.csv` or `<out>/<stem>.json`.
pub fn write_table(config: &RunConfig, stem: &str, table: &Table) -> Result<PathBuf, CliError> {
    let (path, text) = match config.format {
        OutputFormat::Csv => (config.out.join(format!("{stem}.csv")), render_csv(table, config)),
        OutputFormat::Json => (
            config.out.join(format!("{stem}.json")),
            render_table_json(table, config),
        ),
    };
    write_file(&path, &text)?;
    Ok(path)
}

/// Writes a single JSON record `<out>/<stem>.json` with `payload` fields
/// alongside the standard envelope.
pub fn write_record(config: &RunConfig, stem: &str, payload: Map<String, Value>) -> Result<PathBuf, CliError> {
    let mut m = envelope(config);
    m.extend(payload);
    let mut s = serde_json::to_string_pretty(&Value::Object(m)).expect("json");
    s.push('\n');
    let path = config.out.join(format!("{stem}.json"));
    write_file(&path, &s)?;
    Ok(path)
}

/// The deterministic part of an output file: CSV rows without comment lines,
/// or a JSON document without its timestamp.
pub fn data_section(text: &str) -> String {
    if text.trim_start().starts_with('{') {
        if let Ok(Value::Object(mut m)) = serde_json::from_str::<Value>(text) {
            m.remove(TIMESTAMP_KEY);
            return serde_json::to_string(&Value::Object(m)).expect("json");
        }
    }
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
