use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::{Map, Value};

use crate::config::Format;

/// Rows of scalars written as CSV with a header, or as a JSON array of
/// objects keyed by the same column names.
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Builds a table from pre-rendered strings; numeric cells become numbers in JSON.
    pub fn from_strings(columns: &[String], rows: &[Vec<String>]) -> Self {
        let parse = |s: &String| match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Value::from(x),
            _ => match s.as_str() {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => Value::String(s.clone()),
            },
        };
        Self {
            columns: columns.to_vec(),
            rows: rows.iter().map(|r| r.iter().map(parse).collect()).collect(),
        }
    }

    pub fn render(&self, format: Format) -> anyhow::Result<String> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell))?;
                }
                Ok(String::from_utf8(w.into_inner()?)?)
            }
            Format::Json => {
                let objects: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let map: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().cloned()).collect();
                        Value::Object(map)
                    })
                    .collect();
                Ok(serde_json::to_string_pretty(&objects)? + "\n")
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// A directory receiving several named tables.
pub struct OutDir {
    pub root: PathBuf,
    pub format: Format,
}

impl OutDir {
    pub fn create(root: PathBuf, format: Format) -> anyhow::Result<Self> {
        fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root, format })
    }

    pub fn table(&self, stem: &str, table: &Table) -> anyhow::Result<PathBuf> {
        let path = self.root.join(format!("{}.{}", file_stem(stem), extension(self.format)));
        emit(Some(&path), &table.render(self.format)?)?;
        Ok(path)
    }

    pub fn text(&self, name: &str, text: &str) -> anyhow::Result<PathBuf> {
        let path = self.root.join(name);
        emit(Some(&path), text)?;
        Ok(path)
    }
}

/// Keeps kernel names usable as file names.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
