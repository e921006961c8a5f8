//! Reports and their json / csv / text renderings.

use std::fmt::Write;

use clap::ValueEnum;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }

    /// '.' decimal, 17 significant digits.
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v:.3e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// A command's output: metadata, a fixed-column table and a summary.
#[derive(Debug, Clone)]
pub struct Report {
    pub command: &'static str,
    pub meta: Map<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn new(command: &'static str, meta: Map<String, Value>, columns: Vec<String>) -> Self {
        Self {
            command,
            meta,
            columns,
            rows: Vec::new(),
            summary: Map::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv(),
            Format::Text => self.text(),
        }
    }

    fn json(&self) -> String {
        let mut top = Map::new();
        top.insert("schema_version".into(), SCHEMA_VERSION.into());
        top.insert("command".into(), self.command.into());
        for (k, v) in &self.meta {
            top.insert(k.clone(), v.clone());
        }
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(Cell::json)).collect()))
            .collect();
        top.insert("rows".into(), Value::Array(rows));
        top.insert("summary".into(), Value::Object(self.summary.clone()));
        let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("report serializes");
        s.push('\n');
        s
    }

    /// Metadata and summary go to leading `#` lines so the table stays plain CSV.
    fn csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# schema_version={SCHEMA_VERSION}").unwrap();
        writeln!(out, "# command={}", self.command).unwrap();
        for (k, v) in flatten(&self.meta)
            .into_iter()
            .chain(flatten_prefixed("summary", &self.summary))
        {
            writeln!(out, "# {k}={v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    fn text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::text).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r[j].len())
                    .chain([self.columns[j].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        for (k, v) in flatten(&self.meta) {
            writeln!(out, "{k}: {v}").unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "{}", line(&self.columns)).unwrap();
        for r in &cells {
            writeln!(out, "{}", line(r)).unwrap();
        }
        if !self.summary.is_empty() {
            writeln!(out).unwrap();
            for (k, v) in flatten(&self.summary) {
                writeln!(out, "{k}: {v}").unwrap();
            }
        }
        out
    }
}

fn flatten(map: &Map<String, Value>) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (k, v) in map {
        match v {
            Value::Object(inner) => out.extend(flatten_prefixed(k, inner)),
            Value::String(s) => out.push((k.clone(), s.clone())),
            other => out.push((k.clone(), other.to_string())),
        }
    }
    out
}

fn flatten_prefixed(prefix: &str, map: &Map<String, Value>) -> Vec<(String, String)> {
    flatten(map)
        .into_iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut meta = Map::new();
        meta.insert("chart".into(), "demo".into());
        let mut r = Report::new("demo", meta, vec!["index".into(), "value".into(), "note".into()]);
        r.push(vec![0usize.into(), 0.1.into(), "a,b".into()]);
        r.push(vec![1usize.into(), f64::NAN.into(), "ok".into()]);
        r.summary.insert("worst".into(), 0.1.into());
        r
    }

    #[test]
    fn csv_uses_seventeen_digits_and_quotes() {
        let csv = sample().render(Format::Csv);
        assert!(csv.contains("0,1.0000000000000001e-1,\"a,b\""), "{csv}");
        assert!(csv.contains("1,NaN,ok"));
        assert!(csv.contains("index,value,note\n"));
        assert!(csv.contains("# summary.worst=0.1"));
    }

    #[test]
    fn json_keeps_column_order_and_nulls_nan() {
        let v: Value = serde_json::from_str(&sample().render(Format::Json)).unwrap();
        assert_eq!(v["schema_version"], 1);
        let keys: Vec<&String> = v["rows"][0].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["index", "value", "note"]);
        assert!(v["rows"][1]["value"].is_null());
    }

    #[test]
    fn text_aligns_columns() {
        let t = sample().render(Format::Text);
        assert!(t.contains("chart: demo"));
        assert!(t.contains("worst: 0.1"));
    }
}
