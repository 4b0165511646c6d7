//! Report rendering: CSV with `#` header lines, or schema-versioned JSON.

use serde_json::{json, Map, Value};
use std::io::Write;

pub const SCHEMA: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

/// A finite float as a JSON number; infinities and NaN as strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Summary values; one `#` line each in CSV, top-level fields in JSON.
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Report {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn row(&mut self, cells: Vec<Value>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.summary.insert(key.to_string(), v);
    }
}

/// Run metadata written ahead of the body.
pub struct Header<'a> {
    pub subcommand: &'a str,
    pub config: &'a [(String, String)],
    pub wall_time_s: f64,
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn write_report<W: Write>(out: &mut W, fmt: Format, header: &Header, report: &Report) -> std::io::Result<()> {
    match fmt {
        Format::Csv => {
            writeln!(out, "# tool: thinprime {}", env!("CARGO_PKG_VERSION"))?;
            writeln!(out, "# subcommand: {}", header.subcommand)?;
            for (k, v) in header.config {
                writeln!(out, "# config: {k}={v}")?;
            }
            writeln!(out, "# wall_time_s: {:.6}", header.wall_time_s)?;
            for (k, v) in &report.summary {
                writeln!(out, "# {k}: {}", cell(v))?;
            }
            writeln!(out, "{}", report.columns.join(","))?;
            for r in &report.rows {
                let cells: Vec<String> = r.iter().map(cell).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
        Format::Json => {
            let mut top = Map::new();
            top.insert("schema".into(), json!(SCHEMA));
            top.insert("tool".into(), json!("thinprime"));
            top.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            top.insert("subcommand".into(), json!(header.subcommand));
            let cfg: Map<String, Value> = header.config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            top.insert("config".into(), Value::Object(cfg));
            top.insert("wall_time_s".into(), num(header.wall_time_s));
            for (k, v) in &report.summary {
                top.insert(k.clone(), v.clone());
            }
            top.insert("columns".into(), json!(report.columns));
            top.insert("rows".into(), json!(report.rows));
            serde_json::to_writer_pretty(&mut *out, &Value::Object(top))?;
            writeln!(out)?;
        }
    }
    Ok(())
}
