//! Tabular output with a self-describing comment header.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rounding_uq::io::fmt_real;
use serde_json::{json, Map, Value};

pub const OUT_DIR_ENV: &str = "RUQ_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Bool(bool),
    Null,
}

impl Cell {
    pub fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => fmt_real(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Real(v) if v.is_finite() => json!(v),
            Cell::Real(v) => json!(fmt_real(*v)),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Null => Value::Null,
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Null, Into::into)
    }
}

/// Rows under a versioned schema, plus the run configuration and summary.
pub struct Table {
    pub command: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub config: Vec<(String, String)>,
    pub summary: Vec<(String, Cell)>,
}

impl Table {
    pub fn new(command: &'static str, columns: &[&'static str]) -> Self {
        Table {
            command,
            columns: columns.to_vec(),
            rows: Vec::new(),
            config: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn schema(&self) -> String {
        format!("ruq.{}.v1", self.command)
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn summarize(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.push((key.to_string(), value.into()));
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# ruq {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "# schema: {}", self.schema())?;
        let cfg: Vec<String> = self.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(w, "# config: {}", cfg.join(" "))?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        for (k, v) in &self.summary {
            writeln!(w, "# summary: {k}={}", v.csv())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let config: Map<String, Value> = self.config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(m)
            })
            .collect();
        let summary: Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), v.json())).collect();
        json!({
            "tool": format!("ruq {}", env!("CARGO_PKG_VERSION")),
            "schema": self.schema(),
            "config": config,
            "columns": self.columns,
            "rows": rows,
            "summary": summary,
        })
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        writeln!(w)
    }

    /// `--out` wins; otherwise `$RUQ_OUT_DIR/<command>.<ext>`; otherwise stdout.
    pub fn destination(&self, out: Option<&Path>, json: bool) -> Option<PathBuf> {
        out.map(Path::to_path_buf).or_else(|| {
            std::env::var_os(OUT_DIR_ENV).map(|d| {
                let ext = if json { "json" } else { "csv" };
                PathBuf::from(d).join(format!("{}.{ext}", self.command))
            })
        })
    }

    pub fn emit(&self, out: Option<&Path>, json: bool) -> io::Result<()> {
        match self.destination(out, json) {
            Some(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                let mut w = BufWriter::new(File::create(&path)?);
                self.emit_to(&mut w, json)?;
                w.flush()
            }
            None => self.emit_to(io::stdout().lock(), json),
        }
    }

    fn emit_to<W: Write>(&self, w: W, json: bool) -> io::Result<()> {
        if json {
            self.write_json(w)
        } else {
            self.write_csv(w)
        }
    }
}
