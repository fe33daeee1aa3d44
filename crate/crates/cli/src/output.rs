//! Tabular output. Every file carries the configuration that produced it:
//! CSV as a `#` comment block above the header, JSON as a `config` string.

use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::Format;

const BEGIN: &str = "# repcov-config-begin";
const END: &str = "# repcov-config-end";

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    /// Column not computed for this row.
    Empty,
}

impl Field {
    fn csv(&self) -> String {
        match self {
            // 17 significant digits read back to the same f64
            Field::Num(v) => format!("{v:.16e}"),
            Field::Int(i) => i.to_string(),
            Field::Text(s) => s.clone(),
            Field::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Num(v) => json!(v),
            Field::Int(i) => json!(i),
            Field::Text(s) => json!(s),
            Field::Empty => Value::Null,
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<u32> for Field {
    fn from(v: u32) -> Self {
        Field::Int(v.into())
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Drops columns that are empty in every row.
    pub fn prune_empty(mut self) -> Self {
        let keep: Vec<bool> = (0..self.columns.len())
            .map(|j| self.rows.iter().any(|r| r[j] != Field::Empty))
            .collect();
        fn filter<X>(v: Vec<X>, keep: &[bool]) -> Vec<X> {
            v.into_iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| x).collect()
        }
        self.columns = filter(self.columns, &keep);
        self.rows = self.rows.into_iter().map(|r| filter(r, &keep)).collect();
        self
    }

    pub fn render(&self, format: Format, command: &str, config_toml: &str) -> String {
        match format {
            Format::Csv => {
                let mut out = format!("# repcov {} {command}\n", env!("CARGO_PKG_VERSION"));
                out.push_str(&comment_block(config_toml));
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Field::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Array(r.iter().map(Field::json).collect()))
                    .collect();
                let doc = json!({
                    "command": command,
                    "config": config_toml,
                    "columns": self.columns,
                    "rows": rows,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
                s.push('\n');
                s
            }
        }
    }
}

pub fn comment_block(config_toml: &str) -> String {
    let mut out = format!("{BEGIN}\n");
    for line in config_toml.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out.push_str(END);
    out.push('\n');
    out
}

/// The configuration embedded in an output file, in either format.
pub fn embedded_config(contents: &str) -> Option<String> {
    if let Ok(doc) = serde_json::from_str::<Value>(contents) {
        return doc.get("config")?.as_str().map(str::to_string);
    }
    let mut lines = contents.lines().skip_while(|l| *l != BEGIN);
    lines.next()?;
    let mut out = String::new();
    for line in lines {
        if line == END {
            return Some(out);
        }
        out.push_str(line.strip_prefix("# ").or_else(|| line.strip_prefix('#'))?);
        out.push('\n');
    }
    None
}

/// Writes `contents` in one piece: to a sibling temporary file that is then
/// renamed over `path`, or to stdout.
pub fn write_output(path: Option<&Path>, contents: &str) -> std::io::Result<()> {
    match path {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()
        }
        Some(path) => {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
            std::fs::write(&tmp, contents)?;
            std::fs::rename(&tmp, path).inspect_err(|_| {
                let _ = std::fs::remove_file(&tmp);
            })
        }
    }
}
