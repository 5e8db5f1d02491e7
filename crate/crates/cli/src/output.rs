use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use qsdlab::montecarlo::config_hash;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Format;

/// Inputs of one run. Everything that can change the output is hashed;
/// the timestamp is kept out of the artifacts themselves and only goes to
/// the sidecar file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub mechanism: Value,
    pub params: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub config_hash: String,
    /// Seconds since the Unix epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

#[derive(Serialize)]
struct Hashed<'a> {
    subcommand: &'a str,
    mechanism: &'a Value,
    params: &'a Value,
    seed: Option<u64>,
    version: &'a str,
}

impl RunManifest {
    pub fn new(subcommand: &str, mechanism: Value, params: Value, seed: Option<u64>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let config_hash = config_hash(&Hashed {
            subcommand,
            mechanism: &mechanism,
            params: &params,
            seed,
            version: &version,
        });
        RunManifest {
            subcommand: subcommand.to_string(),
            mechanism,
            params,
            seed,
            version,
            config_hash,
            timestamp: None,
        }
    }

    pub fn stamped(&self) -> Self {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        RunManifest {
            timestamp: Some(now),
            ..self.clone()
        }
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
            // 17 significant digits round-trip every f64
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => number(*v),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(v.to_string()))
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Diagnostics that belong with the numbers, such as a truncation residual.
    pub notes: BTreeMap<String, Value>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            ..Table::default()
        }
    }
}

pub enum Artifact {
    Table(Table),
    Document(Value),
}

fn csv_lines(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub fn render(artifact: &Artifact, manifest: &RunManifest, format: Format) -> String {
    match format {
        Format::Json => {
            let mut doc = serde_json::Map::new();
            doc.insert("manifest".into(), serde_json::to_value(manifest).expect("manifest serialises"));
            match artifact {
                Artifact::Table(t) => {
                    doc.insert("columns".into(), json!(t.columns));
                    let rows: Vec<Value> = t.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                    doc.insert("rows".into(), Value::Array(rows));
                    if !t.notes.is_empty() {
                        doc.insert("notes".into(), json!(t.notes));
                    }
                }
                Artifact::Document(v) => {
                    doc.insert("result".into(), v.clone());
                }
            }
            let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("document serialises");
            text.push('\n');
            text
        }
        Format::Csv => {
            let mut text = format!(
                "# manifest: {}\n",
                serde_json::to_string(manifest).expect("manifest serialises")
            );
            match artifact {
                Artifact::Table(t) => {
                    for (k, v) in &t.notes {
                        text.push_str(&format!("# {k}: {v}\n"));
                    }
                    text.push_str(&csv_lines(&t.columns, t.rows.iter().map(|r| r.iter().map(Cell::csv).collect())));
                }
                Artifact::Document(v) => {
                    let rows = match v {
                        Value::Object(map) => map
                            .iter()
                            .map(|(k, v)| vec![k.clone(), scalar_text(v)])
                            .collect::<Vec<_>>(),
                        other => vec![vec!["value".to_string(), scalar_text(other)]],
                    };
                    text.push_str(&csv_lines(&["field", "value"], rows.into_iter()));
                }
            }
            text
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.16e}"),
            _ => n.to_string(),
        },
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 5e-324, 1.7976931348623157e308, -2.5] {
            let text = Cell::Num(v).csv();
            assert_eq!(text.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn non_finite_numbers_become_strings_in_json() {
        assert_eq!(Cell::Num(f64::INFINITY).json(), json!("inf"));
        assert_eq!(Cell::Num(0.5).json(), json!(0.5));
    }

    #[test]
    fn manifest_hash_ignores_timestamp() {
        let m = RunManifest::new("flow", json!({"family": "stable_plus"}), json!({"t": [1.0]}), None);
        let s = m.stamped();
        assert_eq!(m.config_hash, s.config_hash);
        assert!(s.timestamp.is_some());
        let other = RunManifest::new("flow", json!({"family": "stable_plus"}), json!({"t": [2.0]}), None);
        assert_ne!(m.config_hash, other.config_hash);
    }

    #[test]
    fn csv_embeds_manifest_and_notes() {
        let mut t = Table::new(&["k", "probability"]);
        t.rows.push(vec![Cell::Int(1), Cell::Num(0.5)]);
        t.notes.insert("truncation_residual".into(), json!(0.25));
        let m = RunManifest::new("dsbp qsd", Value::Null, json!({}), None);
        let text = render(&Artifact::Table(t), &m, Format::Csv);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# manifest: {"));
        assert_eq!(lines[1], "# truncation_residual: 0.25");
        assert_eq!(lines[2], "k,probability");
        assert_eq!(lines[3], "1,5.0000000000000000e-1");
    }
}
