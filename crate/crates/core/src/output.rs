//! Result files: CSV with a `# key=value` provenance header, or a JSON record
//! carrying the same metadata. No timestamps are written, so identical runs
//! produce identical bytes.

use std::fmt::Display;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::mc::SuccessCurve;
use crate::steane::EncodedResult;
use crate::{GENERATOR, VERSION};

/// Ordered key/value metadata written ahead of every table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    entries: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(experiment: &str) -> Provenance {
        Provenance::default()
            .with("experiment", experiment)
            .with("generator", GENERATOR)
            .with("version", VERSION)
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Provenance {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.entries {
            m.insert(k.clone(), Value::String(v.clone()));
        }
        Value::Object(m)
    }
}

/// Column-named rows of JSON scalars.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        // non-finite floats become null in JSON; keep them readable in CSV
        other => other.to_string(),
    }
}

pub fn write_csv<W: Write>(mut out: W, prov: &Provenance, table: &Table) -> Result<()> {
    for (k, v) in prov.entries() {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns).map_err(std::io::Error::from)?;
    for row in &table.rows {
        w.write_record(row.iter().map(cell)).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// `{"metadata": …, "columns": …, "rows": …}` plus any extra top-level
/// fields, pretty-printed.
pub fn write_json<W: Write>(mut out: W, prov: &Provenance, table: &Table, extra: &[(&str, Value)]) -> Result<()> {
    let mut m = Map::new();
    m.insert("metadata".into(), prov.to_json());
    m.insert("columns".into(), json!(table.columns));
    m.insert("rows".into(), json!(table.rows));
    for (k, v) in extra {
        m.insert(k.to_string(), v.clone());
    }
    serde_json::to_writer_pretty(&mut out, &Value::Object(m))?;
    writeln!(out)?;
    Ok(())
}

/// A fit or summary record with metadata.
pub fn write_record<W: Write, T: Serialize>(mut out: W, prov: &Provenance, record: &T) -> Result<()> {
    let v = json!({ "metadata": prov.to_json(), "result": record });
    serde_json::to_writer_pretty(&mut out, &v)?;
    writeln!(out)?;
    Ok(())
}

pub const CURVE_COLUMNS: [&str; 8] = ["t", "p", "stderr", "n", "epsilon", "gamma", "seed", "n_traj"];

pub fn curve_table(curve: &SuccessCurve) -> Table {
    let mut t = Table::new(&CURVE_COLUMNS);
    for i in 0..curve.len() {
        t.push(vec![
            json!(curve.t_values[i]),
            json!(curve.p_success[i]),
            json!(curve.std_err[i]),
            json!(curve.n),
            json!(curve.params.epsilon),
            json!(curve.params.gamma),
            json!(curve.master_seed),
            json!(curve.n_trajectories),
        ]);
    }
    t
}

pub const ENCODED_COLUMNS: [&str; 10] = [
    "epsilon",
    "gamma",
    "C",
    "encoded_ps",
    "encoded_stderr",
    "bare_ps",
    "bare_stderr",
    "mean_attempts",
    "n_traj",
    "seed",
];

fn ratio_value(c: f64) -> Value {
    if c.is_infinite() {
        json!("inf")
    } else {
        json!(c)
    }
}

pub fn encoded_table(results: &[EncodedResult]) -> Table {
    let mut t = Table::new(&ENCODED_COLUMNS);
    for r in results {
        t.push(vec![
            json!(r.epsilon),
            json!(r.gamma),
            ratio_value(r.ratio),
            json!(r.encoded_ps),
            json!(r.encoded_stderr),
            json!(r.bare_ps),
            json!(r.bare_stderr),
            json!(r.mean_attempts),
            json!(r.n_traj),
            json!(r.seed),
        ]);
    }
    t
}
