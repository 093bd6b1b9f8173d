use std::fmt::Write;
use std::path::Path;

use postproc_core::constraints::io::{count_table, parse_count_rows, CountRow};
use postproc_core::constraints::{FlatNode, VariableMap};
use postproc_core::{Error, Result};

/// A vector from the command line: bare values, or counts keyed by node id.
pub enum InputVector {
    Values(Vec<f64>),
    Keyed(Vec<CountRow>),
}

impl InputVector {
    pub fn positional(&self) -> Result<Vec<f64>> {
        Ok(match self {
            InputVector::Values(v) => v.clone(),
            InputVector::Keyed(rows) => rows.iter().map(|r| r.count).collect(),
        })
    }

    /// Values in the variable order of `map`.
    pub fn arrange(&self, map: &VariableMap) -> Result<Vec<f64>> {
        match self {
            InputVector::Values(v) if v.len() == map.len() => Ok(v.clone()),
            InputVector::Values(v) => Err(Error::DimensionMismatch {
                expected: map.len(),
                got: v.len(),
            }),
            InputVector::Keyed(rows) => map.gather(&count_table(rows)),
        }
    }
}

/// Reads `arg` as a file when one exists at that path, else as an inline list.
pub fn read_vector(arg: &str) -> Result<InputVector> {
    let path = Path::new(arg);
    if !path.is_file() {
        return parse_values(arg.split(',')).map(InputVector::Values);
    }
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.trim_start().starts_with("id") {
        return Ok(InputVector::Keyed(parse_count_rows(&text)?));
    }
    let fields = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(','))
        .filter(|f| !f.trim().is_empty());
    parse_values(fields).map(InputVector::Values)
}

fn parse_values<'a>(fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    let v = fields
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad value {f:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::Parse("empty vector".into()));
    }
    Ok(v)
}

/// Shortest round-trip form, without negative zero.
pub fn num(v: f64) -> String {
    format!("{}", v + 0.0)
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

/// `id,parent_id,count` rows with `values` in place of the node counts.
pub fn node_csv(flat: &[FlatNode], values: &[f64]) -> String {
    let mut out = String::from("id,parent_id,count\n");
    for (node, v) in flat.iter().zip(values) {
        let parent = node.parent.map(|p| flat[p].id.as_str()).unwrap_or("");
        let _ = writeln!(out, "{},{},{}", node.id, parent, num(*v));
    }
    out
}
