//! Hierarchy file formats.
//!
//! CSV: header `id,parent_id,count`, one row per node, empty `parent_id` for
//! the root. Children keep the order in which they appear.
//!
//! JSON: the nested [`HierarchyNode`] form, `{"id", "count", "children"}`.

use std::collections::HashMap;
use std::path::Path;

use super::{Hierarchy, HierarchyNode};
use crate::error::{Error, Result};

/// A raw CSV row; counts need not be consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub id: String,
    pub parent_id: Option<String>,
    pub count: f64,
}

pub fn parse_count_rows(text: &str) -> Result<Vec<CountRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column {name:?}")))
    };
    let (id_col, parent_col, count_col) = (col("id")?, col("parent_id")?, col("count")?);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let count = field(count_col).parse::<f64>().map_err(|e| {
            Error::Parse(format!("row {}: bad count {:?}: {e}", line + 2, field(count_col)))
        })?;
        let parent = field(parent_col);
        rows.push(CountRow {
            id: field(id_col).to_string(),
            parent_id: (!parent.is_empty()).then(|| parent.to_string()),
            count,
        });
    }
    Ok(rows)
}

/// `id -> count` table from CSV rows.
pub fn count_table(rows: &[CountRow]) -> HashMap<String, f64> {
    rows.iter().map(|r| (r.id.clone(), r.count)).collect()
}

pub fn parse_hierarchy_csv(text: &str) -> Result<Hierarchy> {
    let rows = parse_count_rows(text)?;
    if rows.is_empty() {
        return Err(Error::Domain("hierarchy file has no nodes".into()));
    }
    let mut children: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut root = None;
    for (i, r) in rows.iter().enumerate() {
        match &r.parent_id {
            None if root.is_some() => {
                return Err(Error::Domain("hierarchy has more than one root".into()))
            }
            None => root = Some(i),
            Some(p) => children.entry(p.as_str()).or_default().push(i),
        }
    }
    let root = root.ok_or_else(|| Error::Domain("hierarchy has no root".into()))?;

    let mut placed = 0usize;
    fn build(
        i: usize,
        rows: &[CountRow],
        children: &HashMap<&str, Vec<usize>>,
        placed: &mut usize,
        depth: usize,
    ) -> Result<HierarchyNode> {
        if depth > rows.len() {
            return Err(Error::Domain("cycle in hierarchy".into()));
        }
        *placed += 1;
        let kids = children
            .get(rows[i].id.as_str())
            .map(|ks| {
                ks.iter()
                    .map(|&k| build(k, rows, children, placed, depth + 1))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?
            .unwrap_or_default();
        Ok(HierarchyNode {
            id: rows[i].id.clone(),
            count: rows[i].count,
            children: kids,
        })
    }
    let tree = build(root, &rows, &children, &mut placed, 0)?;
    if placed != rows.len() {
        return Err(Error::Domain(
            "hierarchy rows reference unknown parents or are disconnected".into(),
        ));
    }
    Hierarchy::new(tree)
}

pub fn hierarchy_to_csv(h: &Hierarchy) -> String {
    let flat = h.flatten();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "parent_id", "count"]).expect("in-memory write");
    for node in &flat {
        let parent = node.parent.map(|p| flat[p].id.as_str()).unwrap_or("");
        wtr.write_record([node.id.as_str(), parent, &node.count.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn parse_hierarchy_json(text: &str) -> Result<Hierarchy> {
    Hierarchy::new(serde_json::from_str(text)?)
}

pub fn hierarchy_to_json(h: &Hierarchy) -> String {
    serde_json::to_string_pretty(h.root()).expect("hierarchy serializes")
}

/// Reads a hierarchy, choosing the format by extension (`.json` or CSV).
pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    let text = std::fs::read_to_string(path)?;
    if is_json(path) {
        parse_hierarchy_json(&text)
    } else {
        parse_hierarchy_csv(&text)
    }
}

pub fn write_hierarchy(path: &Path, h: &Hierarchy) -> Result<()> {
    let text = if is_json(path) {
        hierarchy_to_json(h)
    } else {
        hierarchy_to_csv(h)
    };
    std::fs::write(path, text)?;
    Ok(())
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
