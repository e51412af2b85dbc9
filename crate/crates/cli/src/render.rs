//! Text, JSON and CSV renderings of rule lists and drill trees.

use std::fmt::Write;

use serde::Serialize;
use smartdrill::session::{DrillNode, NodeView};
use smartdrill::{Rule, Table};

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    #[serde(skip)]
    pub depth: usize,
    pub rule: Vec<String>,
    pub count: f64,
    pub weight: f64,
    pub exact: bool,
}

pub fn row(t: &Table, depth: usize, rule: &Rule, count: f64, weight: f64, exact: bool) -> Row {
    Row {
        depth,
        rule: rule.labels(t.columns()).into_iter().map(String::from).collect(),
        count,
        weight,
        exact,
    }
}

/// Depth-first rows of a drill tree, root first.
pub fn tree_rows(t: &Table, root: &DrillNode) -> Vec<Row> {
    let mut out = Vec::new();
    root.walk(&mut |path, n| out.push(row(t, path.len(), &n.rule, n.value, n.weight, n.count_is_exact)));
    out
}

pub fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

fn header(t: &Table, value: &str) -> Vec<String> {
    let mut h: Vec<String> = t.columns().iter().map(|c| c.name.clone()).collect();
    h.push(value.into());
    h.push("Weight".into());
    h
}

/// Aligned columns; estimated counts carry a `~`, deeper rows a `>` per level.
pub fn table(t: &Table, value: &str, rows: &[Row]) -> String {
    let mut lines: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(header(t, value)).collect()];
    for r in rows {
        let mut cells = vec![">".repeat(r.depth)];
        cells.extend(r.rule.iter().cloned());
        cells.push(format!("{}{}", if r.exact { "" } else { "~" }, number(r.count)));
        cells.push(number(r.weight));
        lines.push(cells);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
    }
    out
}

pub fn csv(t: &Table, value: &str, rows: &[Row]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(t, value))?;
    for r in rows {
        let mut rec = r.rule.clone();
        rec.push(number(r.count));
        rec.push(number(r.weight));
        w.write_record(rec)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub columns: Vec<&'a str>,
    pub value: &'a str,
    pub root: Option<&'a Row>,
    pub rules: &'a [Row],
}

pub fn json(t: &Table, value: &str, root: Option<&Row>, rules: &[Row]) -> anyhow::Result<String> {
    let s = Summary {
        columns: t.columns().iter().map(|c| c.name.as_str()).collect(),
        value,
        root,
        rules,
    };
    Ok(serde_json::to_string_pretty(&s)? + "\n")
}

pub fn tree_json(tree: &NodeView) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(tree)? + "\n")
}
