//! Scripted gestures: one per line, `#` starts a comment.
//!
//! ```text
//! expand root
//! star Female Education
//! drilldown *,*,* Age
//! collapse Female
//! ```
//!
//! A rule is `root`, the full comma-separated text form, or just its
//! instantiated values (`Female`, `Male,Never married`).

use anyhow::{anyhow, bail, Result};
use smartdrill::session::{NodePath, Session};
use smartdrill::Rule;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Expand,
    Star(String),
    Drilldown(String),
    Collapse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gesture {
    pub line: usize,
    pub op: Op,
    pub rule: String,
}

/// Splits `rest` into a rule and a trailing column name, preferring the
/// longest column name that ends the line.
fn split_column<'a>(rest: &'a str, columns: &[String]) -> Option<(&'a str, String)> {
    columns
        .iter()
        .filter(|c| rest.ends_with(c.as_str()))
        .filter_map(|c| {
            let head = &rest[..rest.len() - c.len()];
            (head.is_empty() || head.ends_with(' ')).then(|| (head.trim_end(), c.clone()))
        })
        .max_by_key(|(_, c)| c.len())
}

pub fn parse(script: &str, columns: &[String]) -> Result<Vec<Gesture>> {
    let mut out = Vec::new();
    for (i, raw) in script.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (verb, rest) = text.split_once(' ').map_or((text, ""), |(v, r)| (v, r.trim()));
        let with_column = |make: fn(String) -> Op| -> Result<Gesture> {
            let (rule, col) =
                split_column(rest, columns).ok_or_else(|| anyhow!("line {line}: {verb} needs a rule and a column name"))?;
            Ok(Gesture {
                line,
                op: make(col),
                rule: if rule.is_empty() { "root".into() } else { rule.into() },
            })
        };
        let g = match verb {
            "expand" | "collapse" => Gesture {
                line,
                op: if verb == "expand" { Op::Expand } else { Op::Collapse },
                rule: if rest.is_empty() { "root".into() } else { rest.into() },
            },
            "star" => with_column(Op::Star)?,
            "drilldown" => with_column(Op::Drilldown)?,
            other => bail!("line {line}: unknown gesture {other:?}"),
        };
        out.push(g);
    }
    Ok(out)
}

/// Finds the displayed node a gesture names.
pub fn resolve(s: &Session, text: &str) -> Result<NodePath> {
    let cols = s.table().columns();
    if text == "root" || text == "*" {
        return Ok(Vec::new());
    }
    if let Ok(rule) = Rule::parse(text, cols) {
        if let Some(p) = s.root().find(&rule) {
            return Ok(p);
        }
    }
    let wanted: Vec<&str> = text.split(',').map(str::trim).collect();
    let mut hit = None;
    s.root().walk(&mut |path, n| {
        if hit.is_none() {
            let labels: Vec<&str> = n.rule.instantiated().map(|(c, v)| cols[c].label(v)).collect();
            if labels == wanted {
                hit = Some(path.to_vec());
            }
        }
    });
    hit.ok_or_else(|| anyhow!("no displayed rule matches {text:?}"))
}

pub fn run(s: &mut Session, gestures: &[Gesture]) -> Result<()> {
    for g in gestures {
        let at = |e: anyhow::Error| anyhow!("line {}: {e}", g.line);
        let path = resolve(s, &g.rule).map_err(at)?;
        let done = match &g.op {
            Op::Expand => s.expand(&path).map(drop),
            Op::Star(c) => s.expand_star(&path, c).map(drop),
            Op::Drilldown(c) => s.emulate_regular_drilldown(&path, c).map(drop),
            Op::Collapse => s.collapse(&path),
        };
        done.map_err(|e| at(e.into()))?;
    }
    Ok(())
}
