use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Code, ColumnSchema};

/// A pattern over the table's columns; `None` is the wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rule {
    cells: Box<[Option<Code>]>,
}

impl Rule {
    pub fn trivial(width: usize) -> Self {
        Rule {
            cells: vec![None; width].into_boxed_slice(),
        }
    }

    pub fn new(cells: Vec<Option<Code>>) -> Self {
        Rule {
            cells: cells.into_boxed_slice(),
        }
    }

    /// Builds the rule that instantiates exactly the given `(column, code)` pairs.
    pub fn from_pairs(width: usize, pairs: &[(usize, Code)]) -> Self {
        let mut r = Rule::trivial(width);
        for &(c, v) in pairs {
            r.cells[c] = Some(v);
        }
        r
    }

    pub fn width(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Option<Code>] {
        &self.cells
    }

    pub fn get(&self, column: usize) -> Option<Code> {
        self.cells[column]
    }

    pub fn size(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_trivial(&self) -> bool {
        self.cells.iter().all(Option::is_none)
    }

    pub fn instantiated(&self) -> impl Iterator<Item = (usize, Code)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.map(|v| (c, v)))
    }

    pub fn with(&self, column: usize, code: Code) -> Rule {
        let mut r = self.clone();
        r.cells[column] = Some(code);
        r
    }

    pub fn without(&self, column: usize) -> Rule {
        let mut r = self.clone();
        r.cells[column] = None;
        r
    }

    pub fn covers(&self, row: &[Code]) -> bool {
        debug_assert_eq!(row.len(), self.cells.len());
        self.cells
            .iter()
            .zip(row)
            .all(|(cell, &v)| cell.is_none_or(|c| c == v))
    }

    /// True when `self` is at least as general as `other`: every value fixed
    /// by `self` is fixed to the same value in `other`.
    pub fn is_subrule_of(&self, other: &Rule) -> bool {
        debug_assert_eq!(self.width(), other.width());
        self.cells
            .iter()
            .zip(other.cells.iter())
            .all(|(a, b)| a.is_none() || a == b)
    }

    pub fn is_valid_for(&self, columns: &[ColumnSchema]) -> bool {
        self.cells.len() == columns.len()
            && self
                .cells
                .iter()
                .zip(columns)
                .all(|(v, col)| v.is_none_or(|v| (v as usize) < col.distinct_count()))
    }

    /// Parses the comma-separated text form. `*` is a wildcard, other cells are
    /// looked up in the column dictionaries. Cells may be CSV-quoted.
    pub fn parse(text: &str, columns: &[ColumnSchema]) -> Result<Rule> {
        let invalid = |reason: String| Error::InvalidRule {
            text: text.to_string(),
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let record = match rdr.records().next() {
            Some(rec) => rec.map_err(|e| invalid(e.to_string()))?,
            None => csv::StringRecord::new(),
        };
        if record.len() != columns.len() {
            return Err(invalid(format!(
                "expected {} cells, found {}",
                columns.len(),
                record.len()
            )));
        }
        let cells = record
            .iter()
            .zip(columns)
            .map(|(cell, col)| {
                let cell = cell.trim();
                if cell == "*" {
                    Ok(None)
                } else {
                    col.code_of(cell)
                        .map(Some)
                        .ok_or_else(|| invalid(format!("unknown value {cell:?} in column {}", col.name)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Rule::new(cells))
    }

    pub fn labels<'a>(&self, columns: &'a [ColumnSchema]) -> Vec<&'a str> {
        self.cells
            .iter()
            .zip(columns)
            .map(|(v, col)| match v {
                Some(v) => col.label(*v),
                None => "*",
            })
            .collect()
    }

    /// Renders the text form accepted by [`Rule::parse`].
    pub fn to_text(&self, columns: &[ColumnSchema]) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(self.labels(columns))
            .expect("writing to memory");
        let mut bytes = w.into_inner().expect("writing to memory");
        bytes.pop();
        String::from_utf8(bytes).expect("labels are utf-8")
    }

    pub fn display<'a>(&'a self, columns: &'a [ColumnSchema]) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Rule, &'a [ColumnSchema]);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "({})", self.0.labels(self.1).join(", "))
            }
        }
        D(self, columns)
    }
}

/// Canonical order: column by column, values by code, wildcard last.
impl Ord for Rule {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.cells.iter().zip(other.cells.iter()) {
            let ord = match (a, b) {
                (Some(x), Some(y)) => x.cmp(y),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        self.cells.len().cmp(&other.cells.len())
    }
}

impl PartialOrd for Rule {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
