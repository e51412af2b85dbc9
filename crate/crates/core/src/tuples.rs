//! Materialized tuple sets: the unit of data BRS runs over.
//!
//! A `TupleSet` is either an exact filtered copy of the table (scale 1) or a
//! uniform sample whose aggregates are multiplied by `scale` when displayed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::table::{Code, RowId, Table};

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "measure")]
pub enum Aggregate {
    #[default]
    Count,
    Sum(String),
}

impl Aggregate {
    /// Resolves the per-row mass vector; `None` means every row weighs 1.
    pub fn masses<'a>(&self, table: &'a Table) -> Result<Option<&'a [f64]>> {
        match self {
            Aggregate::Count => Ok(None),
            Aggregate::Sum(name) => {
                let values = table.measure(name)?;
                if let Some(&v) = values.iter().find(|v| **v < 0.0 || v.is_nan()) {
                    return Err(Error::NegativeMeasure {
                        column: name.clone(),
                        value: v,
                    });
                }
                Ok(Some(values))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleSet {
    width: usize,
    cards: Vec<usize>,
    codes: Vec<Code>,
    ids: Vec<RowId>,
    mass: Option<Vec<f64>>,
    scale: f64,
    exact: bool,
}

impl TupleSet {
    /// Exact copy of the rows covered by `filter`.
    pub fn from_table(table: &Table, filter: &Rule, aggregate: &Aggregate) -> Result<TupleSet> {
        let masses = aggregate.masses(table)?;
        let mut out = TupleSet::empty(table.cardinalities(), masses.is_some());
        for (id, row) in table.scan() {
            if filter.covers(row) {
                out.push(id, row, masses.map_or(1.0, |m| m[id as usize]));
            }
        }
        Ok(out)
    }

    pub fn empty(cards: Vec<usize>, with_mass: bool) -> TupleSet {
        TupleSet {
            width: cards.len(),
            cards,
            codes: Vec::new(),
            ids: Vec::new(),
            mass: with_mass.then(Vec::new),
            scale: 1.0,
            exact: true,
        }
    }

    pub fn push(&mut self, id: RowId, row: &[Code], mass: f64) {
        debug_assert_eq!(row.len(), self.width);
        self.codes.extend_from_slice(row);
        self.ids.push(id);
        if let Some(m) = &mut self.mass {
            m.push(mass);
        }
    }

    /// Marks the set as a sample whose aggregates stand for `scale` times as many rows.
    pub fn with_scale(mut self, scale: f64, exact: bool) -> TupleSet {
        self.scale = scale;
        self.exact = exact;
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn row(&self, i: usize) -> &[Code] {
        &self.codes[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Code]> + '_ {
        self.codes.chunks_exact(self.width.max(1)).take(self.ids.len())
    }

    pub fn id(&self, i: usize) -> RowId {
        self.ids[i]
    }

    pub fn ids(&self) -> &[RowId] {
        &self.ids
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.mass.as_ref().map_or(1.0, |m| m[i])
    }

    pub fn has_mass(&self) -> bool {
        self.mass.is_some()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Rows covered by `rule`, keeping scale and exactness.
    pub fn filter(&self, rule: &Rule) -> TupleSet {
        let mut out = TupleSet::empty(self.cards.clone(), self.mass.is_some());
        for i in 0..self.len() {
            if rule.covers(self.row(i)) {
                out.push(self.ids[i], self.row(i), self.mass(i));
            }
        }
        out.with_scale(self.scale, self.exact)
    }

    /// Unscaled number of rows and aggregate mass covered by `rule`.
    pub fn raw_aggregate(&self, rule: &Rule) -> (usize, f64) {
        let mut n = 0;
        let mut mass = 0.0;
        for i in 0..self.len() {
            if rule.covers(self.row(i)) {
                n += 1;
                mass += self.mass(i);
            }
        }
        (n, mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{LoadOptions, Table};

    #[test]
    fn exact_view_filters_rows() {
        let t = Table::from_rows(&["A", "B"], &[["a", "x"], ["b", "x"], ["a", "y"]]);
        let r = Rule::new(vec![Some(0), None]);
        let v = TupleSet::from_table(&t, &r, &Aggregate::Count).unwrap();
        assert_eq!(v.ids(), &[0, 2]);
        assert_eq!(v.row(1), &[0, 1]);
        assert!(v.is_exact());
        assert_eq!(v.raw_aggregate(&Rule::new(vec![None, Some(1)])), (1, 1.0));
    }

    #[test]
    fn sum_rejects_negative_measures() {
        let opts = LoadOptions {
            measures: vec!["m".into()],
            ..Default::default()
        };
        let t = Table::read_csv("a,m\nx,1\ny,-2\n".as_bytes(), &opts).unwrap();
        let err = TupleSet::from_table(&t, &Rule::trivial(1), &Aggregate::Sum("m".into()));
        assert!(matches!(err, Err(Error::NegativeMeasure { .. })));
        let err = TupleSet::from_table(&t, &Rule::trivial(1), &Aggregate::Sum("q".into()));
        assert!(matches!(err, Err(Error::UnknownMeasure(_))));
    }
}
