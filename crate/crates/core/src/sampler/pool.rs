use std::collections::HashSet;
use std::sync::Arc;

use crate::rule::Rule;
use crate::table::{Code, RowId};

use super::Sample;

/// The set of samples currently held in memory.
#[derive(Debug, Clone, Default)]
pub struct SamplePool {
    samples: Vec<Arc<Sample>>,
}

impl SamplePool {
    pub fn new(samples: impl IntoIterator<Item = Sample>) -> Self {
        SamplePool {
            samples: samples.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn samples(&self) -> &[Arc<Sample>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Tuple slots in use.
    pub fn total_rows(&self) -> usize {
        self.samples.iter().map(|s| s.len()).sum()
    }

    pub fn insert(&mut self, sample: Sample) {
        self.samples.retain(|s| s.filter() != sample.filter());
        self.samples.push(Arc::new(sample));
    }

    pub fn retain(&mut self, keep: impl FnMut(&Arc<Sample>) -> bool) {
        self.samples.retain(keep);
    }

    /// A pooled sample for exactly `rule` that is large enough (or complete).
    pub fn find(&self, rule: &Rule, min_ss: usize) -> Option<Arc<Sample>> {
        self.samples
            .iter()
            .find(|s| s.filter() == rule && (s.len() >= min_ss || s.is_complete()))
            .cloned()
    }

    /// Assembles a sample for `rule` from the rows of every pooled sample
    /// whose filter is a sub-rule of `rule`.
    ///
    /// A complete contributing sample yields the exact row set regardless of
    /// size. Otherwise the de-duplicated union must reach `min_ss` rows, and
    /// its scale is the cover count estimated from the largest contributor
    /// divided by the union size.
    pub fn combine(&self, rule: &Rule, min_ss: usize) -> Option<Sample> {
        let contributors: Vec<&Arc<Sample>> = self
            .samples
            .iter()
            .filter(|s| s.filter().is_subrule_of(rule))
            .collect();
        if contributors.is_empty() {
            return None;
        }
        let mut rows: Vec<(RowId, Vec<Code>, f64)> = Vec::new();
        let with_mass = contributors[0].has_mass();

        if let Some(exact) = contributors
            .iter()
            .filter(|s| s.is_complete())
            .min_by_key(|s| s.len())
        {
            exact.for_each_row(|id, row, m| {
                if rule.covers(row) {
                    rows.push((id, row.to_vec(), m));
                }
            });
            let n = rows.len();
            return Some(Sample::from_rows(
                rule.clone(),
                rows.iter().map(|(id, r, m)| (*id, r.as_slice(), *m)),
                with_mass,
                n,
                n as f64,
                true,
            ));
        }

        let mut seen: HashSet<RowId> = HashSet::new();
        for s in &contributors {
            s.for_each_row(|id, row, m| {
                if rule.covers(row) && seen.insert(id) {
                    rows.push((id, row.to_vec(), m));
                }
            });
        }
        if rows.len() < min_ss || rows.is_empty() {
            return None;
        }
        // first of the largest contributors
        let largest = contributors.iter().rev().max_by_key(|s| s.len())?;
        let estimate = largest.raw_count(rule) as f64 * largest.scale();
        rows.sort_unstable_by_key(|(id, _, _)| *id);
        let n = rows.len();
        Some(Sample::from_rows(
            rule.clone(),
            rows.iter().map(|(id, r, m)| (*id, r.as_slice(), *m)),
            with_mass,
            n,
            estimate.max(n as f64),
            false,
        ))
    }
}
