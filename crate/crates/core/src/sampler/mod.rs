//! Per-rule uniform samples and the statistics around them.

pub mod allocate;
pub mod pool;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::table::{Code, RowId, Table};
use crate::tuples::TupleSet;

pub use allocate::{allocate_convex, allocate_dp, AllocNode, AllocationPlan, AllocationProblem};
pub use pool::SamplePool;

/// A uniform sample of the rows covered by `filter`.
///
/// Columns instantiated in the filter are constant over the sample and are
/// not stored; [`Sample::view`] restores full-width rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    filter: Rule,
    scale: f64,
    ids: Vec<RowId>,
    kept: Vec<usize>,
    rows: Vec<Code>,
    mass: Option<Vec<f64>>,
    capacity: usize,
    population: f64,
    complete: bool,
}

impl Sample {
    /// Builds a sample from full-width rows. `population` is the (possibly
    /// estimated) number of table rows the filter covers.
    pub fn from_rows<'a>(
        filter: Rule,
        rows: impl IntoIterator<Item = (RowId, &'a [Code], f64)>,
        with_mass: bool,
        capacity: usize,
        population: f64,
        complete: bool,
    ) -> Sample {
        let kept: Vec<usize> = (0..filter.width())
            .filter(|&c| filter.get(c).is_none())
            .collect();
        let mut ids = Vec::new();
        let mut codes = Vec::new();
        let mut mass = with_mass.then(Vec::new);
        for (id, row, m) in rows {
            debug_assert!(filter.covers(row));
            ids.push(id);
            codes.extend(kept.iter().map(|&c| row[c]));
            if let Some(v) = &mut mass {
                v.push(m);
            }
        }
        let scale = if complete || ids.is_empty() {
            1.0
        } else {
            (population / ids.len() as f64).max(1.0)
        };
        Sample {
            filter,
            scale,
            ids,
            kept,
            rows: codes,
            mass,
            capacity,
            population,
            complete,
        }
    }

    pub fn filter(&self) -> &Rule {
        &self.filter
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of table rows the filter covers (estimated for combined samples).
    pub fn population(&self) -> f64 {
        self.population
    }

    /// True when the sample holds every row the filter covers.
    pub fn is_complete(&self) -> bool {
        self.complete
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

    /// Writes the full-width row `i` into `buf`.
    pub fn full_row(&self, i: usize, buf: &mut [Code]) {
        let w = self.kept.len();
        for (c, slot) in buf.iter_mut().enumerate() {
            if let Some(v) = self.filter.get(c) {
                *slot = v;
            }
        }
        for (j, &c) in self.kept.iter().enumerate() {
            buf[c] = self.rows[i * w + j];
        }
    }

    /// Number of sampled rows covered by `rule`.
    pub fn raw_count(&self, rule: &Rule) -> usize {
        let mut buf = vec![0; self.filter.width()];
        (0..self.len())
            .filter(|&i| {
                self.full_row(i, &mut buf);
                rule.covers(&buf)
            })
            .count()
    }

    /// Full-width rows covered by `restrict`, carrying this sample's scale.
    pub fn view(&self, restrict: &Rule, cards: &[usize]) -> TupleSet {
        let mut out = TupleSet::empty(cards.to_vec(), self.has_mass());
        let mut buf = vec![0; self.filter.width()];
        for i in 0..self.len() {
            self.full_row(i, &mut buf);
            if restrict.covers(&buf) {
                out.push(self.ids[i], &buf, self.mass(i));
            }
        }
        out.with_scale(self.scale, self.complete)
    }

    /// Iterates `(row id, full row, mass)`.
    pub fn for_each_row(&self, mut f: impl FnMut(RowId, &[Code], f64)) {
        let mut buf = vec![0; self.filter.width()];
        for i in 0..self.len() {
            self.full_row(i, &mut buf);
            f(self.ids[i], &buf, self.mass(i));
        }
    }
}

/// Exact aggregates gathered for a displayed rule during a create pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCount {
    pub rule: Rule,
    pub count: u64,
    pub sum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreatePass {
    pub samples: Vec<Sample>,
    pub exact: Vec<ExactCount>,
    pub rows_scanned: usize,
}

/// One scan of `table` that fills an independent reservoir of size `n` for
/// each `(rule, n)` budget and counts every `displayed` rule exactly.
pub fn create_pass(
    table: &Table,
    budgets: &[(Rule, usize)],
    displayed: &[Rule],
    masses: Option<&[f64]>,
    rng: &mut impl Rng,
) -> CreatePass {
    let budgets: Vec<&(Rule, usize)> = budgets.iter().filter(|(_, n)| *n > 0).collect();
    let mut seen = vec![0u64; budgets.len()];
    let mut reservoirs: Vec<Vec<RowId>> = budgets
        .iter()
        .map(|(_, n)| Vec::with_capacity((*n).min(table.num_rows())))
        .collect();
    let mut counts = vec![0u64; displayed.len()];
    let mut sums = vec![0.0; displayed.len()];
    for (id, row) in table.scan() {
        for (j, (rule, cap)) in budgets.iter().enumerate() {
            if !rule.covers(row) {
                continue;
            }
            seen[j] += 1;
            let res = &mut reservoirs[j];
            if res.len() < *cap {
                res.push(id);
            } else {
                let k = rng.gen_range(0..seen[j]);
                if (k as usize) < *cap {
                    res[k as usize] = id;
                }
            }
        }
        for (j, rule) in displayed.iter().enumerate() {
            if rule.covers(row) {
                counts[j] += 1;
                sums[j] += masses.map_or(1.0, |m| m[id as usize]);
            }
        }
    }
    let samples = budgets
        .iter()
        .zip(reservoirs)
        .zip(&seen)
        .map(|(((rule, cap), mut ids), &n)| {
            ids.sort_unstable();
            let complete = ids.len() as u64 == n;
            Sample::from_rows(
                rule.clone(),
                ids.iter()
                    .map(|&id| (id, table.row(id), masses.map_or(1.0, |m| m[id as usize]))),
                masses.is_some(),
                *cap,
                n as f64,
                complete,
            )
        })
        .collect();
    let exact = displayed
        .iter()
        .zip(counts.iter().zip(&sums))
        .map(|(rule, (&count, &sum))| ExactCount {
            rule: rule.clone(),
            count,
            sum: masses.is_some().then_some(sum),
        })
        .collect();
    CreatePass {
        samples,
        exact,
        rows_scanned: table.num_rows(),
    }
}

/// Normal-approximation interval for a scaled estimate drawn from a sample
/// of `sample_size` rows with scale `scale`. Exact data (scale 1) gets a
/// zero-width interval.
pub fn confidence_interval(estimate: f64, sample_size: usize, scale: f64, z: f64) -> (f64, f64) {
    if scale <= 1.0 || sample_size == 0 {
        return (estimate, estimate);
    }
    let n = sample_size as f64;
    let p = (estimate / scale / n).clamp(0.0, 1.0);
    let half = z * scale * (n * p * (1.0 - p)).sqrt();
    let hi_cap = scale * n;
    ((estimate - half).max(0.0), (estimate + half).min(hi_cap))
}

impl Sample {
    pub fn confidence_interval(&self, estimate: f64, z: f64) -> (f64, f64) {
        if self.complete {
            return (estimate, estimate);
        }
        confidence_interval(estimate, self.len(), self.scale, z)
    }
}

/// Fraction of the sub-rule's rows that the super-rule also covers.
pub fn selectivity_ratio(count_sub: f64, count_super: f64) -> Result<f64> {
    if count_sub <= 0.0 {
        return Err(Error::EmptySubRule);
    }
    Ok((count_super / count_sub).clamp(0.0, 1.0))
}

/// A minimum sample size large enough that every size-1 rule worth showing
/// is expected to appear about `rho` times.
pub fn suggest_min_ss(table: &Table, rho: f64) -> Result<usize> {
    if rho.is_nan() || rho <= 0.0 {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    if table.num_rows() == 0 || table.num_columns() == 0 {
        return Err(Error::EmptyTable);
    }
    let c_min = table
        .columns()
        .iter()
        .map(|c| c.distinct_count())
        .min()
        .unwrap_or(1);
    Ok((rho * table.num_columns() as f64 * c_min as f64).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_budget_copies_table() {
        let t = fixtures::f2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = create_pass(&t, &[(Rule::trivial(3), 8)], &[], None, &mut rng);
        let s = &pass.samples[0];
        assert_eq!(s.len(), 8);
        assert_eq!(s.scale(), 1.0);
        assert!(s.is_complete());
        assert_eq!(s.ids(), &[0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn undersized_population() {
        let t = fixtures::f2();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = Rule::from_pairs(3, &[(0, 1)]);
        let pass = create_pass(&t, &[(r.clone(), 10)], &[r], None, &mut rng);
        assert_eq!(pass.samples[0].len(), 3);
        assert_eq!(pass.samples[0].scale(), 1.0);
        assert_eq!(pass.exact[0].count, 3);
    }

    #[test]
    fn scaled_sample_and_elided_columns() {
        let t = fixtures::correlated(&fixtures::marketing_like_columns(), 10_000, 0.3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let female = Rule::from_pairs(7, &[(1, t.column(1).code_of("Female").unwrap())]);
        let pass = create_pass(&t, &[(female.clone(), 500)], std::slice::from_ref(&female), None, &mut rng);
        let s = &pass.samples[0];
        assert_eq!(s.len(), 500);
        assert!(!s.is_complete());
        let exact = pass.exact[0].count as f64;
        assert!((s.scale() - exact / 500.0).abs() < 1e-9);
        let v = s.view(&female, &t.cardinalities());
        assert_eq!(v.len(), 500);
        for (i, row) in v.rows().enumerate() {
            assert_eq!(row, t.row(v.id(i)));
        }
    }

    #[test]
    fn interval_examples() {
        assert_eq!(confidence_interval(42.0, 100, 1.0, 3.0), (42.0, 42.0));
        assert_eq!(confidence_interval(0.0, 100, 5.0, 3.0), (0.0, 0.0));
        let (lo, hi) = confidence_interval(0.5 * 5000.0 * 500.0, 5000, 500.0, 2.0);
        let half = 2.0 * 500.0 * 1250f64.sqrt();
        assert!((hi - lo - 2.0 * half).abs() < 1e-6);
        assert!((half - 35355.34).abs() < 0.01);
    }

    #[test]
    fn selectivity_examples() {
        assert_eq!(selectivity_ratio(1000.0, 150.0).unwrap(), 0.15);
        assert_eq!(selectivity_ratio(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(selectivity_ratio(7.0, 0.0).unwrap(), 0.0);
        assert!(selectivity_ratio(0.0, 0.0).is_err());
    }

    #[test]
    fn min_ss_suggestion() {
        let cols: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let mut b = crate::table::TableBuilder::new(&cols);
        for v in 0..5 {
            b.push(&vec![v.to_string(); 10]);
        }
        let t = b.finish();
        assert_eq!(suggest_min_ss(&t, 10.0).unwrap(), 500);
        let one = Table::from_rows(&["a"], &[["x"]]);
        assert_eq!(suggest_min_ss(&one, 1.0).unwrap(), 1);
        let empty = Table::from_rows::<&str, [&str; 1]>(&["a"], &[]);
        assert!(matches!(suggest_min_ss(&empty, 1.0), Err(Error::EmptyTable)));
    }
}
