//! Greedy best-rule-set search.
//!
//! [`best_rule_set`] adds one rule at a time, each time picking the rule with
//! the largest marginal value given the rules already chosen. The marginal
//! search runs level by level (rules with one extra column, then two, ...),
//! bounding every candidate by what its already-counted sub-rules could still
//! gain and skipping candidates that cannot beat the best rule seen so far.

pub mod oracle;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::score::{self, ScoredRuleList};
use crate::table::Code;
use crate::tuples::TupleSet;
use crate::weight::Weigher;

/// Restricts results to super-rules of `base`, optionally forcing a column to be instantiated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrillConstraint {
    pub base: Rule,
    pub star_column: Option<usize>,
}

impl DrillConstraint {
    pub fn root(width: usize) -> Self {
        DrillConstraint {
            base: Rule::trivial(width),
            star_column: None,
        }
    }

    pub fn under(base: Rule) -> Self {
        DrillConstraint {
            base,
            star_column: None,
        }
    }

    pub fn admits(&self, rule: &Rule) -> bool {
        rule != &self.base
            && self.base.is_subrule_of(rule)
            && self.star_column.is_none_or(|c| rule.get(c).is_some())
    }

    /// Columns a result may instantiate beyond the base.
    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.base.width())
            .filter(|&c| self.base.get(c).is_none())
            .collect()
    }
}

/// A counted candidate. `count` and `marginal_value` are unscaled sample
/// aggregates; `upper_bound` is infinite for candidates counted in the first pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub rule: Rule,
    pub weight: f64,
    pub count: f64,
    pub marginal_value: f64,
    pub upper_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub passes: usize,
    pub counted: usize,
    pub pruned: usize,
}

/// Per-row weight of the heaviest rule in `solution` covering the row (0 if none).
pub fn top_weights(data: &TupleSet, solution: &[Rule], weigher: &Weigher) -> Vec<f64> {
    let weights: Vec<f64> = solution.iter().map(|r| weigher.weight(r)).collect();
    data.rows()
        .map(|row| {
            solution
                .iter()
                .zip(&weights)
                .filter(|(r, _)| r.covers(row))
                .map(|(_, &w)| w)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Finds the rule adding the most marginal value to `solution`, assuming no
/// rule worth returning weighs more than `m_w`.
pub fn find_best_marginal_rule(
    data: &TupleSet,
    solution: &[Rule],
    m_w: f64,
    weigher: &Weigher,
    constraint: &DrillConstraint,
) -> (Option<CandidateEntry>, SearchStats) {
    let top = top_weights(data, solution, weigher);
    search(data, &top, m_w, weigher, constraint)
}

/// Upper limit on co-occurrence bits kept per pass before falling back to
/// extending with every dictionary value.
const COOC_BIT_LIMIT: usize = 1 << 30;

struct Cand {
    cols: Box<[usize]>,
    vals: Box<[Code]>,
    weight: f64,
    count: u64,
    mass: f64,
    mv: f64,
    bound: f64,
    cooc: Vec<u64>,
}

impl Cand {
    fn through(&self, m_w: f64) -> f64 {
        (self.mv + self.mass * (m_w - self.weight)).min(self.bound)
    }
}

struct Group {
    cols: Box<[usize]>,
    map: HashMap<Box<[Code]>, usize>,
}

/// One counting level: candidates of equal size, grouped by column set.
#[derive(Default)]
struct Level {
    cands: Vec<Cand>,
    groups: Vec<Group>,
    group_of: HashMap<Box<[usize]>, usize>,
}

impl Level {
    fn insert(&mut self, cand: Cand) -> usize {
        let g = match self.group_of.get(&cand.cols) {
            Some(&g) => g,
            None => {
                self.groups.push(Group {
                    cols: cand.cols.clone(),
                    map: HashMap::new(),
                });
                self.group_of.insert(cand.cols.clone(), self.groups.len() - 1);
                self.groups.len() - 1
            }
        };
        let idx = self.cands.len();
        self.groups[g].map.insert(cand.vals.clone(), idx);
        self.cands.push(cand);
        idx
    }

    fn get(&self, cols: &[usize], vals: &[Code]) -> Option<&Cand> {
        let g = *self.group_of.get(cols)?;
        self.groups[g].map.get(vals).map(|&i| &self.cands[i])
    }
}

struct Searcher<'a> {
    data: &'a TupleSet,
    top: &'a [f64],
    m_w: f64,
    weigher: &'a Weigher,
    constraint: &'a DrillConstraint,
    base_cols: Vec<usize>,
    star: Option<usize>,
    /// Free columns other than the star column, ascending.
    ext: Vec<usize>,
    offset: Vec<usize>,
    total_bits: usize,
    cooc_bits_used: usize,
    cooc_enabled: bool,
}

impl Searcher<'_> {
    fn weight(&self, cols: &[usize]) -> f64 {
        self.weigher
            .weight_of_columns(self.base_cols.iter().chain(cols).copied())
    }

    /// Index into `ext` of the first column a candidate may be extended with.
    fn first_ext(&self, cols: &[usize]) -> usize {
        match cols.iter().rev().find(|&&c| Some(c) != self.star) {
            Some(&last) => self.ext.partition_point(|&c| c <= last),
            None => 0,
        }
    }

    fn cooc_lo(&self, cols: &[usize]) -> usize {
        let i = self.first_ext(cols);
        if i == self.ext.len() {
            self.total_bits
        } else {
            self.offset[self.ext[i]]
        }
    }

    fn new_cand(&mut self, cols: Box<[usize]>, vals: Box<[Code]>, bound: f64) -> Cand {
        let weight = self.weight(&cols);
        let bits = self.total_bits - self.cooc_lo(&cols);
        let cooc = if self.cooc_enabled && self.cooc_bits_used + bits <= COOC_BIT_LIMIT {
            self.cooc_bits_used += bits;
            vec![0u64; bits.div_ceil(64)]
        } else {
            self.cooc_enabled = false;
            Vec::new()
        };
        Cand {
            cols,
            vals,
            weight,
            count: 0,
            mass: 0.0,
            mv: 0.0,
            bound,
            cooc,
        }
    }

    fn credit(&self, cand: &mut Cand, row: &[Code], mass: f64, top: f64) {
        cand.count += 1;
        cand.mass += mass;
        cand.mv += mass * (cand.weight - top).max(0.0);
        if !cand.cooc.is_empty() {
            let first = self.first_ext(&cand.cols);
            let lo = self.offset[self.ext[first]];
            for &c in &self.ext[first..] {
                let bit = self.offset[c] - lo + row[c] as usize;
                cand.cooc[bit / 64] |= 1 << (bit % 64);
            }
        }
    }

    /// First pass: every single free column (or just the star column), values discovered from the data.
    fn first_level(&mut self) -> Level {
        let seeds: Vec<usize> = match self.star {
            Some(s) => vec![s],
            None => self.ext.clone(),
        };
        let mut level = Level::default();
        let mut slots: Vec<HashMap<Code, usize>> = vec![HashMap::new(); seeds.len()];
        for i in 0..self.data.len() {
            let row = self.data.row(i);
            if !self.constraint.base.covers(row) {
                continue;
            }
            let (mass, top) = (self.data.mass(i), self.top[i]);
            for (s, &c) in seeds.iter().enumerate() {
                let idx = match slots[s].get(&row[c]) {
                    Some(&idx) => idx,
                    None => {
                        let cand = self.new_cand(Box::new([c]), Box::new([row[c]]), f64::INFINITY);
                        let idx = level.insert(cand);
                        slots[s].insert(row[c], idx);
                        idx
                    }
                };
                self.credit(&mut level.cands[idx], row, mass, top);
            }
        }
        level
    }

    fn count_level(&self, level: &mut Level) {
        let mut key: Vec<Code> = Vec::new();
        for i in 0..self.data.len() {
            let row = self.data.row(i);
            if !self.constraint.base.covers(row) {
                continue;
            }
            let (mass, top) = (self.data.mass(i), self.top[i]);
            for g in &level.groups {
                key.clear();
                key.extend(g.cols.iter().map(|&c| row[c]));
                if let Some(&idx) = g.map.get(key.as_slice()) {
                    self.credit(&mut level.cands[idx], row, mass, top);
                }
            }
        }
    }

    /// Builds the next level from the survivors of `prev`, pruning against `h`.
    fn next_level(&mut self, prev: &Level, h: f64, stats: &mut SearchStats) -> Level {
        let mut next = Level::default();
        let cooc_was_enabled = self.cooc_enabled;
        let ext = self.ext.clone();
        for parent in &prev.cands {
            if parent.count == 0 || parent.through(self.m_w) < h {
                continue;
            }
            let first = self.first_ext(&parent.cols);
            let lo = self.cooc_lo(&parent.cols);
            for &c in &ext[first..] {
                let card = self.data.cardinalities()[c] as Code;
                for v in 0..card {
                    if !parent.cooc.is_empty() {
                        let bit = self.offset[c] - lo + v as usize;
                        if parent.cooc[bit / 64] & (1 << (bit % 64)) == 0 {
                            continue;
                        }
                    } else if cooc_was_enabled {
                        continue;
                    }
                    let pos = parent.cols.partition_point(|&x| x < c);
                    let mut cols = parent.cols.to_vec();
                    let mut vals = parent.vals.to_vec();
                    cols.insert(pos, c);
                    vals.insert(pos, v);
                    let Some(bound) = self.bound_from_subrules(prev, &cols, &vals) else {
                        continue;
                    };
                    if bound < h {
                        stats.pruned += 1;
                        continue;
                    }
                    let cand = self.new_cand(cols.into(), vals.into(), bound);
                    next.insert(cand);
                }
            }
        }
        next
    }

    /// Minimum pruning bound over the immediate feasible sub-rules, or `None`
    /// when one of them was not counted in the previous pass.
    fn bound_from_subrules(&self, prev: &Level, cols: &[usize], vals: &[Code]) -> Option<f64> {
        let mut bound = f64::INFINITY;
        let mut sub_cols = Vec::with_capacity(cols.len() - 1);
        let mut sub_vals = Vec::with_capacity(cols.len() - 1);
        for drop in 0..cols.len() {
            if Some(cols[drop]) == self.star {
                continue;
            }
            sub_cols.clear();
            sub_vals.clear();
            for i in (0..cols.len()).filter(|&i| i != drop) {
                sub_cols.push(cols[i]);
                sub_vals.push(vals[i]);
            }
            let sub = prev.get(&sub_cols, &sub_vals)?;
            bound = bound.min(sub.through(self.m_w));
        }
        Some(bound)
    }

    fn rule_of(&self, cand: &Cand) -> Rule {
        let mut r = self.constraint.base.clone();
        for (&c, &v) in cand.cols.iter().zip(cand.vals.iter()) {
            r = r.with(c, v);
        }
        r
    }

    fn entry(&self, cand: &Cand) -> CandidateEntry {
        CandidateEntry {
            rule: self.rule_of(cand),
            weight: cand.weight,
            count: cand.mass,
            marginal_value: cand.mv,
            upper_bound: cand.bound,
        }
    }
}

/// Strict preference between counted rules: larger marginal value, then
/// fewer instantiated columns, then canonical rule order.
pub(crate) fn prefer(a: &CandidateEntry, b: &CandidateEntry) -> bool {
    if a.marginal_value != b.marginal_value {
        return a.marginal_value > b.marginal_value;
    }
    let (sa, sb) = (a.rule.size(), b.rule.size());
    if sa != sb {
        return sa < sb;
    }
    a.rule < b.rule
}

/// The pruned marginal search over `data`, given per-row top weights.
pub fn search(
    data: &TupleSet,
    top: &[f64],
    m_w: f64,
    weigher: &Weigher,
    constraint: &DrillConstraint,
) -> (Option<CandidateEntry>, SearchStats) {
    let free = constraint.free_columns();
    let star = constraint.star_column.filter(|c| free.contains(c));
    if constraint.star_column.is_some() && star.is_none() {
        return (None, SearchStats::default());
    }
    let ext: Vec<usize> = free.iter().copied().filter(|&c| Some(c) != star).collect();
    let mut offset = vec![0; data.width()];
    let mut total_bits = 0;
    for &c in &ext {
        offset[c] = total_bits;
        total_bits += data.cardinalities()[c];
    }
    let mut s = Searcher {
        data,
        top,
        m_w,
        weigher,
        constraint,
        base_cols: constraint.base.instantiated().map(|(c, _)| c).collect(),
        star,
        ext,
        offset,
        total_bits,
        cooc_bits_used: 0,
        cooc_enabled: true,
    };
    let mut stats = SearchStats::default();
    let mut best: Option<CandidateEntry> = None;
    let mut h = 0.0_f64;
    let max_passes = free.len();
    if max_passes == 0 {
        return (None, stats);
    }

    let mut level = s.first_level();
    loop {
        stats.passes += 1;
        stats.counted += level.cands.len();
        for cand in &level.cands {
            h = h.max(cand.mv);
            let take = match &best {
                None => true,
                Some(b) => {
                    cand.mv > b.marginal_value
                        || (cand.mv == b.marginal_value && prefer(&s.entry(cand), b))
                }
            };
            if take {
                best = Some(s.entry(cand));
            }
        }
        if stats.passes >= max_passes {
            break;
        }
        s.cooc_bits_used = 0;
        let mut next = s.next_level(&level, h, &mut stats);
        if next.cands.is_empty() {
            break;
        }
        s.count_level(&mut next);
        level = next;
    }
    (best, stats)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrsParams {
    pub k: usize,
    pub m_w: f64,
    pub time_limit: Option<Duration>,
}

impl BrsParams {
    pub fn new(k: usize, m_w: f64) -> Self {
        BrsParams {
            k,
            m_w,
            time_limit: Some(Duration::from_secs(5)),
        }
    }
}

/// A rule as it is found, before the final list is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct FoundRule {
    pub rule: Rule,
    pub weight: f64,
    /// Scaled aggregate of the rows the rule covers.
    pub count: f64,
    pub marginal_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BrsOutcome {
    pub list: ScoredRuleList,
    pub searches: Vec<SearchStats>,
    pub timed_out: bool,
}

/// Greedily builds up to `params.k` rules, calling `emit` as each is found.
pub fn best_rule_set(
    data: &TupleSet,
    weigher: &Weigher,
    params: &BrsParams,
    constraint: &DrillConstraint,
    mut emit: impl FnMut(&FoundRule),
) -> BrsOutcome {
    let start = Instant::now();
    let mut top = vec![0.0; data.len()];
    let mut chosen: Vec<Rule> = Vec::new();
    let mut out = BrsOutcome::default();
    for _ in 0..params.k {
        if params.time_limit.is_some_and(|t| start.elapsed() >= t) {
            out.timed_out = true;
            break;
        }
        let (best, stats) = search(data, &top, params.m_w, weigher, constraint);
        out.searches.push(stats);
        let Some(best) = best.filter(|b| b.marginal_value > 0.0) else {
            break;
        };
        for (i, row) in data.rows().enumerate() {
            if best.rule.covers(row) {
                top[i] = top[i].max(best.weight);
            }
        }
        emit(&FoundRule {
            rule: best.rule.clone(),
            weight: best.weight,
            count: best.count * data.scale(),
            marginal_value: best.marginal_value * data.scale(),
        });
        chosen.push(best.rule);
    }
    out.list = score::score(data, &chosen, weigher);
    out
}

/// Narrows `data` to the rows covered by `base` and prepares the constraint
/// (and star-column weigher) for expanding it.
pub fn drill_reduce(
    data: &TupleSet,
    base: &Rule,
    star_column: Option<usize>,
    weigher: &Weigher,
) -> Result<(TupleSet, Weigher, DrillConstraint)> {
    let view = if base.is_trivial() {
        data.clone()
    } else {
        data.filter(base)
    };
    let weigher = match star_column {
        Some(c) if base.get(c).is_some() => {
            return Err(Error::ColumnInstantiated(format!("#{c}")));
        }
        Some(c) => weigher.with_star_column(c),
        None => weigher.clone(),
    };
    let constraint = DrillConstraint {
        base: base.clone(),
        star_column,
    };
    Ok((view, weigher, constraint))
}

/// Guesses a good `m_w` by running an uncapped search on a uniform probe
/// sample and doubling the heaviest weight it returns.
pub fn estimate_mw(
    data: &TupleSet,
    weigher: &Weigher,
    k: usize,
    probe_size: usize,
    rng: &mut impl Rng,
) -> f64 {
    let n = data.len();
    let mut picked: Vec<usize> = (0..n.min(probe_size.max(1))).collect();
    for i in picked.len()..n {
        let j = rng.gen_range(0..=i);
        if j < picked.len() {
            picked[j] = i;
        }
    }
    picked.sort_unstable();
    let mut probe = TupleSet::empty(data.cardinalities().to_vec(), data.has_mass());
    for &i in &picked {
        probe.push(data.id(i), data.row(i), data.mass(i));
    }
    let params = BrsParams {
        k,
        m_w: weigher.max_weight(),
        time_limit: None,
    };
    let outcome = best_rule_set(
        &probe,
        weigher,
        &params,
        &DrillConstraint::root(data.width()),
        |_| {},
    );
    let x = outcome
        .list
        .rules
        .iter()
        .map(|r| r.weight)
        .fold(0.0, f64::max);
    (2.0 * x).max(1.0)
}
