//! Exhaustive reference searches for small inputs.
//!
//! These share no code with the pruned search beyond the tie-breaking rule,
//! and serve as test oracles and for tiny interactive tables.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::score::{self, ScoredRuleList};
use crate::tuples::TupleSet;
use crate::weight::Weigher;

use super::{prefer, CandidateEntry, DrillConstraint};

const MAX_UNIVERSE: usize = 5000;
const MAX_SUBSETS: f64 = 2e8;

/// Every rule obtained by keeping a subset of one covered row's free-column
/// values (on top of the base values). Includes the base rule itself.
fn universe(data: &TupleSet, constraint: &DrillConstraint) -> Vec<Rule> {
    let free = constraint.free_columns();
    let mut seen: HashMap<Rule, ()> = HashMap::new();
    for row in data.rows().filter(|row| constraint.base.covers(row)) {
        for mask in 0u64..(1u64 << free.len()) {
            let mut r = constraint.base.clone();
            for (bit, &c) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    r = r.with(c, row[c]);
                }
            }
            seen.insert(r, ());
        }
    }
    let mut rules: Vec<Rule> = seen.into_keys().collect();
    rules.sort();
    rules
}

/// The best marginal rule by direct evaluation of every admissible rule.
pub fn unpruned_best_marginal_rule(
    data: &TupleSet,
    top: &[f64],
    weigher: &Weigher,
    constraint: &DrillConstraint,
) -> Option<CandidateEntry> {
    let mut best: Option<CandidateEntry> = None;
    for rule in universe(data, constraint) {
        if !constraint.admits(&rule) {
            continue;
        }
        let weight = weigher.weight(&rule);
        let (mut count, mut mv) = (0.0, 0.0);
        for (i, row) in data.rows().enumerate() {
            if rule.covers(row) {
                count += data.mass(i);
                mv += data.mass(i) * (weight - top[i]).max(0.0);
            }
        }
        let entry = CandidateEntry {
            rule,
            weight,
            count,
            marginal_value: mv,
            upper_bound: f64::INFINITY,
        };
        if best.as_ref().is_none_or(|b| prefer(&entry, b)) {
            best = Some(entry);
        }
    }
    best
}

/// Greedy selection driven by [`unpruned_best_marginal_rule`].
pub fn unpruned_best_rule_set(
    data: &TupleSet,
    weigher: &Weigher,
    k: usize,
    constraint: &DrillConstraint,
) -> ScoredRuleList {
    let mut top = vec![0.0; data.len()];
    let mut chosen = Vec::new();
    for _ in 0..k {
        let Some(best) = unpruned_best_marginal_rule(data, &top, weigher, constraint)
            .filter(|b| b.marginal_value > 0.0)
        else {
            break;
        };
        for (i, row) in data.rows().enumerate() {
            if best.rule.covers(row) {
                top[i] = top[i].max(best.weight);
            }
        }
        chosen.push(best.rule);
    }
    score::score(data, &chosen, weigher)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The optimal set of at most `k` rules, found by trying every `k`-subset of
/// the rules that cover at least one row, plus the trivial rule.
///
/// The score of each subset is computed per row as the weight of the heaviest
/// covering rule, independently of list ordering.
pub fn brute_force_best_set(data: &TupleSet, weigher: &Weigher, k: usize) -> Result<ScoredRuleList> {
    let root = DrillConstraint::root(data.width());
    let rules = universe(data, &root);
    if rules.len() > MAX_UNIVERSE {
        return Err(Error::InstanceTooLarge(format!(
            "{} candidate rules exceed {MAX_UNIVERSE}",
            rules.len()
        )));
    }
    let k = k.min(rules.len());
    if binomial(rules.len(), k) > MAX_SUBSETS {
        return Err(Error::InstanceTooLarge(format!(
            "C({}, {k}) subsets",
            rules.len()
        )));
    }
    if k == 0 {
        return Ok(ScoredRuleList::default());
    }
    let weights: Vec<f64> = rules.iter().map(|r| weigher.weight(r)).collect();
    let covered: Vec<Vec<usize>> = rules
        .iter()
        .map(|r| {
            data.rows()
                .enumerate()
                .filter(|(_, row)| r.covers(row))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    struct Dfs<'a> {
        weights: &'a [f64],
        covered: &'a [Vec<usize>],
        mass: Vec<f64>,
        best: f64,
        best_set: Vec<usize>,
        current: Vec<usize>,
    }
    impl Dfs<'_> {
        fn run(&mut self, start: usize, left: usize, top: &mut Vec<f64>) {
            if left == 0 {
                let total: f64 = top.iter().zip(&self.mass).map(|(w, m)| w * m).sum();
                if total > self.best {
                    self.best = total;
                    self.best_set = self.current.clone();
                }
                return;
            }
            for r in start..=self.weights.len() - left {
                let saved = top.clone();
                for &i in &self.covered[r] {
                    top[i] = top[i].max(self.weights[r]);
                }
                self.current.push(r);
                self.run(r + 1, left - 1, top);
                self.current.pop();
                *top = saved;
            }
        }
    }

    let mut dfs = Dfs {
        weights: &weights,
        covered: &covered,
        mass: (0..data.len()).map(|i| data.mass(i)).collect(),
        best: -1.0,
        best_set: Vec::new(),
        current: Vec::new(),
    };
    dfs.run(0, k, &mut vec![0.0; data.len()]);
    let chosen: Vec<Rule> = dfs.best_set.iter().map(|&i| rules[i].clone()).collect();
    Ok(score::score(data, &chosen, weigher))
}

/// Score of a rule set computed per row: each row contributes the weight of
/// the heaviest rule covering it.
pub fn score_by_top(data: &TupleSet, rules: &[Rule], weigher: &Weigher) -> f64 {
    let weights: Vec<f64> = rules.iter().map(|r| weigher.weight(r)).collect();
    data.rows()
        .enumerate()
        .map(|(i, row)| {
            let top = rules
                .iter()
                .zip(&weights)
                .filter(|(r, _)| r.covers(row))
                .map(|(_, &w)| w)
                .fold(0.0, f64::max);
            top * data.mass(i)
        })
        .sum::<f64>()
        * data.scale()
}
