//! Exact evaluation of rule lists: Count, MCount and Score.

use serde::{Deserialize, Serialize};

use crate::rule::Rule;
use crate::tuples::TupleSet;
use crate::weight::Weigher;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleStat {
    pub rule: Rule,
    pub weight: f64,
    pub count: f64,
    pub marginal_count: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_sum: Option<f64>,
}

impl RuleStat {
    /// The aggregate the score is built from: the sum when one is tracked.
    pub fn value(&self) -> f64 {
        self.sum.unwrap_or(self.count)
    }

    pub fn marginal_value(&self) -> f64 {
        self.marginal_sum.unwrap_or(self.marginal_count)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredRuleList {
    pub rules: Vec<RuleStat>,
    pub score: f64,
}

impl ScoredRuleList {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().map(|s| &s.rule)
    }
}

/// Sorts by non-increasing weight, ties in canonical rule order.
pub fn sort_by_weight(rules: &mut [(Rule, f64)]) {
    rules.sort_by(|(ra, wa), (rb, wb)| wb.total_cmp(wa).then_with(|| ra.cmp(rb)));
}

/// Scaled aggregate of the rows covered by `rule` (count, or sum when the set carries masses).
pub fn count(data: &TupleSet, rule: &Rule) -> f64 {
    let (n, mass) = data.raw_aggregate(rule);
    let raw = if data.has_mass() { mass } else { n as f64 };
    raw * data.scale()
}

/// Each row is credited to the first rule in list order that covers it.
pub fn marginal_counts(data: &TupleSet, rules: &[Rule]) -> Vec<f64> {
    let mut out = vec![0.0; rules.len()];
    for (i, row) in data.rows().enumerate() {
        if let Some(j) = rules.iter().position(|r| r.covers(row)) {
            out[j] += data.mass(i);
        }
    }
    out.iter_mut().for_each(|v| *v *= data.scale());
    out
}

/// Orders `rules` by weight and evaluates the resulting list.
pub fn score(data: &TupleSet, rules: &[Rule], weigher: &Weigher) -> ScoredRuleList {
    let mut weighted: Vec<(Rule, f64)> = rules
        .iter()
        .map(|r| (r.clone(), weigher.weight(r)))
        .collect();
    sort_by_weight(&mut weighted);
    score_list(data, weighted)
}

/// Evaluates a list in the order given.
pub fn score_list(data: &TupleSet, weighted: Vec<(Rule, f64)>) -> ScoredRuleList {
    let k = weighted.len();
    let mut count = vec![0usize; k];
    let mut mcount = vec![0usize; k];
    let mut sum = vec![0.0; k];
    let mut msum = vec![0.0; k];
    for (i, row) in data.rows().enumerate() {
        let m = data.mass(i);
        let mut first = true;
        for (j, (r, _)) in weighted.iter().enumerate() {
            if r.covers(row) {
                count[j] += 1;
                sum[j] += m;
                if first {
                    mcount[j] += 1;
                    msum[j] += m;
                    first = false;
                }
            }
        }
    }
    let s = data.scale();
    let with_sum = data.has_mass();
    let rules: Vec<RuleStat> = weighted
        .into_iter()
        .enumerate()
        .map(|(j, (rule, weight))| RuleStat {
            rule,
            weight,
            count: count[j] as f64 * s,
            marginal_count: mcount[j] as f64 * s,
            sum: with_sum.then(|| sum[j] * s),
            marginal_sum: with_sum.then(|| msum[j] * s),
        })
        .collect();
    let score = rules.iter().map(|r| r.marginal_value() * r.weight).sum();
    ScoredRuleList { rules, score }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::tuples::Aggregate;
    use crate::weight::WeightConfig;

    #[test]
    fn f1_worked_example() {
        let t = fixtures::f1();
        let v = TupleSet::from_table(&t, &Rule::trivial(2), &Aggregate::Count).unwrap();
        let a_b1 = Rule::new(vec![Some(0), Some(0)]);
        let a_star = Rule::new(vec![Some(0), None]);
        assert_eq!(count(&v, &a_b1), 100.0);
        assert_eq!(count(&v, &a_star), 1000.0);
        assert_eq!(
            marginal_counts(&v, &[a_b1.clone(), a_star.clone()]),
            vec![100.0, 900.0]
        );
        assert_eq!(
            marginal_counts(&v, &[a_star.clone(), a_b1.clone()]),
            vec![1000.0, 0.0]
        );
        let w = WeightConfig::size().compile(t.columns()).unwrap();
        let s = score(&v, &[a_star.clone(), a_b1.clone()], &w);
        assert_eq!(s.rules[0].rule, a_b1);
        assert_eq!(s.rules[0].marginal_count * s.rules[0].weight, 200.0);
        assert_eq!(s.rules[1].marginal_count * s.rules[1].weight, 900.0);
        assert_eq!(s.score, 1100.0);
    }

    #[test]
    fn trivial_rule_scores_zero() {
        let t = fixtures::f2();
        let v = TupleSet::from_table(&t, &Rule::trivial(3), &Aggregate::Count).unwrap();
        let w = WeightConfig::size().compile(t.columns()).unwrap();
        let s = score(&v, &[Rule::trivial(3)], &w);
        assert_eq!(s.score, 0.0);
        assert_eq!(s.rules[0].count, 8.0);
    }

    #[test]
    fn scaled_sample_counts() {
        let t = fixtures::f2();
        let v = TupleSet::from_table(&t, &Rule::trivial(3), &Aggregate::Count)
            .unwrap()
            .with_scale(2.5, false);
        assert_eq!(count(&v, &Rule::from_pairs(3, &[(0, 0)])), 12.5);
    }
}
