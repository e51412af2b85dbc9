#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;
use smartdrill::sampler::allocate::quantum;
use smartdrill::sampler::{AllocNode, AllocationProblem};

/// A random drill tree with at most `max_internal` internal nodes, each with
/// at most `max_kids` leaf children. Selectivities along a path multiply, so
/// the full matrix holds every ancestor-descendant ratio.
pub fn random_tree(rng: &mut impl Rng, max_internal: usize, max_kids: usize, min_ss: usize, memory: usize) -> AllocationProblem {
    let mut parent: Vec<Option<usize>> = vec![None];
    let mut edge: Vec<f64> = vec![1.0];
    let internal = rng.gen_range(1..=max_internal);
    let mut internals = vec![0usize];
    for _ in 1..internal {
        let at = internals[rng.gen_range(0..internals.len())];
        parent.push(Some(at));
        edge.push(rng.gen_range(1..=20) as f64 / 20.0);
        internals.push(parent.len() - 1);
    }
    for &i in &internals {
        for _ in 0..rng.gen_range(0..=max_kids) {
            parent.push(Some(i));
            edge.push(rng.gen_range(1..=20) as f64 / 20.0);
        }
    }
    let n = parent.len();
    let mut leaf = vec![true; n];
    for p in parent.iter().flatten() {
        leaf[*p] = false;
    }
    let leaves = leaf.iter().filter(|&&l| l).count() as f64;
    let mut sel = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut acc = 1.0;
        let mut at = Some(j);
        while let Some(a) = at {
            sel[a][j] = acc;
            acc *= edge[a];
            at = parent[a];
        }
    }
    AllocationProblem {
        nodes: (0..n)
            .map(|i| AllocNode {
                parent: parent[i],
                p: if leaf[i] { 1.0 / leaves } else { 0.0 },
            })
            .collect(),
        selectivity: sel,
        memory,
        min_ss,
    }
}

fn satisfied(ess: f64, min_ss: usize) -> bool {
    ess + 1e-9 >= min_ss as f64
}

/// Best satisfied probability on the quantized grid, where a leaf may only use
/// its own sample and its parent's. Tries every parent budget vector, then
/// the best subset of leaves to top up with the remaining units.
pub fn quantized_oracle(p: &AllocationProblem) -> f64 {
    let q = quantum(p.min_ss);
    let units = p.memory / q;
    let n = p.nodes.len();
    let mut leaf = vec![true; n];
    for node in &p.nodes {
        if let Some(par) = node.parent {
            leaf[par] = false;
        }
    }
    let parents: Vec<usize> = (0..n)
        .filter(|&i| !leaf[i] && (0..n).any(|j| leaf[j] && p.nodes[j].parent == Some(i)))
        .collect();
    let leaves: Vec<usize> = (0..n).filter(|&i| leaf[i]).collect();

    let mut best = 0.0f64;
    let mut budget = vec![0usize; parents.len()];
    loop {
        let spent: usize = budget.iter().sum();
        if spent <= units {
            let left = units - spent;
            // units each leaf still needs
            let needs: Vec<(f64, Option<usize>)> = leaves
                .iter()
                .map(|&l| {
                    let from_parent = p.nodes[l].parent.map_or(0.0, |par| {
                        let k = parents.iter().position(|&x| x == par).unwrap();
                        (budget[k] * q) as f64 * p.selectivity[par][l]
                    });
                    let mut x = 0;
                    while !satisfied(from_parent + (x * q) as f64, p.min_ss) {
                        x += 1;
                        if x > units {
                            return (p.nodes[l].p, None);
                        }
                    }
                    (p.nodes[l].p, Some(x))
                })
                .collect();
            for mask in 0u32..(1 << leaves.len()) {
                let mut cost = 0;
                let mut value = 0.0;
                let mut ok = true;
                for (b, (pl, need)) in needs.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        match need {
                            Some(x) => {
                                cost += x;
                                value += pl;
                            }
                            None => ok = false,
                        }
                    }
                }
                if ok && cost <= left {
                    best = best.max(value);
                }
            }
        }
        // next budget vector
        let mut k = 0;
        loop {
            if k == budget.len() {
                return best;
            }
            budget[k] += 1;
            if budget[k] <= units {
                break;
            }
            budget[k] = 0;
            k += 1;
        }
    }
}

pub mod props {
    use rand::seq::SliceRandom;
    use rand::Rng;
    use smartdrill::score::{score, score_list};
    use smartdrill::{Rule, Table, Weigher};

    /// Every rule over the table's dictionaries.
    pub fn all_rules(t: &Table) -> Vec<Rule> {
        let mut out = vec![Rule::trivial(t.num_columns())];
        for c in 0..t.num_columns() {
            out = out
                .iter()
                .flat_map(|r| {
                    std::iter::once(r.clone())
                        .chain((0..t.column(c).distinct_count() as u32).map(move |v| r.with(c, v)))
                })
                .collect();
        }
        out
    }

    /// Score of a list taken in the given order: each row counts once, for
    /// the first rule covering it.
    pub fn ordered_score(t: &Table, list: &[(Rule, f64)]) -> f64 {
        t.scan()
            .filter_map(|(_, row)| list.iter().find(|(r, _)| r.covers(row)).map(|(_, w)| *w))
            .sum()
    }

    /// Sum over rows of the heaviest covering rule's weight.
    pub fn top_score(t: &Table, rules: &[Rule], w: &Weigher) -> f64 {
        t.scan()
            .map(|(_, row)| {
                rules
                    .iter()
                    .filter(|r| r.covers(row))
                    .map(|r| w.weight(r))
                    .fold(0.0, f64::max)
            })
            .sum()
    }

    fn view(t: &Table) -> smartdrill::TupleSet {
        smartdrill::TupleSet::from_table(t, &Rule::trivial(t.num_columns()), &smartdrill::Aggregate::Count).unwrap()
    }

    /// A random permutation of a random rule list never beats its
    /// weight-sorted order, and the sorted score is the per-row top weight.
    pub fn order_optimality_trial(rng: &mut impl Rng, t: &Table, w: &Weigher, universe: &[Rule]) -> Result<(), String> {
        let n = rng.gen_range(1..=6.min(universe.len()));
        let mut list: Vec<(Rule, f64)> = universe
            .choose_multiple(rng, n)
            .map(|r| (r.clone(), w.weight(r)))
            .collect();
        list.shuffle(rng);
        let rules: Vec<Rule> = list.iter().map(|(r, _)| r.clone()).collect();
        let v = view(t);
        let sorted = score(&v, &rules, w).score;
        let permuted = score_list(&v, list.clone()).score;
        let top = top_score(t, &rules, w);
        let ordered = ordered_score(t, &list);
        if (permuted - ordered).abs() > 1e-9 {
            return Err(format!("list evaluation {permuted} disagrees with oracle {ordered}"));
        }
        if (sorted - top).abs() > 1e-9 {
            return Err(format!("sorted score {sorted} differs from per-row top {top} for {rules:?}"));
        }
        if permuted > sorted + 1e-9 {
            return Err(format!("permutation {list:?} scores {permuted} > sorted {sorted}"));
        }
        Ok(())
    }

    /// Diminishing returns: for S ⊊ S′ and s ∉ S′, adding s helps S at least
    /// as much as it helps S′.
    pub fn submodularity_trial(rng: &mut impl Rng, t: &Table, w: &Weigher, universe: &[Rule]) -> Result<(), String> {
        let mut pool: Vec<&Rule> = universe.iter().collect();
        pool.shuffle(rng);
        let big = rng.gen_range(1..=6.min(pool.len() - 1));
        let s = pool[big].clone();
        let s_big: Vec<Rule> = pool[..big].iter().map(|r| (*r).clone()).collect();
        let small = rng.gen_range(0..big);
        let s_small: Vec<Rule> = s_big[..small].to_vec();
        let v = view(t);
        let f = |rules: &[Rule]| score(&v, rules, w).score;
        let with = |rules: &[Rule]| {
            let mut r = rules.to_vec();
            r.push(s.clone());
            r
        };
        let gain_small = f(&with(&s_small)) - f(&s_small);
        let gain_big = f(&with(&s_big)) - f(&s_big);
        // the oracle agrees on both gains
        let oracle_small = top_score(t, &with(&s_small), w) - top_score(t, &s_small, w);
        let oracle_big = top_score(t, &with(&s_big), w) - top_score(t, &s_big, w);
        if (gain_small - oracle_small).abs() > 1e-9 || (gain_big - oracle_big).abs() > 1e-9 {
            return Err("score gains disagree with the per-row oracle".into());
        }
        if gain_small + 1e-9 < gain_big {
            return Err(format!(
                "gain {gain_small} on {s_small:?} < gain {gain_big} on {s_big:?} adding {s:?}"
            ));
        }
        Ok(())
    }
}

pub mod sampling {
    use std::sync::Arc;

    use smartdrill::session::{MaxWeight, Session, SessionConfig};
    use smartdrill::Table;

    pub struct TrialError {
        pub mean_pct_error: f64,
        pub inside: usize,
        pub total: usize,
    }

    /// Opens a session whose root sample holds `min_ss` rows, expands the root
    /// and compares each displayed count with the exact count.
    pub fn root_expansion_error(t: &Arc<Table>, min_ss: usize, seed: u64) -> TrialError {
        let mut s = Session::new(
            Arc::clone(t),
            SessionConfig {
                k: 4,
                m_w: MaxWeight::Fixed(5.0),
                min_ss,
                memory: min_ss,
                seed,
                prefetch: false,
                ..SessionConfig::default()
            },
        )
        .unwrap();
        s.expand(&[]).unwrap();
        let mut errs = Vec::new();
        let mut inside = 0;
        for c in &s.root().children {
            let exact = t.scan().filter(|(_, r)| c.rule.covers(r)).count() as f64;
            errs.push(100.0 * (c.value - exact).abs() / exact);
            let (lo, hi) = c.interval.unwrap_or((c.value, c.value));
            if lo <= exact && exact <= hi {
                inside += 1;
            }
        }
        TrialError {
            mean_pct_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
            inside,
            total: errs.len(),
        }
    }
}
