//! Choosing per-node sample sizes under a memory budget.
//!
//! A drill tree of `N` nodes is given with a probability `p` on each leaf (the
//! chance the user expands it next). A budget `n_r` of tuple slots per node
//! yields an effective sample size for each leaf,
//! `ess(l) = Σ_r S[r][l] · n_r`, where `S[r][l]` is the fraction of `r`'s rows
//! also covered by `l`. A leaf is satisfied when `ess(l) ≥ minSS`.
//!
//! [`allocate_dp`] maximizes the satisfied probability mass exactly on a
//! quantized memory grid, assuming each leaf only draws from its own sample
//! and its parent's. [`allocate_convex`] minimizes the hinge relaxation
//! `Σ p_l · max(-1, -ess(l)/minSS)` over the full selectivity matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
/// Largest leaf fan-out the exact allocator enumerates (3^12 assignments).
pub const MAX_FANOUT: usize = 12;
const FULL_SCAN_LIMIT: usize = 2_000_000;
const LP_EPS: f64 = 1e-10;
const BNB_NODE_LIMIT: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocNode {
    pub parent: Option<usize>,
    /// Next-expansion probability; only read on leaves.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub nodes: Vec<AllocNode>,
    /// `selectivity[i][j]`: fraction of node `i`'s rows covered by node `j`.
    /// The diagonal is 1.
    pub selectivity: Vec<Vec<f64>>,
    pub memory: usize,
    pub min_ss: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub budgets: Vec<usize>,
    pub objective: f64,
}

impl AllocationPlan {
    pub fn total(&self) -> usize {
        self.budgets.iter().sum()
    }
}

/// Memory quantum used by the exact allocator.
pub fn quantum(min_ss: usize) -> usize {
    (min_ss / 100).max(1)
}

/// Smallest number of `per_unit` steps that reaches `need`, with the same
/// slack as the satisfaction test.
fn ceil_div(need: f64, per_unit: f64) -> usize {
    if need <= TOL {
        0
    } else {
        ((need - TOL) / per_unit).ceil().max(0.0) as usize
    }
}

impl AllocationProblem {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut kids = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                kids[p].push(i);
            }
        }
        kids
    }

    pub fn is_leaf(&self) -> Vec<bool> {
        let mut leaf = vec![true; self.nodes.len()];
        for n in &self.nodes {
            if let Some(p) = n.parent {
                leaf[p] = false;
            }
        }
        leaf
    }

    pub fn leaves(&self) -> Vec<usize> {
        let leaf = self.is_leaf();
        (0..self.nodes.len()).filter(|&i| leaf[i]).collect()
    }

    pub fn total_p(&self) -> f64 {
        self.leaves().iter().map(|&l| self.nodes[l].p).sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.min_ss == 0 {
            return Err(Error::InvalidConfig("minimum sample size must be positive".into()));
        }
        if self.selectivity.len() != n || self.selectivity.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidConfig(format!(
                "selectivity matrix must be {n} x {n}"
            )));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.parent.is_some_and(|p| p >= n || p == i) {
                return Err(Error::InvalidConfig(format!("node {i} has an invalid parent")));
            }
            if !(node.p >= 0.0 && node.p.is_finite()) {
                return Err(Error::InvalidConfig(format!("node {i} has probability {}", node.p)));
            }
        }
        for row in &self.selectivity {
            if row.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::InvalidConfig("selectivity outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Effective sample sizes with every contributing sample.
    pub fn ess(&self, budgets: &[f64]) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|j| (0..n).map(|i| self.selectivity[i][j] * budgets[i]).sum())
            .collect()
    }

    /// Effective sample sizes when a node draws only from itself and its parent.
    pub fn ess_parent_child(&self, budgets: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(j, node)| {
                budgets[j]
                    + node
                        .parent
                        .map_or(0.0, |p| self.selectivity[p][j] * budgets[p])
            })
            .collect()
    }

    fn satisfied(&self, ess: f64) -> bool {
        ess + TOL >= self.min_ss as f64
    }

    /// Probability mass of satisfied leaves under the parent-child model.
    pub fn step_objective(&self, budgets: &[usize]) -> f64 {
        let b: Vec<f64> = budgets.iter().map(|&x| x as f64).collect();
        let ess = self.ess_parent_child(&b);
        self.leaves()
            .into_iter()
            .filter(|&l| self.satisfied(ess[l]))
            .map(|l| self.nodes[l].p)
            .sum()
    }

    /// Probability mass of satisfied leaves with every contributing sample.
    pub fn full_step_objective(&self, budgets: &[usize]) -> f64 {
        let b: Vec<f64> = budgets.iter().map(|&x| x as f64).collect();
        let ess = self.ess(&b);
        self.leaves()
            .into_iter()
            .filter(|&l| self.satisfied(ess[l]))
            .map(|l| self.nodes[l].p)
            .sum()
    }

    /// The relaxed objective, `Σ_leaves p · max(-1, -ess/minSS)`. Lower is better.
    pub fn hinge_objective(&self, budgets: &[f64]) -> f64 {
        let ess = self.ess(budgets);
        let m = self.min_ss as f64;
        self.leaves()
            .into_iter()
            .map(|l| self.nodes[l].p * (-ess[l] / m).max(-1.0))
            .sum()
    }
}

struct Choice {
    cost: usize,
    value: f64,
    /// (node, units)
    units: Vec<(usize, usize)>,
}

/// Assignments of one parent and its leaf children: each child is covered by
/// the parent's sample, left unsatisfied, or topped up with its own sample.
///
/// With category 1 the children covered by the parent alone, the parent
/// needs `u0 ≥ minSS / (Q · min S(parent, c))` units. Each topped-up child
/// `c` then needs `ceil((minSS - u0·Q·S(parent, c)) / Q)` units of its own,
/// so the assignment costs `u0 + Σ_topups`. A larger `u0` can be cheaper when
/// it shrinks the top-ups, so the cheapest `u0` is searched for.
fn group_choices(
    problem: &AllocationProblem,
    parent: usize,
    kids: &[usize],
    q: usize,
    units: usize,
) -> Result<Vec<Choice>> {
    let d = kids.len();
    if d > MAX_FANOUT {
        return Err(Error::FanoutTooLarge(d));
    }
    let m = problem.min_ss as f64;
    let qf = q as f64;
    let sel: Vec<f64> = kids.iter().map(|&c| problem.selectivity[parent][c]).collect();
    let assignments = 3usize.pow(d as u32);
    let full_scan = (units + 1).saturating_mul(assignments) <= FULL_SCAN_LIMIT;
    let topup = |u0: usize, i: usize| ceil_div(m - u0 as f64 * qf * sel[i], qf);

    let mut out = Vec::new();
    let mut cats = vec![0u8; d];
    for code in 0..assignments {
        let mut x = code;
        for c in cats.iter_mut() {
            *c = (x % 3) as u8;
            x /= 3;
        }
        let covered: Vec<usize> = (0..d).filter(|&i| cats[i] == 0).collect();
        let topped: Vec<usize> = (0..d).filter(|&i| cats[i] == 2).collect();
        let u_min = match covered.iter().map(|&i| sel[i]).reduce(f64::min) {
            None => 0,
            Some(s) if s <= 0.0 => continue,
            Some(s) => ceil_div(m, qf * s),
        };
        if u_min > units {
            continue;
        }
        let cost_at = |u0: usize| u0 + topped.iter().map(|&i| topup(u0, i)).sum::<usize>();

        let mut best = (cost_at(u_min), u_min);
        if !topped.is_empty() {
            if full_scan {
                for u0 in u_min + 1..=units {
                    if u0 >= best.0 {
                        break;
                    }
                    let c = cost_at(u0);
                    if c < best.0 {
                        best = (c, u0);
                    }
                }
            } else {
                // the cost is piecewise linear in u0 and can only turn at the
                // points where some top-up reaches zero
                for &i in &topped {
                    if sel[i] > 0.0 {
                        let u0 = ceil_div(m, qf * sel[i]);
                        if u0 > u_min && u0 <= units {
                            let c = cost_at(u0);
                            if c < best.0 || (c == best.0 && u0 < best.1) {
                                best = (c, u0);
                            }
                        }
                    }
                }
            }
        }
        let (cost, u0) = best;
        if cost > units {
            continue;
        }
        let value = covered.iter().chain(&topped).map(|&i| problem.nodes[kids[i]].p).sum();
        let mut alloc = vec![(parent, u0)];
        alloc.extend(topped.iter().map(|&i| (kids[i], topup(u0, i))));
        out.push(Choice {
            cost,
            value,
            units: alloc,
        });
    }
    Ok(pareto(out))
}

/// Keeps choices that are not dominated in (cost, value).
fn pareto(mut choices: Vec<Choice>) -> Vec<Choice> {
    choices.sort_by(|a, b| a.cost.cmp(&b.cost).then(b.value.total_cmp(&a.value)));
    let mut out: Vec<Choice> = Vec::new();
    for c in choices {
        if out.last().is_none_or(|last| c.value > last.value) {
            out.push(c);
        }
    }
    out
}

/// Exact allocation on the grid of `max(1, minSS/100)`-slot units, under the
/// parent-child model. Fails with [`Error::FanoutTooLarge`] when a node has
/// more than [`MAX_FANOUT`] leaf children.
pub fn allocate_dp(problem: &AllocationProblem) -> Result<AllocationPlan> {
    problem.validate()?;
    let q = quantum(problem.min_ss);
    let units = problem.memory / q;
    let kids = problem.children();
    let leaf = problem.is_leaf();

    let mut groups: Vec<Vec<Choice>> = Vec::new();
    for i in 0..problem.len() {
        if leaf[i] {
            if problem.nodes[i].parent.is_none() {
                let cost = ceil_div(problem.min_ss as f64, q as f64);
                let mut choices = vec![Choice {
                    cost: 0,
                    value: 0.0,
                    units: vec![],
                }];
                if cost <= units {
                    choices.push(Choice {
                        cost,
                        value: problem.nodes[i].p,
                        units: vec![(i, cost)],
                    });
                }
                groups.push(pareto(choices));
            }
            continue;
        }
        let leaf_kids: Vec<usize> = kids[i].iter().copied().filter(|&c| leaf[c]).collect();
        if !leaf_kids.is_empty() {
            groups.push(group_choices(problem, i, &leaf_kids, q, units)?);
        }
    }

    // multiple-choice knapsack; best[u] is the value within u units
    let mut best = vec![0.0f64; units + 1];
    let mut picks: Vec<Vec<u32>> = Vec::with_capacity(groups.len());
    for choices in &groups {
        let mut next = vec![f64::NEG_INFINITY; units + 1];
        let mut pick = vec![0u32; units + 1];
        for u in 0..=units {
            for (ci, c) in choices.iter().enumerate() {
                if c.cost > u {
                    break;
                }
                let v = best[u - c.cost] + c.value;
                if v > next[u] {
                    next[u] = v;
                    pick[u] = ci as u32;
                }
            }
        }
        best = next;
        picks.push(pick);
    }

    let mut budgets = vec![0usize; problem.len()];
    let mut u = units;
    for (g, choices) in groups.iter().enumerate().rev() {
        let c = &choices[picks[g][u] as usize];
        for &(node, n) in &c.units {
            budgets[node] += n * q;
        }
        u -= c.cost;
    }
    let objective = problem.step_objective(&budgets);
    Ok(AllocationPlan { budgets, objective })
}

/// Hinge-loss allocation from all-zero budgets. `step` defaults to
/// `M / (100·√iterations)` and decays as `step/√t`.
pub fn allocate_convex(problem: &AllocationProblem, iterations: usize, step: Option<f64>) -> AllocationPlan {
    allocate_convex_traced(problem, iterations, step).0
}

/// [`allocate_convex`] plus the objective after every accepted descent step.
pub fn allocate_convex_traced(
    problem: &AllocationProblem,
    iterations: usize,
    step: Option<f64>,
) -> (AllocationPlan, Vec<f64>) {
    let n = problem.len();
    let memory = problem.memory as f64;
    if n == 0 || problem.memory == 0 || problem.min_ss == 0 {
        return (
            AllocationPlan {
                budgets: vec![0; n],
                objective: 0.0,
            },
            vec![0.0],
        );
    }
    let leaves = problem.leaves();
    let m = problem.min_ss as f64;
    let base = step.unwrap_or(memory / (100.0 * (iterations.max(1) as f64).sqrt()));

    let mut x = vec![0.0; n];
    let mut f = problem.hinge_objective(&x);
    let mut trace = vec![f];
    for t in 1..=iterations {
        let ess = problem.ess(&x);
        let mut g = vec![0.0; n];
        for &l in &leaves {
            if ess[l] < m {
                let w = problem.nodes[l].p / m;
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi -= w * problem.selectivity[i][l];
                }
            }
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let eta = base / (t as f64).sqrt() / norm;
        let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - eta * gi).collect();
        let cand = project(&cand, memory);
        let fc = problem.hinge_objective(&cand);
        if fc <= f {
            x = cand;
            f = fc;
            trace.push(f);
        }
    }

    let (lp, _) = solve_lp(problem, &vec![0; n], &vec![problem.memory; n]).expect("zero budgets are feasible");
    if problem.hinge_objective(&lp) <= f {
        x = lp;
    }
    let budgets = branch_and_bound(problem, round(problem, &x), BNB_NODE_LIMIT);
    let objective = problem.hinge_objective(&budgets.iter().map(|&b| b as f64).collect::<Vec<_>>());
    (AllocationPlan { budgets, objective }, trace)
}

/// Euclidean projection onto `{x ≥ 0, Σx ≤ cap}`.
pub fn project(v: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut acc, mut theta) = (0.0, 0.0);
    for (j, &uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - cap) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// The hinge problem as a linear program: with `y_l = min(1, ess(l)/minSS)`,
/// maximize `Σ p_l y_l` subject to `y_l ≤ 1`, `minSS·y_l ≤ ess(l)`, `Σn ≤ M`,
/// and `lo ≤ n ≤ hi`. Returns the budgets and the optimal `Σ p_l y_l`, or
/// `None` when the bounds exceed the memory.
fn solve_lp(problem: &AllocationProblem, lo: &[usize], hi: &[usize]) -> Option<(Vec<f64>, f64)> {
    let n = problem.len();
    let fixed: usize = lo.iter().sum();
    if fixed > problem.memory {
        return None;
    }
    let room = problem.memory - fixed;
    let leaves = problem.leaves();
    let nl = leaves.len();
    let m = problem.min_ss as f64;
    let vars = n + nl;
    let mut c = vec![0.0; vars];
    for (k, &l) in leaves.iter().enumerate() {
        c[n + k] = problem.nodes[l].p;
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for k in 0..nl {
        let mut row = vec![0.0; vars];
        row[n + k] = 1.0;
        a.push(row);
        b.push(1.0);
    }
    // budgets are shifted by `lo`, so ess(l) = Σ S·lo + Σ S·n'
    for (k, &l) in leaves.iter().enumerate() {
        let mut row = vec![0.0; vars];
        row[n + k] = m;
        let mut base = 0.0;
        for i in 0..n {
            row[i] = -problem.selectivity[i][l];
            base += problem.selectivity[i][l] * lo[i] as f64;
        }
        a.push(row);
        b.push(base);
    }
    let mut row = vec![0.0; vars];
    row[..n].fill(1.0);
    a.push(row);
    b.push(room as f64);
    for i in 0..n {
        let span = hi[i].saturating_sub(lo[i]);
        if span < room {
            let mut row = vec![0.0; vars];
            row[i] = 1.0;
            a.push(row);
            b.push(span as f64);
        }
    }

    let sol = simplex_max(&c, &a, &b);
    let value = c.iter().zip(&sol).map(|(c, x)| c * x).sum();
    let shifted: Vec<f64> = (0..n).map(|i| sol[i].min((hi[i] - lo[i]) as f64)).collect();
    let shifted = project(&shifted, room as f64);
    Some(((0..n).map(|i| lo[i] as f64 + shifted[i]).collect(), value))
}

/// Depth-first branch and bound over integer budgets with the linear
/// program as the relaxation, starting from `start`. Gives up after
/// `node_limit` relaxations and returns the best plan seen.
fn branch_and_bound(problem: &AllocationProblem, start: Vec<usize>, node_limit: usize) -> Vec<usize> {
    let n = problem.len();
    let value = |b: &[usize]| -problem.hinge_objective(&b.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let mut best_value = value(&start);
    let mut best = start;
    let mut stack = vec![(vec![0usize; n], vec![problem.memory; n])];
    let mut visited = 0;
    while let Some((lo, hi)) = stack.pop() {
        visited += 1;
        if visited > node_limit {
            break;
        }
        let Some((x, bound)) = solve_lp(problem, &lo, &hi) else {
            continue;
        };
        if bound <= best_value + 1e-12 {
            continue;
        }
        let guess = repair(problem.memory, &x);
        let v = value(&guess);
        if v > best_value {
            best_value = v;
            best = guess;
        }
        let Some(j) = (0..n)
            .map(|i| (i, x[i] - (x[i] + 1e-7).floor()))
            .filter(|&(_, f)| f > 1e-7 && f < 1.0 - 1e-7)
            .max_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()).reverse())
            .map(|(i, _)| i)
        else {
            continue;
        };
        let floor = x[j].floor() as usize;
        let mut down = (lo.clone(), hi.clone());
        down.1[j] = floor;
        let mut up = (lo, hi);
        up.0[j] = floor + 1;
        // the branch nearer the relaxed value is explored first
        if x[j] - floor as f64 >= 0.5 {
            stack.push(down);
            stack.push(up);
        } else {
            stack.push(up);
            stack.push(down);
        }
    }
    best
}

/// Dense tableau simplex for `max c·x, Ax ≤ b, x ≥ 0` with `b ≥ 0`, using
/// Bland's rule.
fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let (rows, vars) = (a.len(), c.len());
    let width = vars + rows + 1;
    let mut t = vec![vec![0.0; width]; rows + 1];
    for i in 0..rows {
        t[i][..vars].copy_from_slice(&a[i]);
        t[i][vars + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..vars {
        t[rows][j] = -c[j];
    }
    let mut basis: Vec<usize> = (vars..vars + rows).collect();

    for _ in 0..50_000 {
        let Some(enter) = (0..width - 1).find(|&j| t[rows][j] < -LP_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            if t[i][enter] > LP_EPS {
                let ratio = t[i][width - 1] / t[i][enter];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - LP_EPS || (ratio <= lr + LP_EPS && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else { break };
        let pivot = t[r][enter];
        for v in t[r].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let f = row[enter];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        basis[r] = enter;
    }

    let mut x = vec![0.0; vars];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < vars {
            x[bv] = t[i][width - 1].max(0.0);
        }
    }
    x
}

/// Rounds up, then gives back units largest-round-up-first until the total
/// fits in `memory`.
fn repair(memory: usize, x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut b: Vec<usize> = x.iter().map(|&v| (v - TOL).ceil().max(0.0) as usize).collect();
    let mut excess: Vec<f64> = b.iter().zip(x).map(|(&bi, &xi)| bi as f64 - xi).collect();
    while b.iter().sum::<usize>() > memory {
        let i = (0..n)
            .filter(|&i| b[i] > 0)
            .max_by(|&i, &j| excess[i].total_cmp(&excess[j]).then(j.cmp(&i)))
            .expect("positive total has a positive entry");
        b[i] -= 1;
        excess[i] -= 1.0;
    }
    b
}

/// Integer budgets from a fractional point: round up, give back units
/// largest-round-up-first until the budget fits, then improve by single-unit
/// moves while the hinge objective strictly drops.
fn round(problem: &AllocationProblem, x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let memory = problem.memory;
    let mut b = repair(memory, x);

    let leaves = problem.leaves();
    let m = problem.min_ss as f64;
    let loss = |l: usize, e: f64| problem.nodes[l].p * (-e / m).max(-1.0);
    let delta = |ess: &[f64], add: Option<usize>, sub: Option<usize>| -> f64 {
        leaves
            .iter()
            .map(|&l| {
                let mut e = ess[l];
                if let Some(j) = add {
                    e += problem.selectivity[j][l];
                }
                if let Some(i) = sub {
                    e -= problem.selectivity[i][l];
                }
                loss(l, e) - loss(l, ess[l])
            })
            .sum()
    };

    let cap = 4 * n + 16;
    for _ in 0..cap {
        let ess = problem.ess(&b.iter().map(|&v| v as f64).collect::<Vec<_>>());
        let mut best: Option<(f64, Option<usize>, Option<usize>)> = None;
        let mut consider = |d: f64, add: Option<usize>, sub: Option<usize>| {
            if d < -1e-12 && best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, add, sub));
            }
        };
        if b.iter().sum::<usize>() < memory {
            for j in 0..n {
                consider(delta(&ess, Some(j), None), Some(j), None);
            }
        }
        for i in (0..n).filter(|&i| b[i] > 0) {
            for j in (0..n).filter(|&j| j != i) {
                consider(delta(&ess, Some(j), Some(i)), Some(j), Some(i));
            }
        }
        let Some((_, add, sub)) = best else { break };
        if let Some(j) = add {
            b[j] += 1;
        }
        if let Some(i) = sub {
            b[i] -= 1;
        }
    }
    b
}
