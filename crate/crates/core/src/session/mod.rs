//! A drill-down session: the tree of displayed rules and the gestures that
//! grow and shrink it.
//!
//! Expanding a node needs rows covered by its rule. They come from a pooled
//! sample for that exact rule when one is large enough (find), else from the
//! union of pooled samples of its sub-rules (combine), and only then from a
//! fresh table scan (create). After every structural change a background job
//! re-plans the pool for the likely next expansions and refreshes displayed
//! counts to exact values.

mod prefetch;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::RwLock;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::brs::{best_rule_set, drill_reduce, estimate_mw, BrsParams, FoundRule};
use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::sampler::{confidence_interval, create_pass, AllocNode, AllocationProblem, SamplePool};
use crate::score::ScoredRuleList;
use crate::table::Table;
use crate::tuples::{Aggregate, TupleSet};
use crate::weight::{Weigher, WeightConfig};

pub use prefetch::{plan_allocation, Plan, PlanMethod, PlanSummary};
use prefetch::{Job, Prefetcher};

/// Child indices from the root.
pub type NodePath = Vec<usize>;

/// Cap on the heaviest weight the search considers, or `Auto` to estimate it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxWeight {
    Auto,
    Fixed(f64),
}

impl Serialize for MaxWeight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxWeight::Auto => s.serialize_str("auto"),
            MaxWeight::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for MaxWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(MaxWeight::Fixed(v)),
            Repr::Text(t) if t == "auto" => Ok(MaxWeight::Auto),
            Repr::Text(t) => t
                .parse()
                .map(MaxWeight::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("expected a number or \"auto\", got {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub k: usize,
    pub m_w: MaxWeight,
    pub min_ss: usize,
    /// Tuple slots shared by all pooled samples.
    pub memory: usize,
    pub weight: WeightConfig,
    pub aggregate: Aggregate,
    pub time_limit_ms: Option<u64>,
    pub seed: u64,
    pub prefetch: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            k: 4,
            m_w: MaxWeight::Fixed(5.0),
            min_ss: 5000,
            memory: 50_000,
            weight: WeightConfig::size(),
            aggregate: Aggregate::Count,
            time_limit_ms: Some(5000),
            seed: 0,
            prefetch: true,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if self.min_ss == 0 || self.min_ss > self.memory {
            return Err(Error::InvalidConfig(format!(
                "need 0 < min_ss <= memory, got min_ss {} and memory {}",
                self.min_ss, self.memory
            )));
        }
        if let MaxWeight::Fixed(v) = self.m_w {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("m_w must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn time_limit(&self) -> Option<Duration> {
        self.time_limit_ms.map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    Rule,
    /// Star expansion of the column with this index.
    Star(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrillNode {
    pub rule: Rule,
    /// Displayed aggregate: the count, or the sum of the measure.
    pub value: f64,
    /// Covered rows, estimated unless `count_is_exact`.
    pub rows: f64,
    pub count_is_exact: bool,
    pub weight: f64,
    /// Bounds on an estimated count.
    pub interval: Option<(f64, f64)>,
    pub leaf_probability: f64,
    pub expansion: Option<Expansion>,
    pub children: Vec<DrillNode>,
}

impl DrillNode {
    pub fn get(&self, path: &[usize]) -> Option<&DrillNode> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get(i)?.get(rest),
        }
    }

    fn get_mut(&mut self, path: &[usize]) -> Option<&mut DrillNode> {
        match path.split_first() {
            None => Some(self),
            Some((&i, rest)) => self.children.get_mut(i)?.get_mut(rest),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Visits nodes depth-first, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&[usize], &'a DrillNode)) {
        fn go<'a>(n: &'a DrillNode, path: &mut Vec<usize>, f: &mut impl FnMut(&[usize], &'a DrillNode)) {
            f(path, n);
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                go(c, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    fn walk_mut(&mut self, f: &mut impl FnMut(&mut DrillNode)) {
        f(self);
        for c in &mut self.children {
            c.walk_mut(f);
        }
    }

    pub fn find(&self, rule: &Rule) -> Option<NodePath> {
        let mut found = None;
        self.walk(&mut |path, n| {
            if found.is_none() && &n.rule == rule {
                found = Some(path.to_vec());
            }
        });
        found
    }

    pub fn len(&self) -> usize {
        1 + self.children.iter().map(DrillNode::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Uniform probabilities over the current leaves.
fn assign_leaf_probabilities(root: &mut DrillNode) {
    let mut leaves = 0usize;
    root.walk(&mut |_, n| leaves += n.is_leaf() as usize);
    let p = 1.0 / leaves as f64;
    root.walk_mut(&mut |n| n.leaf_probability = if n.is_leaf() { p } else { 0.0 });
}

#[derive(Debug, Default)]
pub struct Counters {
    pub finds: AtomicU64,
    pub combines: AtomicU64,
    pub creates: AtomicU64,
    /// Scans made while answering a gesture.
    pub table_scans: AtomicU64,
    pub prefetch_requests: AtomicU64,
    pub prefetch_passes: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub finds: u64,
    pub combines: u64,
    pub creates: u64,
    pub table_scans: u64,
    pub prefetch_requests: u64,
    pub prefetch_passes: u64,
}

impl Counters {
    pub fn snapshot(&self) -> CounterSnapshot {
        let get = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CounterSnapshot {
            finds: get(&self.finds),
            combines: get(&self.combines),
            creates: get(&self.creates),
            table_scans: get(&self.table_scans),
            prefetch_requests: get(&self.prefetch_requests),
            prefetch_passes: get(&self.prefetch_passes),
        }
    }
}

/// Where the rows for the last expansion came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Find,
    Combine,
    Create,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub counters: CounterSnapshot,
    pub pool_samples: usize,
    pub pool_rows: usize,
    pub memory: usize,
    pub min_ss: usize,
    pub m_w: f64,
    pub last_source: Option<Source>,
    pub last_expand_ms: Option<f64>,
    pub last_plan_objective: Option<f64>,
    pub last_plan_method: Option<PlanMethod>,
    pub prefetch_idle: bool,
}

/// A node rendered with value labels, as clients see the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub path: NodePath,
    pub rule: Vec<String>,
    pub text: String,
    pub count: f64,
    pub count_is_exact: bool,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub interval: Option<(f64, f64)>,
    pub leaf_probability: f64,
    /// `null`, `"rule"`, or `{"star": "<column>"}`.
    pub expansion: Option<ExpansionView>,
    pub children: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionView {
    Rule,
    Star(String),
}

pub struct Session {
    table: Arc<Table>,
    config: SessionConfig,
    weigher: Weigher,
    m_w: f64,
    root: DrillNode,
    pool: Arc<RwLock<SamplePool>>,
    counters: Arc<Counters>,
    prefetcher: Prefetcher,
    rng: ChaCha8Rng,
    last_source: Option<Source>,
    last_expand: Option<Duration>,
    last_plan: Option<PlanSummary>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("config", &self.config)
            .field("m_w", &self.m_w)
            .field("root", &self.root)
            .finish_non_exhaustive()
    }
}

/// Sample size the planner aims for: `minSS` plus three binomial standard
/// deviations, so that samples drawn for a parent still hold `minSS` rows of
/// a child after sampling noise. Falls back to `minSS` when that exceeds memory.
pub fn planning_target(min_ss: usize, memory: usize) -> usize {
    let padded = min_ss + (3.0 * (min_ss as f64).sqrt()).ceil() as usize;
    if padded <= memory {
        padded
    } else {
        min_ss
    }
}

impl Session {
    /// Opens a session showing the trivial rule, after one scan that counts
    /// the table and fills a root sample of up to `memory` rows.
    pub fn new(table: Arc<Table>, config: SessionConfig) -> Result<Session> {
        config.validate()?;
        let weigher = config.weight.compile(table.columns())?;
        let masses = config.aggregate.masses(&table)?;
        let counters = Arc::new(Counters::default());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let trivial = Rule::trivial(table.num_columns());

        let budget = config.memory.min(table.num_rows());
        let pass = create_pass(&table, &[(trivial.clone(), budget)], std::slice::from_ref(&trivial), masses, &mut rng);
        counters.creates.fetch_add(1, Ordering::Relaxed);
        counters.table_scans.fetch_add(1, Ordering::Relaxed);
        let exact = &pass.exact[0];
        let root = DrillNode {
            weight: weigher.weight(&trivial),
            rule: trivial,
            value: exact.sum.unwrap_or(exact.count as f64),
            rows: exact.count as f64,
            count_is_exact: true,
            interval: None,
            leaf_probability: 1.0,
            expansion: None,
            children: Vec::new(),
        };
        let pool = Arc::new(RwLock::new(SamplePool::new(pass.samples)));
        let prefetcher = Prefetcher::spawn(
            Arc::clone(&table),
            config.aggregate.clone(),
            Arc::clone(&pool),
            Arc::clone(&counters),
        );
        let mut session = Session {
            table,
            config,
            weigher,
            m_w: 1.0,
            root,
            pool,
            counters,
            prefetcher,
            rng,
            last_source: None,
            last_expand: None,
            last_plan: None,
        };
        session.resolve_mw();
        Ok(session)
    }

    fn resolve_mw(&mut self) {
        self.m_w = match self.config.m_w {
            MaxWeight::Fixed(v) => v,
            MaxWeight::Auto => {
                let root = self.pool.read().find(&self.root.rule, 0);
                match root {
                    Some(s) => {
                        let view = s.view(&self.root.rule, &self.table.cardinalities());
                        estimate_mw(&view, &self.weigher, self.config.k, self.config.min_ss, &mut self.rng)
                    }
                    None => self.weigher.max_weight().max(1.0),
                }
            }
        };
    }

    pub fn table(&self) -> &Arc<Table> {
        &self.table
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn m_w(&self) -> f64 {
        self.m_w
    }

    pub fn root(&self) -> &DrillNode {
        &self.root
    }

    pub fn node(&self, path: &[usize]) -> Result<&DrillNode> {
        self.root.get(path).ok_or_else(|| Error::UnknownNode(format!("{path:?}")))
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.counters.snapshot()
    }

    pub fn pool(&self) -> SamplePool {
        self.pool.read().clone()
    }

    pub fn last_plan(&self) -> Option<&PlanSummary> {
        self.last_plan.as_ref()
    }

    pub fn last_source(&self) -> Option<Source> {
        self.last_source
    }

    /// Replaces the configuration; the tree is kept as displayed.
    pub fn set_config(&mut self, config: SessionConfig) -> Result<()> {
        config.validate()?;
        let weigher = config.weight.compile(self.table.columns())?;
        config.aggregate.masses(&self.table)?;
        if config.aggregate != self.config.aggregate {
            return Err(Error::InvalidConfig(
                "the aggregate of an open session cannot change".into(),
            ));
        }
        self.weigher = weigher;
        self.config = config;
        self.resolve_mw();
        Ok(())
    }

    /// Installs results of finished background jobs. Returns true when no
    /// job is queued or running.
    pub fn poll_prefetch(&mut self) -> bool {
        let idle = self.prefetcher.is_idle();
        for done in self.prefetcher.take_finished() {
            let masses = self.config.aggregate != Aggregate::Count;
            for e in &done.exact {
                self.root.walk_mut(&mut |n| {
                    if n.rule == e.rule {
                        n.rows = e.count as f64;
                        n.value = if masses { e.sum.unwrap_or(0.0) } else { e.count as f64 };
                        n.count_is_exact = true;
                        n.interval = None;
                    }
                });
            }
            self.last_plan = Some(done.plan);
        }
        idle
    }

    /// Blocks until background work is done, then installs it.
    pub fn wait_prefetch(&mut self) {
        self.prefetcher.wait_idle();
        self.poll_prefetch();
    }

    /// Queues a re-plan of the sample pool for the current tree, replacing
    /// any job still waiting.
    pub fn prefetch(&mut self) {
        let mut rules = Vec::new();
        let mut nodes = Vec::new();
        let mut rows = Vec::new();
        let mut displayed = Vec::new();
        {
            let mut index_of: Vec<(NodePath, usize)> = Vec::new();
            self.root.walk(&mut |path, n| {
                let parent = path
                    .split_last()
                    .map(|(_, up)| index_of.iter().find(|(p, _)| p == up).expect("parents come first").1);
                index_of.push((path.to_vec(), nodes.len()));
                nodes.push(AllocNode {
                    parent,
                    p: n.leaf_probability,
                });
                rules.push(n.rule.clone());
                rows.push(n.rows);
                if !displayed.contains(&n.rule) {
                    displayed.push(n.rule.clone());
                }
            });
        }
        let n = nodes.len();
        let mut selectivity = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                selectivity[i][j] = if i == j {
                    1.0
                } else if rows[i] > 0.0 && rules[i].is_subrule_of(&rules[j]) {
                    (rows[j] / rows[i]).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        let problem = AllocationProblem {
            nodes,
            selectivity,
            memory: self.config.memory,
            min_ss: planning_target(self.config.min_ss, self.config.memory),
        };
        self.counters.prefetch_requests.fetch_add(1, Ordering::Relaxed);
        self.prefetcher.submit(Job {
            problem,
            rules,
            displayed,
            seed: self.rng.gen(),
        });
    }

    /// Rows covered by `rule`: find, then combine, then a fresh scan.
    fn acquire(&mut self, rule: &Rule) -> TupleSet {
        let cards = self.table.cardinalities();
        let min_ss = self.config.min_ss;
        let snapshot = self.pool.read().clone();
        if let Some(s) = snapshot.find(rule, min_ss) {
            self.counters.finds.fetch_add(1, Ordering::Relaxed);
            self.last_source = Some(Source::Find);
            return s.view(rule, &cards);
        }
        if let Some(s) = snapshot.combine(rule, min_ss) {
            self.counters.combines.fetch_add(1, Ordering::Relaxed);
            self.last_source = Some(Source::Combine);
            return s.view(rule, &cards);
        }
        self.counters.creates.fetch_add(1, Ordering::Relaxed);
        self.counters.table_scans.fetch_add(1, Ordering::Relaxed);
        self.last_source = Some(Source::Create);
        let masses = self.config.aggregate.masses(&self.table).ok().flatten();
        let pass = create_pass(
            &self.table,
            &[(rule.clone(), self.config.memory)],
            &[],
            masses,
            &mut self.rng,
        );
        let sample = pass.samples.into_iter().next().expect("memory is positive");
        let view = sample.view(rule, &cards);
        self.admit(sample);
        view
    }

    /// Adds a sample, then evicts until the pool fits in memory: first
    /// samples no displayed node uses, then those of the least likely nodes.
    fn admit(&mut self, sample: crate::sampler::Sample) {
        let keep = sample.filter().clone();
        let mut pool = self.pool.write();
        pool.insert(sample);
        while pool.total_rows() > self.config.memory {
            let victim = pool
                .samples()
                .iter()
                .filter(|s| s.filter() != &keep)
                .map(|s| {
                    let mut p: Option<f64> = None;
                    self.root.walk(&mut |_, n| {
                        if &n.rule == s.filter() {
                            *p.get_or_insert(0.0) += subtree_probability(n);
                        }
                    });
                    (s.filter().clone(), p)
                })
                .min_by(|a, b| match (a.1, b.1) {
                    (None, None) => std::cmp::Ordering::Equal,
                    (None, Some(_)) => std::cmp::Ordering::Less,
                    (Some(_), None) => std::cmp::Ordering::Greater,
                    (Some(x), Some(y)) => x.total_cmp(&y),
                })
                .map(|(r, _)| r);
            match victim {
                Some(r) => pool.retain(|s| s.filter() != &r),
                None => break,
            }
        }
    }

    fn check_expandable(&self, path: &[usize], star: Option<&str>) -> Result<Option<usize>> {
        let node = self.node(path)?;
        if node.expansion.is_some() {
            return Err(Error::AlreadyExpanded(node.rule.to_text(self.table.columns())));
        }
        let Some(name) = star else { return Ok(None) };
        let c = self.table.column_index(name)?;
        if node.rule.get(c).is_some() {
            return Err(Error::ColumnInstantiated(name.to_string()));
        }
        Ok(Some(c))
    }

    /// Expands a displayed leaf into its best super-rules.
    pub fn expand(&mut self, path: &[usize]) -> Result<ScoredRuleList> {
        self.expand_with(path, None, |_| {})
    }

    /// Expands a displayed leaf into super-rules that all instantiate `column`.
    pub fn expand_star(&mut self, path: &[usize], column: &str) -> Result<ScoredRuleList> {
        self.expand_with(path, Some(column), |_| {})
    }

    /// [`Session::expand`] or [`Session::expand_star`], calling `emit` as
    /// each rule is found.
    pub fn expand_with(
        &mut self,
        path: &[usize],
        star: Option<&str>,
        emit: impl FnMut(&FoundRule),
    ) -> Result<ScoredRuleList> {
        self.poll_prefetch();
        let star = self.check_expandable(path, star)?;
        let weigher = self.weigher.clone();
        let params = BrsParams {
            k: self.config.k,
            m_w: self.m_w,
            time_limit: self.config.time_limit(),
        };
        self.run_expansion(path, star, &weigher, &params, emit)
    }

    /// A classic drill-down on `column`: one child per value present.
    pub fn emulate_regular_drilldown(&mut self, path: &[usize], column: &str) -> Result<ScoredRuleList> {
        self.poll_prefetch();
        let star = self.check_expandable(path, Some(column))?.expect("column given");
        let weigher = WeightConfig::one_hot(column).compile(self.table.columns())?;
        let rule = self.node(path)?.rule.clone();
        let data = self.acquire(&rule);
        let mut seen = vec![false; self.table.column(star).distinct_count()];
        for row in data.rows().filter(|r| rule.covers(r)) {
            seen[row[star] as usize] = true;
        }
        let k = seen.iter().filter(|&&s| s).count();
        let params = BrsParams {
            k,
            m_w: 1.0,
            time_limit: None,
        };
        self.finish_expansion(path, star.into(), &rule, data, &weigher, &params, |_| {})
    }

    fn run_expansion(
        &mut self,
        path: &[usize],
        star: Option<usize>,
        weigher: &Weigher,
        params: &BrsParams,
        emit: impl FnMut(&FoundRule),
    ) -> Result<ScoredRuleList> {
        if self.table.is_empty() {
            return Ok(ScoredRuleList::default());
        }
        let rule = self.node(path)?.rule.clone();
        let data = self.acquire(&rule);
        self.finish_expansion(path, star, &rule, data, weigher, params, emit)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_expansion(
        &mut self,
        path: &[usize],
        star: Option<usize>,
        rule: &Rule,
        data: TupleSet,
        weigher: &Weigher,
        params: &BrsParams,
        emit: impl FnMut(&FoundRule),
    ) -> Result<ScoredRuleList> {
        let start = Instant::now();
        let (view, weigher, constraint) = drill_reduce(&data, rule, star, weigher)?;
        let outcome = best_rule_set(&view, &weigher, params, &constraint, emit);
        let exact = view.is_exact();
        let with_interval = self.config.aggregate == Aggregate::Count && !exact;
        let children = outcome
            .list
            .rules
            .iter()
            .map(|s| DrillNode {
                rule: s.rule.clone(),
                value: s.value(),
                rows: s.count,
                count_is_exact: exact,
                weight: s.weight,
                interval: with_interval.then(|| confidence_interval(s.count, view.len(), view.scale(), 3.0)),
                leaf_probability: 0.0,
                expansion: None,
                children: Vec::new(),
            })
            .collect();
        let node = self.root.get_mut(path).expect("checked above");
        node.children = children;
        node.expansion = Some(match star {
            Some(c) => Expansion::Star(c),
            None => Expansion::Rule,
        });
        assign_leaf_probabilities(&mut self.root);
        self.last_expand = Some(start.elapsed());
        if self.config.prefetch {
            self.prefetch();
        }
        Ok(outcome.list)
    }

    /// Removes the children of an expanded node.
    pub fn collapse(&mut self, path: &[usize]) -> Result<()> {
        self.poll_prefetch();
        let cols = self.table.columns();
        let node = self
            .root
            .get_mut(path)
            .ok_or_else(|| Error::UnknownNode(format!("{path:?}")))?;
        if node.expansion.is_none() {
            return Err(Error::NotExpanded(node.rule.to_text(cols)));
        }
        node.children.clear();
        node.expansion = None;
        assign_leaf_probabilities(&mut self.root);
        if self.config.prefetch {
            self.prefetch();
        }
        Ok(())
    }

    /// Resolves a rule in text form to the first displayed node holding it.
    pub fn path_of(&self, text: &str) -> Result<NodePath> {
        let rule = Rule::parse(text, self.table.columns())?;
        self.root.find(&rule).ok_or_else(|| Error::UnknownNode(text.to_string()))
    }

    pub fn tree(&self) -> NodeView {
        fn go(n: &DrillNode, path: &mut Vec<usize>, t: &Table) -> NodeView {
            let cols = t.columns();
            NodeView {
                path: path.clone(),
                rule: n.rule.labels(cols).into_iter().map(String::from).collect(),
                text: n.rule.to_text(cols),
                count: n.value,
                count_is_exact: n.count_is_exact,
                weight: n.weight,
                interval: n.interval,
                leaf_probability: n.leaf_probability,
                expansion: n.expansion.map(|e| match e {
                    Expansion::Rule => ExpansionView::Rule,
                    Expansion::Star(c) => ExpansionView::Star(cols[c].name.clone()),
                }),
                children: n
                    .children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        path.push(i);
                        let v = go(c, path, t);
                        path.pop();
                        v
                    })
                    .collect(),
            }
        }
        go(&self.root, &mut Vec::new(), &self.table)
    }

    pub fn stats(&self) -> SessionStats {
        let pool = self.pool.read();
        SessionStats {
            counters: self.counters.snapshot(),
            pool_samples: pool.len(),
            pool_rows: pool.total_rows(),
            memory: self.config.memory,
            min_ss: self.config.min_ss,
            m_w: self.m_w,
            last_source: self.last_source,
            last_expand_ms: self.last_expand.map(|d| d.as_secs_f64() * 1000.0),
            last_plan_objective: self.last_plan.as_ref().map(|p| p.objective),
            last_plan_method: self.last_plan.as_ref().map(|p| p.method),
            prefetch_idle: self.prefetcher.is_idle(),
        }
    }
}

fn subtree_probability(n: &DrillNode) -> f64 {
    let mut p = 0.0;
    n.walk(&mut |_, d| p += d.leaf_probability);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn small_config() -> SessionConfig {
        SessionConfig {
            k: 3,
            m_w: MaxWeight::Fixed(3.0),
            min_ss: 4,
            memory: 100,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn root_shows_table_size() {
        let s = Session::new(Arc::new(fixtures::f2()), small_config()).unwrap();
        assert_eq!(s.root().value, 8.0);
        assert!(s.root().count_is_exact);
        assert_eq!(s.root().leaf_probability, 1.0);
    }

    #[test]
    fn expand_then_collapse_restores_tree() {
        let mut s = Session::new(Arc::new(fixtures::f2()), small_config()).unwrap();
        let before = format!("{:?}", s.tree());
        s.expand(&[]).unwrap();
        assert_eq!(s.root().children.len(), 3);
        s.collapse(&[]).unwrap();
        s.wait_prefetch();
        assert_eq!(format!("{:?}", s.tree()), before);
    }

    #[test]
    fn gestures_check_state() {
        let mut s = Session::new(Arc::new(fixtures::f2()), small_config()).unwrap();
        assert!(matches!(s.collapse(&[]), Err(Error::NotExpanded(_))));
        assert!(matches!(s.expand(&[7]), Err(Error::UnknownNode(_))));
        s.expand(&[]).unwrap();
        assert!(matches!(s.expand(&[]), Err(Error::AlreadyExpanded(_))));
        let child = s.root().children[0].rule.clone();
        let instantiated = child.instantiated().next().unwrap().0;
        let name = s.table().column(instantiated).name.clone();
        assert!(matches!(s.expand_star(&[0], &name), Err(Error::ColumnInstantiated(_))));
        assert!(matches!(s.expand_star(&[0], "nope"), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn config_is_validated() {
        let t = Arc::new(fixtures::f2());
        for bad in [
            SessionConfig { k: 0, ..small_config() },
            SessionConfig { min_ss: 0, ..small_config() },
            SessionConfig { min_ss: 200, ..small_config() },
        ] {
            assert!(matches!(Session::new(Arc::clone(&t), bad), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn max_weight_serde() {
        let c: SessionConfig = serde_json::from_str(r#"{"m_w": "auto", "k": 2}"#).unwrap();
        assert_eq!(c.m_w, MaxWeight::Auto);
        assert_eq!(c.k, 2);
        let c: SessionConfig = serde_json::from_str(r#"{"m_w": 7.5}"#).unwrap();
        assert_eq!(c.m_w, MaxWeight::Fixed(7.5));
        assert!(serde_json::from_str::<SessionConfig>(r#"{"m_w": "lots"}"#).is_err());
    }

    #[test]
    fn planning_target_pads_when_memory_allows() {
        assert_eq!(planning_target(100, 1000), 130);
        assert_eq!(planning_target(100, 120), 100);
    }
}
