//! Background allocation and sample rebuilding.

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rule::Rule;
use crate::sampler::{allocate_convex, allocate_dp, create_pass, AllocationProblem, ExactCount, SamplePool};
use crate::table::Table;
use crate::tuples::Aggregate;

use super::Counters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    Knapsack,
    Convex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub method: PlanMethod,
    /// Satisfied leaf probability, counting only parent samples.
    pub objective: f64,
    pub budgets: Vec<usize>,
}

/// Allocates `problem.memory` over the tree: exactly when the fan-out allows,
/// by the convex relaxation otherwise. Memory the plan leaves unused goes to
/// node 0, the root.
pub fn plan_allocation(problem: &AllocationProblem) -> Plan {
    let (mut budgets, method) = match allocate_dp(problem) {
        Ok(plan) => (plan.budgets, PlanMethod::Knapsack),
        Err(_) => (allocate_convex(problem, 2000, None).budgets, PlanMethod::Convex),
    };
    let used: usize = budgets.iter().sum();
    if let Some(root) = budgets.first_mut() {
        *root += problem.memory.saturating_sub(used);
    }
    let objective = problem.step_objective(&budgets);
    Plan {
        method,
        objective,
        budgets,
    }
}

pub(crate) struct Job {
    pub problem: AllocationProblem,
    /// Rule of each problem node.
    pub rules: Vec<Rule>,
    pub displayed: Vec<Rule>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSummary {
    pub method: PlanMethod,
    pub objective: f64,
    pub budgets: Vec<(Rule, usize)>,
}

pub(crate) struct Finished {
    pub plan: PlanSummary,
    pub exact: Vec<ExactCount>,
}

#[derive(Default)]
struct State {
    queued: Option<Job>,
    running: bool,
    finished: Vec<Finished>,
    shutdown: bool,
}

struct Shared {
    state: Mutex<State>,
    changed: Condvar,
}

/// Runs at most one job at a time; a job submitted while another waits
/// replaces it.
pub(crate) struct Prefetcher {
    shared: Arc<Shared>,
    worker: Option<JoinHandle<()>>,
}

impl Prefetcher {
    pub fn spawn(
        table: Arc<Table>,
        aggregate: Aggregate,
        pool: Arc<RwLock<SamplePool>>,
        counters: Arc<Counters>,
    ) -> Prefetcher {
        let shared = Arc::new(Shared {
            state: Mutex::new(State::default()),
            changed: Condvar::new(),
        });
        let s = Arc::clone(&shared);
        let worker = std::thread::Builder::new()
            .name("prefetch".into())
            .spawn(move || loop {
                let job = {
                    let mut st = s.state.lock();
                    while st.queued.is_none() && !st.shutdown {
                        s.changed.wait(&mut st);
                    }
                    if st.shutdown {
                        return;
                    }
                    st.running = true;
                    st.queued.take().expect("woken with a job")
                };
                let done = run(&table, &aggregate, &pool, &job);
                counters.prefetch_passes.fetch_add(1, Ordering::Relaxed);
                let mut st = s.state.lock();
                st.running = false;
                st.finished.push(done);
                s.changed.notify_all();
            })
            .expect("spawning the prefetch thread");
        Prefetcher {
            shared,
            worker: Some(worker),
        }
    }

    pub fn submit(&self, job: Job) {
        let mut st = self.shared.state.lock();
        st.queued = Some(job);
        self.shared.changed.notify_all();
    }

    pub fn take_finished(&self) -> Vec<Finished> {
        std::mem::take(&mut self.shared.state.lock().finished)
    }

    pub fn is_idle(&self) -> bool {
        let st = self.shared.state.lock();
        st.queued.is_none() && !st.running
    }

    pub fn wait_idle(&self) {
        let mut st = self.shared.state.lock();
        while st.queued.is_some() || st.running {
            self.shared.changed.wait(&mut st);
        }
    }
}

impl Drop for Prefetcher {
    fn drop(&mut self) {
        self.shared.state.lock().shutdown = true;
        self.shared.changed.notify_all();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn run(table: &Table, aggregate: &Aggregate, pool: &RwLock<SamplePool>, job: &Job) -> Finished {
    let plan = plan_allocation(&job.problem);
    let mut merged: Vec<(Rule, usize)> = Vec::new();
    for (rule, &n) in job.rules.iter().zip(&plan.budgets) {
        match merged.iter_mut().find(|(r, _)| r == rule) {
            Some(slot) => slot.1 += n,
            None => merged.push((rule.clone(), n)),
        }
    }
    let masses = aggregate.masses(table).ok().flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let pass = create_pass(table, &merged, &job.displayed, masses, &mut rng);
    *pool.write() = SamplePool::new(pass.samples);
    Finished {
        plan: PlanSummary {
            method: plan.method,
            objective: plan.objective,
            budgets: merged,
        },
        exact: pass.exact,
    }
}
