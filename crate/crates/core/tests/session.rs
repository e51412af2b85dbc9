use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartdrill::fixtures;
use smartdrill::sampler::{AllocNode, AllocationProblem};
use smartdrill::session::{plan_allocation, DrillNode, MaxWeight, Session, SessionConfig, Source};
use smartdrill::{Aggregate, Rule, Table};

fn big_table(rows: usize, seed: u64) -> Arc<Table> {
    Arc::new(fixtures::correlated(&fixtures::marketing_like_columns(), rows, 0.4, seed))
}

fn config(min_ss: usize, memory: usize) -> SessionConfig {
    SessionConfig {
        k: 4,
        m_w: MaxWeight::Fixed(5.0),
        min_ss,
        memory,
        seed: 3,
        ..SessionConfig::default()
    }
}

fn check_well_formed(root: &DrillNode) {
    let mut leaf_p = 0.0;
    root.walk(&mut |_, n| {
        if n.is_leaf() {
            leaf_p += n.leaf_probability;
        }
        for c in &n.children {
            assert!(n.rule.is_subrule_of(&c.rule) && n.rule != c.rule);
            if n.count_is_exact && c.count_is_exact {
                assert!(c.value <= n.value + 1e-9);
            }
        }
        for w in n.children.windows(2) {
            assert!(w[0].weight >= w[1].weight);
        }
    });
    assert!((leaf_p - 1.0).abs() < 1e-9);
}

#[test]
fn child_expansions_avoid_the_table_after_prefetch() {
    let memory = 4000;
    let t = big_table(10 * memory + 5000, 1);
    let mut s = Session::new(t, config(400, memory)).unwrap();
    s.expand(&[]).unwrap();
    s.wait_prefetch();
    let plan = s.last_plan().unwrap().clone();
    assert_eq!(plan.objective, 1.0);
    assert!(plan.budgets.iter().map(|b| b.1).sum::<usize>() <= memory);
    let scans = s.counters().table_scans;
    for i in 0..s.root().children.len() {
        s.expand(&[i]).unwrap();
        assert_ne!(s.last_source(), Some(Source::Create));
        assert_eq!(s.counters().table_scans, scans, "child {i}");
        s.collapse(&[i]).unwrap();
        s.wait_prefetch();
    }
}

#[test]
fn prefetch_makes_every_displayed_count_exact() {
    let t = big_table(30_000, 2);
    let mut s = Session::new(Arc::clone(&t), config(500, 5000)).unwrap();
    s.expand(&[]).unwrap();
    assert!(s.root().children.iter().all(|c| !c.count_is_exact));
    s.wait_prefetch();
    s.root().walk(&mut |_, n| {
        assert!(n.count_is_exact);
        let exact = t.scan().filter(|(_, r)| n.rule.covers(r)).count();
        assert_eq!(n.value, exact as f64);
    });
}

#[test]
fn estimated_counts_carry_intervals() {
    let t = big_table(30_000, 4);
    let mut s = Session::new(t, config(500, 5000)).unwrap();
    s.expand(&[]).unwrap();
    for c in &s.root().children {
        let (lo, hi) = c.interval.unwrap();
        assert!(lo <= c.value && c.value <= hi && lo < hi);
    }
}

#[test]
fn random_gesture_sequences_keep_the_tree_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let t = big_table(3000, 5);
    let mut s = Session::new(Arc::clone(&t), config(200, 2000)).unwrap();
    for step in 0..40 {
        let mut paths = Vec::new();
        s.root().walk(&mut |p, n| paths.push((p.to_vec(), n.expansion.is_some(), n.rule.clone())));
        let (path, expanded, rule) = paths[rng.gen_range(0..paths.len())].clone();
        if expanded {
            s.collapse(&path).unwrap();
        } else if rng.gen_bool(0.5) {
            s.expand(&path).unwrap();
        } else {
            let free: Vec<usize> = (0..t.num_columns()).filter(|&c| rule.get(c).is_none()).collect();
            if let Some(&c) = free.get(rng.gen_range(0..free.len().max(1))) {
                let name = t.column(c).name.clone();
                s.expand_star(&path, &name).unwrap();
                for child in &s.node(&path).unwrap().children {
                    assert!(child.rule.get(c).is_some());
                }
            }
        }
        if step % 7 == 0 {
            s.wait_prefetch();
        }
        check_well_formed(s.root());
    }
    s.wait_prefetch();
    check_well_formed(s.root());
}

#[test]
fn expand_then_collapse_serializes_identically() {
    let t = big_table(5000, 6);
    let mut s = Session::new(t, config(300, 3000)).unwrap();
    s.expand(&[]).unwrap();
    s.wait_prefetch();
    let before = serde_json::to_string(&s.tree()).unwrap();
    for i in 0..s.root().children.len() {
        s.expand(&[i]).unwrap();
        s.collapse(&[i]).unwrap();
        s.wait_prefetch();
        assert_eq!(serde_json::to_string(&s.tree()).unwrap(), before);
    }
}

#[test]
fn star_expansion_on_constant_column_gives_one_child() {
    let t = Arc::new(Table::from_rows(&["B"], &[["k"], ["k"], ["k"], ["k"]]));
    let mut s = Session::new(t, config(2, 10)).unwrap();
    s.expand_star(&[], "B").unwrap();
    let kids = &s.root().children;
    assert_eq!(kids.len(), 1);
    assert_eq!(kids[0].value, 4.0);

    // under a node fixing A, B is again the only varying column
    let t = Arc::new(Table::from_rows(
        &["A", "B"],
        &[["x", "k"], ["y", "k"], ["x", "k"], ["z", "k"]],
    ));
    let mut s = Session::new(t, config(2, 10)).unwrap();
    s.emulate_regular_drilldown(&[], "A").unwrap();
    let x = s.path_of("x,*").unwrap();
    s.expand_star(&x, "B").unwrap();
    let kids = &s.node(&x).unwrap().children;
    assert_eq!(kids.len(), 1);
    assert_eq!(kids[0].value, 2.0);
}

#[test]
fn star_expansion_yields_at_most_the_values_present() {
    let t = Arc::new(Table::from_rows(&["A", "B"], &[["x", "p"], ["y", "q"], ["x", "q"]]));
    let mut s = Session::new(
        t,
        SessionConfig {
            k: 10,
            ..config(2, 10)
        },
    )
    .unwrap();
    s.expand_star(&[], "A").unwrap();
    let kids = &s.root().children;
    assert!(!kids.is_empty() && kids.len() <= 2 * 2);
    let firsts: std::collections::BTreeSet<_> = kids.iter().map(|c| c.rule.get(0)).collect();
    assert!(firsts.len() <= 2);
}

#[test]
fn regular_drilldown_splits_by_value() {
    let t = big_table(4000, 7);
    let mut s = Session::new(Arc::clone(&t), config(300, 5000)).unwrap();
    let list = s.emulate_regular_drilldown(&[], "Sex").unwrap();
    assert_eq!(list.len(), 2);
    let total: f64 = s.root().children.iter().map(|c| c.value).sum();
    assert_eq!(total, s.root().value);

    let age = t.column_index("Age").unwrap();
    let list = s.emulate_regular_drilldown(&[0], "Age").unwrap();
    let present: std::collections::BTreeSet<_> = t
        .scan()
        .filter(|(_, r)| s.root().children[0].rule.covers(r))
        .map(|(_, r)| r[age])
        .collect();
    assert_eq!(list.len(), present.len());
    for r in list.rules() {
        assert_eq!(r.size(), 2);
    }
}

#[test]
fn empty_table_expand_is_a_no_op() {
    let t = Arc::new(Table::from_rows::<&str, [&str; 2]>(&["A", "B"], &[]));
    let mut s = Session::new(t, config(2, 10)).unwrap();
    assert_eq!(s.root().value, 0.0);
    let list = s.expand(&[]).unwrap();
    assert!(list.is_empty());
    assert!(s.root().expansion.is_none());
}

#[test]
fn sum_aggregate_displays_sums() {
    let mut b = smartdrill::table::TableBuilder::new(&["A"]).with_measures(&["Sales"]);
    b.push_with_measures(&["x"], &[5.0]);
    b.push_with_measures(&["x"], &[1.0]);
    b.push_with_measures(&["y"], &[2.0]);
    let t = Arc::new(b.finish());
    let mut s = Session::new(
        t,
        SessionConfig {
            aggregate: Aggregate::Sum("Sales".into()),
            ..config(2, 10)
        },
    )
    .unwrap();
    assert_eq!(s.root().value, 8.0);
    s.expand(&[]).unwrap();
    let x = s.root().children.iter().find(|c| c.rule == Rule::new(vec![Some(0)])).unwrap();
    assert_eq!(x.value, 6.0);
    assert_eq!(x.rows, 2.0);
}

#[test]
fn auto_mw_is_resolved_before_expanding() {
    let t = big_table(3000, 8);
    let s = Session::new(
        t,
        SessionConfig {
            m_w: MaxWeight::Auto,
            ..config(300, 3000)
        },
    )
    .unwrap();
    assert!(s.m_w() >= 2.0);
}

#[test]
fn plan_gives_a_lone_root_all_memory() {
    let p = AllocationProblem {
        nodes: vec![AllocNode { parent: None, p: 1.0 }],
        selectivity: vec![vec![1.0]],
        memory: 5000,
        min_ss: 1000,
    };
    let plan = plan_allocation(&p);
    assert_eq!(plan.budgets, vec![5000]);
    assert_eq!(plan.objective, 1.0);
}

#[test]
fn plan_with_too_little_memory_satisfies_nothing() {
    let p = AllocationProblem {
        nodes: vec![
            AllocNode { parent: None, p: 0.0 },
            AllocNode { parent: Some(0), p: 0.5 },
            AllocNode { parent: Some(0), p: 0.5 },
        ],
        selectivity: vec![vec![1.0, 0.5, 0.5], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        memory: 900,
        min_ss: 1000,
    };
    let plan = plan_allocation(&p);
    assert_eq!(plan.objective, 0.0);
    assert_eq!(plan.budgets.iter().sum::<usize>(), 900);
}

#[test]
fn cached_samples_serve_repeat_expansions() {
    let t = big_table(20_000, 10);
    let mut s = Session::new(t, SessionConfig { prefetch: false, ..config(500, 4000) }).unwrap();
    s.expand(&[]).unwrap();
    assert_eq!(s.last_source(), Some(Source::Find));
    let scans = s.counters().table_scans;
    s.collapse(&[]).unwrap();
    s.expand(&[]).unwrap();
    assert_eq!(s.counters().table_scans, scans);
}
