//! Parameter sweeps: expand the root repeatedly and average time, percent
//! error of the displayed counts, and rules missing from the exact answer.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use smartdrill::brs::{best_rule_set, BrsParams, DrillConstraint};
use smartdrill::session::{MaxWeight, Session, SessionConfig};
use smartdrill::{Aggregate, Rule, Table, TupleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    MaxWeight,
    MinSampleSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub param: f64,
    pub seconds: f64,
    pub pct_error: f64,
    pub wrong_rules: f64,
}

fn exact_rules(t: &Table, config: &SessionConfig, m_w: f64) -> Result<BTreeSet<Rule>> {
    let view = TupleSet::from_table(t, &Rule::trivial(t.num_columns()), &Aggregate::Count)?;
    let w = config.weight.compile(t.columns())?;
    let params = BrsParams {
        k: config.k,
        m_w,
        time_limit: None,
    };
    let out = best_rule_set(&view, &w, &params, &DrillConstraint::root(t.num_columns()), |_| {});
    Ok(out.list.rules().cloned().collect())
}

pub fn run(table: Arc<Table>, base: &SessionConfig, sweep: Sweep, values: &[f64], trials: usize) -> Result<Vec<Point>> {
    let max_mw = match sweep {
        Sweep::MaxWeight => values.iter().copied().fold(1.0, f64::max),
        Sweep::MinSampleSize => match base.m_w {
            MaxWeight::Fixed(v) => v,
            MaxWeight::Auto => base.weight.compile(table.columns())?.max_weight(),
        },
    };
    let reference = exact_rules(&table, base, max_mw)?;
    let exact = |r: &Rule| table.scan().filter(|(_, row)| r.covers(row)).count() as f64;
    let mut out = Vec::new();
    for &v in values {
        let mut config = base.clone();
        config.prefetch = false;
        match sweep {
            Sweep::MaxWeight => config.m_w = MaxWeight::Fixed(v),
            Sweep::MinSampleSize => {
                config.min_ss = v as usize;
                config.memory = config.min_ss;
            }
        }
        let (mut secs, mut err, mut wrong) = (0.0, 0.0, 0.0);
        for trial in 0..trials {
            config.seed = base.seed.wrapping_add(trial as u64);
            let start = Instant::now();
            let mut s = Session::new(Arc::clone(&table), config.clone())?;
            s.expand(&[])?;
            secs += start.elapsed().as_secs_f64();
            let kids = &s.root().children;
            let errs: Vec<f64> = kids
                .iter()
                .map(|c| {
                    let e = exact(&c.rule);
                    if e > 0.0 { 100.0 * (c.value - e).abs() / e } else { 0.0 }
                })
                .collect();
            err += errs.iter().sum::<f64>() / errs.len().max(1) as f64;
            wrong += kids.iter().filter(|c| !reference.contains(&c.rule)).count() as f64;
        }
        let n = trials.max(1) as f64;
        out.push(Point {
            param: v,
            seconds: secs / n,
            pct_error: err / n,
            wrong_rules: wrong / n,
        });
    }
    Ok(out)
}

pub fn to_csv(sweep: Sweep, points: &[Point]) -> String {
    let name = match sweep {
        Sweep::MaxWeight => "m_w",
        Sweep::MinSampleSize => "min_ss",
    };
    let mut s = format!("{name},mean_seconds,mean_pct_error,mean_wrong_rules\n");
    for p in points {
        s += &format!("{},{:.6},{:.4},{:.4}\n", p.param, p.seconds, p.pct_error, p.wrong_rules);
    }
    s
}
