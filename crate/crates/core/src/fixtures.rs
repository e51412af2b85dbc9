//! Small deterministic tables and synthetic generators for tests, benches and demos.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::table::{Table, TableBuilder};

/// Two columns, 1000 rows: 100 rows `(a, b1)` and 900 rows `(a, b_i)` with distinct `b_i`.
pub fn f1() -> Table {
    let mut b = TableBuilder::new(&["A", "B"]);
    for _ in 0..100 {
        b.push(&["a", "b1"]);
    }
    for i in 2..902 {
        b.push(&["a".to_string(), format!("b{i}")]);
    }
    b.finish()
}

/// Three binary columns X, Y, Z with eight rows.
pub fn f2() -> Table {
    let mut b = TableBuilder::new(&["X", "Y", "Z"]);
    let groups: [([&str; 3], usize); 4] = [
        (["0", "0", "0"], 3),
        (["0", "1", "1"], 2),
        (["1", "1", "1"], 2),
        (["1", "0", "0"], 1),
    ];
    for (row, n) in groups {
        for _ in 0..n {
            b.push(&row);
        }
    }
    b.finish()
}

/// A random table with up to `max_rows` rows over `columns` columns of at most `max_values` values.
pub fn random_tiny(rng: &mut impl Rng, max_rows: usize, columns: usize, max_values: usize) -> Table {
    let names: Vec<String> = (0..columns).map(|c| format!("c{c}")).collect();
    let cards: Vec<usize> = (0..columns).map(|_| rng.gen_range(1..=max_values)).collect();
    let rows = rng.gen_range(1..=max_rows);
    let mut b = TableBuilder::new(&names);
    for _ in 0..rows {
        let row: Vec<String> = cards
            .iter()
            .map(|&n| format!("v{}", rng.gen_range(0..n)))
            .collect();
        b.push(&row);
    }
    b.finish()
}

/// Column description for [`correlated`]: name and labels with base frequencies.
#[derive(Debug, Clone)]
pub struct SynthColumn {
    pub name: String,
    pub labels: Vec<String>,
    pub freqs: Vec<f64>,
}

impl SynthColumn {
    pub fn new(name: &str, labels: &[&str], freqs: &[f64]) -> Self {
        assert_eq!(labels.len(), freqs.len());
        SynthColumn {
            name: name.to_string(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            freqs: freqs.to_vec(),
        }
    }
}

/// Generates rows where each column after the first is skewed by the previous
/// column's value, so multi-column rules carry real structure.
///
/// `coupling` in `[0, 1]` is the probability that a column copies a value
/// index derived from its predecessor instead of drawing from its base distribution.
pub fn correlated(columns: &[SynthColumn], rows: usize, coupling: f64, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    let dists: Vec<WeightedIndex<f64>> = columns
        .iter()
        .map(|c| WeightedIndex::new(&c.freqs).expect("positive frequencies"))
        .collect();
    let mut b = TableBuilder::new(&names);
    let mut idx = vec![0usize; columns.len()];
    let mut cells: Vec<&str> = Vec::with_capacity(columns.len());
    for _ in 0..rows {
        cells.clear();
        for (c, col) in columns.iter().enumerate() {
            idx[c] = if c > 0 && rng.gen_bool(coupling) {
                (idx[c - 1] * 7 + c) % col.labels.len()
            } else {
                dists[c].sample(&mut rng)
            };
            cells.push(&col.labels[idx[c]]);
        }
        b.push(&cells);
    }
    b.finish()
}

/// Seven demographic-style columns shaped like the Marketing survey's first seven attributes.
pub fn marketing_like_columns() -> Vec<SynthColumn> {
    use crate::marketing as m;
    vec![
        SynthColumn::new("Income", &m::INCOME, &[18.0, 8.0, 7.0, 8.0, 8.0, 11.0, 10.0, 16.0, 14.0]),
        SynthColumn::new("Sex", &m::SEX, &[45.0, 55.0]),
        SynthColumn::new("Marital status", &m::MARITAL, &[38.0, 8.0, 10.0, 4.0, 40.0]),
        SynthColumn::new("Age", &m::AGE, &[10.0, 24.0, 25.0, 18.0, 10.0, 7.0, 6.0]),
        SynthColumn::new("Education", &m::EDUCATION, &[2.0, 13.0, 25.0, 32.0, 16.0, 12.0]),
        SynthColumn::new(
            "Occupation",
            &m::OCCUPATION,
            &[31.0, 8.0, 8.0, 14.0, 5.0, 18.0, 1.0, 7.0, 8.0],
        ),
        SynthColumn::new("Time in Bay Area", &m::TIME_IN_AREA, &[4.0, 7.0, 8.0, 10.0, 71.0]),
    ]
}
