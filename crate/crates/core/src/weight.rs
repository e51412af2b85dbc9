//! Rule weight functions.
//!
//! A [`WeightConfig`] is the user-facing description (column names, kinds);
//! [`Weigher`] is its compiled form against a concrete schema and is what the
//! search loops call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rule::Rule;
use crate::table::ColumnSchema;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightKind {
    #[default]
    Size,
    Bits,
    SizeMinusOne,
    /// `(sum of w_c over instantiated columns) ^ exponent`.
    Parametric {
        #[serde(default)]
        weights: BTreeMap<String, f64>,
        #[serde(default = "one")]
        default_weight: f64,
        #[serde(default = "one")]
        exponent: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightConfig {
    #[serde(flatten)]
    pub kind: WeightKind,
    /// Per-column multipliers (> 1) for columns the analyst cares about.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub favored: BTreeMap<String, f64>,
    /// Columns whose values contribute nothing to a rule's weight.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored: Vec<String>,
    /// Rules with a wildcard in this column get weight 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star_column: Option<String>,
}

impl WeightConfig {
    pub fn new(kind: WeightKind) -> Self {
        WeightConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn size() -> Self {
        Self::new(WeightKind::Size)
    }

    pub fn bits() -> Self {
        Self::new(WeightKind::Bits)
    }

    /// Weight 1 for rules instantiating `column`, 0 otherwise.
    pub fn one_hot(column: &str) -> Self {
        Self::new(WeightKind::Parametric {
            weights: BTreeMap::from([(column.to_string(), 1.0)]),
            default_weight: 0.0,
            exponent: 1.0,
        })
    }

    pub fn with_star_column(&self, column: &str) -> Self {
        WeightConfig {
            star_column: Some(column.to_string()),
            ..self.clone()
        }
    }

    pub fn compile(&self, columns: &[ColumnSchema]) -> Result<Weigher> {
        let index = |name: &str| {
            columns
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))
        };
        let mut contrib: Vec<f64> = match &self.kind {
            WeightKind::Size | WeightKind::SizeMinusOne => vec![1.0; columns.len()],
            WeightKind::Bits => columns
                .iter()
                .map(|c| (c.distinct_count().max(1) as f64).log2().ceil())
                .collect(),
            WeightKind::Parametric {
                weights,
                default_weight,
                exponent,
            } => {
                if !(*exponent >= 1.0 && exponent.is_finite()) {
                    return Err(Error::InvalidWeight(format!("exponent {exponent} must be >= 1")));
                }
                let mut w = vec![*default_weight; columns.len()];
                for (name, &v) in weights {
                    w[index(name)?] = v;
                }
                if let Some(bad) = w.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                    return Err(Error::InvalidWeight(format!("column weight {bad} must be >= 0")));
                }
                w
            }
        };
        for (name, &m) in &self.favored {
            if !(m > 1.0 && m.is_finite()) {
                return Err(Error::InvalidWeight(format!(
                    "favored multiplier for {name} must be > 1, got {m}"
                )));
            }
            contrib[index(name)?] *= m;
        }
        for name in &self.ignored {
            contrib[index(name)?] = 0.0;
        }
        let shape = match &self.kind {
            WeightKind::Size | WeightKind::Bits => Shape::Linear,
            WeightKind::SizeMinusOne => Shape::MinusOne,
            WeightKind::Parametric { exponent, .. } if *exponent == 1.0 => Shape::Linear,
            WeightKind::Parametric { exponent, .. } => Shape::Power(*exponent),
        };
        let star_column = self.star_column.as_deref().map(index).transpose()?;
        Ok(Weigher {
            contrib,
            shape,
            star_column,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Linear,
    MinusOne,
    Power(f64),
}

/// A weight function compiled against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Weigher {
    contrib: Vec<f64>,
    shape: Shape,
    star_column: Option<usize>,
}

impl Weigher {
    pub fn star_column(&self) -> Option<usize> {
        self.star_column
    }

    pub fn without_star_column(&self) -> Weigher {
        Weigher {
            star_column: None,
            ..self.clone()
        }
    }

    pub fn with_star_column(&self, column: usize) -> Weigher {
        Weigher {
            star_column: Some(column),
            ..self.clone()
        }
    }

    pub fn contribution(&self, column: usize) -> f64 {
        self.contrib[column]
    }

    fn finish(&self, sum: f64) -> f64 {
        match self.shape {
            Shape::Linear => sum,
            Shape::MinusOne => (sum - 1.0).max(0.0),
            Shape::Power(k) => sum.powf(k),
        }
    }

    /// Weight from the list of instantiated columns.
    pub fn weight_of_columns(&self, columns: impl IntoIterator<Item = usize>) -> f64 {
        let mut sum = 0.0;
        let mut has_star_col = self.star_column.is_none();
        for c in columns {
            sum += self.contrib[c];
            has_star_col |= Some(c) == self.star_column;
        }
        if has_star_col {
            self.finish(sum)
        } else {
            0.0
        }
    }

    pub fn weight(&self, rule: &Rule) -> f64 {
        self.weight_of_columns(rule.instantiated().map(|(c, _)| c))
    }

    /// Weight of the rule instantiating every column; no rule weighs more.
    pub fn max_weight(&self) -> f64 {
        self.weight_of_columns(0..self.contrib.len())
    }
}
