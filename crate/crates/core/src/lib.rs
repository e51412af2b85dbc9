//! Smart drill-down over relational tables.
//!
//! Given a table, the engine finds short lists of rules (tuples with
//! wildcards) that cover as much of the table as possible while being as
//! specific as possible, and keeps interactive exploration fast on large
//! tables through a pool of per-rule samples.

pub mod brs;
pub mod error;
pub mod fixtures;
pub mod marketing;
pub mod rule;
pub mod sampler;
pub mod score;
pub mod session;
pub mod table;
pub mod tuples;
pub mod weight;

pub use error::{Error, Result};
pub use rule::Rule;
pub use score::{RuleStat, ScoredRuleList};
pub use table::{Code, ColumnSchema, LoadOptions, RowId, Table};
pub use tuples::{Aggregate, TupleSet};
pub use weight::{Weigher, WeightConfig, WeightKind};
