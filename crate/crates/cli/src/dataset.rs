use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use smartdrill::{fixtures, marketing, LoadOptions, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// `.data` files are survey codes, everything else CSV
    Auto,
    Csv,
    Marketing,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// CSV file, survey `.data` file, or `synthetic:<rows>[:<seed>]`
    pub dataset: String,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Sidecar schema (`key = value` lines) with load options
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Keep only the first N columns
    #[arg(long = "cols")]
    pub cols: Option<usize>,
    /// Treat this column as a numeric measure (repeatable)
    #[arg(long = "measure")]
    pub measures: Vec<String>,
}

impl DatasetArgs {
    pub fn load(&self) -> Result<Table> {
        let table = load(&self.dataset, self.format, self.schema.as_deref(), &self.measures)?;
        Ok(match self.cols {
            Some(n) => table.first_columns(n)?,
            None => table,
        })
    }
}

fn load(spec: &str, format: Format, schema: Option<&Path>, measures: &[String]) -> Result<Table> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        let mut parts = rest.split(':');
        let rows: usize = parts.next().unwrap_or("").parse().context("synthetic:<rows>[:<seed>]")?;
        let seed: u64 = match parts.next() {
            Some(s) => s.parse().context("synthetic seed")?,
            None => 0,
        };
        return Ok(fixtures::correlated(&fixtures::marketing_like_columns(), rows, 0.4, seed));
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("no such dataset: {spec}");
    }
    let survey = match format {
        Format::Marketing => true,
        Format::Csv => false,
        Format::Auto => path.extension().is_some_and(|e| e == "data"),
    };
    if survey {
        return Ok(marketing::load_marketing(path)?);
    }
    let mut options = match schema {
        Some(s) => LoadOptions::from_sidecar(s)?,
        None => LoadOptions::default(),
    };
    options.measures.extend(measures.iter().cloned());
    Ok(Table::load_csv(path, &options)?)
}
