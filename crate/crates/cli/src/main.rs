mod bench;
mod dataset;
mod render;
mod replay;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use smartdrill::session::{MaxWeight, Session, SessionConfig};
use smartdrill::{Aggregate, WeightConfig, WeightKind};

use dataset::DatasetArgs;

#[derive(Parser)]
#[command(name = "smartdrill", version, about = "Smart drill-down summaries of relational tables")]
struct Cli {
    /// Seed for all sampling randomness
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the whole table once and print the rule list
    Summarize {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value_t = Output::Table)]
        out: Output,
    },
    /// Run a script of gestures against a fresh session and print the tree
    Replay {
        #[command(flatten)]
        data: DatasetArgs,
        script: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value_t = Output::Json)]
        out: Output,
    },
    /// Sweep m_w or minSS and print averaged time and error as CSV
    ///
    /// A minSS sweep sizes sample memory to minSS, so each expansion runs on
    /// a sample of exactly that size.
    Bench {
        #[command(flatten)]
        data: DatasetArgs,
        /// `mw=1,2,3` or `minss=500,1000`
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Load a dataset, describe it and optionally write it back as CSV
    Ingest {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        write: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Output::Table)]
        out: Output,
    },
    /// Serve the HTTP API
    Serve {
        /// TOML configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Output {
    Table,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Weight {
    Size,
    Bits,
    SizeMinusOne,
    Parametric,
}

#[derive(Debug, Clone, Args)]
struct EngineArgs {
    /// Rules per expansion
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Weight::Size)]
    weight: Weight,
    /// Largest rule weight searched, or `auto`
    #[arg(long, default_value = "5")]
    mw: String,
    #[arg(long, default_value_t = 5000)]
    minss: usize,
    /// Sample memory in tuples
    #[arg(long, default_value_t = 50_000)]
    mem: usize,
    /// Summarize the sum of this measure column instead of counts
    #[arg(long)]
    sum: Option<String>,
    /// Multiply a column's weight, `COL=FACTOR` (repeatable)
    #[arg(long = "favor", value_parser = parse_pair)]
    favor: Vec<(String, f64)>,
    /// Give a column no weight (repeatable)
    #[arg(long = "ignore")]
    ignore: Vec<String>,
    /// Parametric weight of a column, `COL=W` (repeatable)
    #[arg(long = "col-weight", value_parser = parse_pair)]
    col_weight: Vec<(String, f64)>,
    #[arg(long, default_value_t = 1.0)]
    default_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    exponent: f64,
    /// Stop an expansion after this many milliseconds
    #[arg(long)]
    time_limit_ms: Option<u64>,
}

fn parse_pair(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.rsplit_once('=').ok_or_else(|| format!("expected COL=NUMBER, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|_| format!("not a number: {v:?}"))?;
    Ok((k.to_string(), v))
}

impl EngineArgs {
    fn config(&self, seed: u64) -> Result<SessionConfig> {
        let kind = match self.weight {
            Weight::Size => WeightKind::Size,
            Weight::Bits => WeightKind::Bits,
            Weight::SizeMinusOne => WeightKind::SizeMinusOne,
            Weight::Parametric => WeightKind::Parametric {
                weights: self.col_weight.iter().cloned().collect(),
                default_weight: self.default_weight,
                exponent: self.exponent,
            },
        };
        if !self.col_weight.is_empty() && self.weight != Weight::Parametric {
            bail!("--col-weight needs --weight parametric");
        }
        let m_w = match self.mw.as_str() {
            "auto" => MaxWeight::Auto,
            v => MaxWeight::Fixed(v.parse().with_context(|| format!("--mw {v:?}"))?),
        };
        Ok(SessionConfig {
            k: self.k,
            m_w,
            min_ss: self.minss,
            memory: self.mem,
            weight: WeightConfig {
                kind,
                favored: self.favor.iter().cloned().collect::<BTreeMap<_, _>>(),
                ignored: self.ignore.clone(),
                star_column: None,
            },
            aggregate: match &self.sum {
                Some(c) => Aggregate::Sum(c.clone()),
                None => Aggregate::Count,
            },
            time_limit_ms: self.time_limit_ms,
            seed,
            prefetch: false,
        })
    }

    fn value_name(&self) -> &'static str {
        if self.sum.is_some() {
            "Sum"
        } else {
            "Count"
        }
    }
}

fn load(data: &DatasetArgs, engine: Option<&EngineArgs>) -> Result<Arc<smartdrill::Table>> {
    let mut data = data.clone();
    if let Some(c) = engine.and_then(|e| e.sum.clone()) {
        if !data.measures.contains(&c) {
            data.measures.push(c);
        }
    }
    Ok(Arc::new(data.load()?))
}

fn summarize(data: &DatasetArgs, engine: &EngineArgs, seed: u64, out: Output) -> Result<String> {
    let table = load(data, Some(engine))?;
    let value = engine.value_name();
    if engine.k == 0 {
        return match out {
            Output::Table => Ok(render::table(&table, value, &[])),
            Output::Csv => render::csv(&table, value, &[]),
            Output::Json => render::json(&table, value, None, &[]),
        };
    }
    let mut s = Session::new(Arc::clone(&table), engine.config(seed)?)?;
    s.expand(&[])?;
    let root = s.root();
    let head = render::row(&table, 0, &root.rule, root.value, root.weight, root.count_is_exact);
    let rules: Vec<render::Row> = root
        .children
        .iter()
        .map(|c| render::row(&table, 1, &c.rule, c.value, c.weight, c.count_is_exact))
        .collect();
    match out {
        Output::Table => {
            let all: Vec<render::Row> = std::iter::once(head).chain(rules).collect();
            Ok(render::table(&table, value, &all))
        }
        Output::Csv => render::csv(&table, value, &rules),
        Output::Json => render::json(&table, value, Some(&head), &rules),
    }
}

fn replay(data: &DatasetArgs, script: &PathBuf, engine: &EngineArgs, seed: u64, out: Output) -> Result<String> {
    let table = load(data, Some(engine))?;
    let text = std::fs::read_to_string(script).with_context(|| format!("reading {}", script.display()))?;
    let names: Vec<String> = table.columns().iter().map(|c| c.name.clone()).collect();
    let gestures = replay::parse(&text, &names)?;
    let mut s = Session::new(Arc::clone(&table), engine.config(seed)?)?;
    replay::run(&mut s, &gestures)?;
    match out {
        Output::Json => render::tree_json(&s.tree()),
        Output::Table => Ok(render::table(&table, engine.value_name(), &render::tree_rows(&table, s.root()))),
        Output::Csv => render::csv(&table, engine.value_name(), &render::tree_rows(&table, s.root())),
    }
}

fn bench(data: &DatasetArgs, sweep: &str, trials: usize, engine: &EngineArgs, seed: u64) -> Result<String> {
    let (name, list) = sweep.split_once('=').ok_or_else(|| anyhow!("--sweep takes mw=... or minss=..."))?;
    let kind = match name {
        "mw" => bench::Sweep::MaxWeight,
        "minss" => bench::Sweep::MinSampleSize,
        other => bail!("unknown sweep parameter {other:?}"),
    };
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("sweep value {v:?}")))
        .collect::<Result<Vec<_>>>()?;
    let table = load(data, Some(engine))?;
    let points = bench::run(table, &engine.config(seed)?, kind, &values, trials)?;
    Ok(bench::to_csv(kind, &points))
}

fn ingest(data: &DatasetArgs, write: Option<&PathBuf>, out: Output) -> Result<String> {
    let table = load(data, None)?;
    if let Some(path) = write {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        let mut header: Vec<&str> = table.columns().iter().map(|c| c.name.as_str()).collect();
        header.extend(table.measures().iter().map(|m| m.name.as_str()));
        w.write_record(&header)?;
        for (id, _) in table.scan() {
            let mut rec: Vec<String> = table.decode_row(id).into_iter().map(String::from).collect();
            rec.extend(table.measures().iter().map(|m| m.values[id as usize].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    #[derive(serde::Serialize)]
    struct Col<'a> {
        name: &'a str,
        kind: smartdrill::table::ColumnKind,
        distinct: usize,
    }
    let cols: Vec<Col> = table
        .columns()
        .iter()
        .map(|c| Col {
            name: &c.name,
            kind: c.kind,
            distinct: c.distinct_count(),
        })
        .collect();
    match out {
        Output::Json => Ok(serde_json::to_string_pretty(&serde_json::json!({
            "rows": table.num_rows(),
            "columns": cols,
            "measures": table.measures().iter().map(|m| &m.name).collect::<Vec<_>>(),
        }))? + "\n"),
        _ => {
            let mut s = format!("{} rows, {} columns\n", table.num_rows(), table.num_columns());
            for c in &cols {
                s += &format!("  {} ({} values)\n", c.name, c.distinct);
            }
            for m in table.measures() {
                s += &format!("  {} (measure)\n", m.name);
            }
            Ok(s)
        }
    }
}

fn serve(config: Option<PathBuf>, listen: Option<String>, dataset_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = smartdrill_service::ServiceConfig::load(config.as_deref())?;
    if let Some(l) = listen {
        cfg.listen = l;
    }
    if let Some(d) = dataset_dir {
        cfg.dataset_dir = d;
    }
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on {}", cfg.listen);
    rt.block_on(smartdrill_service::serve(cfg))?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let text = match &cli.command {
        Command::Summarize { data, engine, out } => summarize(data, engine, seed, *out)?,
        Command::Replay {
            data,
            script,
            engine,
            out,
        } => replay(data, script, engine, seed, *out)?,
        Command::Bench {
            data,
            sweep,
            trials,
            engine,
        } => bench(data, sweep, *trials, engine, seed)?,
        Command::Ingest { data, write, out } => ingest(data, write.as_ref(), *out)?,
        Command::Serve {
            config,
            listen,
            dataset_dir,
        } => return serve(config.clone(), listen.clone(), dataset_dir.clone()),
    };
    std::io::stdout().lock().write_all(text.as_bytes())?;
    Ok(())
}
