//! Dictionary-encoded relational tables.
//!
//! Every categorical column stores a dense code per row; codes index into the
//! column's value dictionary, assigned in first-appearance order. Rows are kept
//! row-major so a scan hands out one contiguous code slice per tuple.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Code = u32;
pub type RowId = u32;

/// Text used for missing cells when they are kept as a distinct value.
pub const NA_LABEL: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Categorical,
    BucketizedNumeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    /// Distinct raw values; a value's code is its index here.
    pub values: Vec<String>,
    /// Inner cut points of a bucketized column, strictly ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket_edges: Option<Vec<f64>>,
}

impl ColumnSchema {
    pub fn categorical(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            values: Vec::new(),
            bucket_edges: None,
        }
    }

    pub fn distinct_count(&self) -> usize {
        self.values.len()
    }

    pub fn code_of(&self, value: &str) -> Option<Code> {
        self.values.iter().position(|v| v == value).map(|i| i as Code)
    }

    pub fn label(&self, code: Code) -> &str {
        &self.values[code as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureColumn {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaPolicy {
    DropRow,
    #[default]
    KeepAsValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    pub has_header: bool,
    pub measures: Vec<String>,
    pub na_policy: NaPolicy,
    /// Numeric columns to bucketize after loading.
    pub buckets: Vec<BucketSpec>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            has_header: true,
            measures: Vec::new(),
            na_policy: NaPolicy::KeepAsValue,
            buckets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BucketStrategy {
    #[default]
    EquiWidth,
    EquiDepth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    pub column: String,
    pub strategy: BucketStrategy,
    pub bins: usize,
}

impl LoadOptions {
    /// Reads a sidecar schema file of `key = value` lines.
    ///
    /// Recognized keys: `header` (true/false), `na` (keep/drop), `measures`
    /// (comma list) and `bucket.<column>` (`equi-width:<n>` or `equi-depth:<n>`).
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_sidecar(&text)
    }

    pub fn parse_sidecar(text: &str) -> Result<Self> {
        let mut opts = LoadOptions::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "header" => {
                    opts.has_header = value
                        .parse()
                        .map_err(|_| bad(format!("header must be true or false, got {value:?}")))?
                }
                "na" => {
                    opts.na_policy = match value {
                        "keep" => NaPolicy::KeepAsValue,
                        "drop" => NaPolicy::DropRow,
                        other => return Err(bad(format!("unknown na policy {other:?}"))),
                    }
                }
                "measures" => {
                    opts.measures = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                _ => {
                    let Some(column) = key.strip_prefix("bucket.") else {
                        return Err(bad(format!("unknown key {key:?}")));
                    };
                    let (strategy, bins) = value
                        .split_once(':')
                        .ok_or_else(|| bad(format!("expected <strategy>:<bins>, got {value:?}")))?;
                    let strategy = match strategy.trim() {
                        "equi-width" => BucketStrategy::EquiWidth,
                        "equi-depth" => BucketStrategy::EquiDepth,
                        other => return Err(bad(format!("unknown bucket strategy {other:?}"))),
                    };
                    let bins = bins
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad bucket count {bins:?}")))?;
                    opts.buckets.push(BucketSpec {
                        column: column.to_string(),
                        strategy,
                        bins,
                    });
                }
            }
        }
        Ok(opts)
    }
}

fn is_missing(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell == NA_LABEL
}

/// Incrementally assigns dictionary codes in first-appearance order.
#[derive(Debug, Clone)]
pub struct TableBuilder {
    columns: Vec<ColumnSchema>,
    lookup: Vec<HashMap<String, Code>>,
    codes: Vec<Code>,
    measures: Vec<MeasureColumn>,
}

impl TableBuilder {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        TableBuilder {
            columns: names.iter().map(|n| ColumnSchema::categorical(n.as_ref())).collect(),
            lookup: vec![HashMap::new(); names.len()],
            codes: Vec::new(),
            measures: Vec::new(),
        }
    }

    pub fn with_measures<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.measures = names
            .iter()
            .map(|n| MeasureColumn {
                name: n.as_ref().to_string(),
                values: Vec::new(),
            })
            .collect();
        self
    }

    pub fn push<S: AsRef<str>>(&mut self, cells: &[S]) {
        self.push_with_measures(cells, &[]);
    }

    pub fn push_with_measures<S: AsRef<str>>(&mut self, cells: &[S], measures: &[f64]) {
        assert_eq!(cells.len(), self.columns.len(), "row arity mismatch");
        assert_eq!(measures.len(), self.measures.len(), "measure arity mismatch");
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.as_ref();
            let code = match self.lookup[c].get(cell) {
                Some(&code) => code,
                None => {
                    let code = self.columns[c].values.len() as Code;
                    self.columns[c].values.push(cell.to_string());
                    self.lookup[c].insert(cell.to_string(), code);
                    code
                }
            };
            self.codes.push(code);
        }
        for (m, v) in self.measures.iter_mut().zip(measures) {
            m.values.push(*v);
        }
    }

    pub fn finish(self) -> Table {
        Table {
            columns: self.columns,
            codes: self.codes,
            measures: self.measures,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<ColumnSchema>,
    codes: Vec<Code>,
    measures: Vec<MeasureColumn>,
}

impl Table {
    /// Builds a table from raw parts, checking that every code is in range.
    pub fn from_parts(
        columns: Vec<ColumnSchema>,
        codes: Vec<Code>,
        measures: Vec<MeasureColumn>,
    ) -> Result<Self> {
        let width = columns.len();
        let rows = codes.len().checked_div(width).unwrap_or(0);
        if width > 0 && !codes.len().is_multiple_of(width) {
            return Err(Error::InvalidConfig("code matrix is not rectangular".into()));
        }
        for (i, &code) in codes.iter().enumerate() {
            let col = &columns[i % width];
            if code as usize >= col.distinct_count() {
                return Err(Error::InvalidConfig(format!(
                    "code {code} out of range for column {}",
                    col.name
                )));
            }
        }
        for m in &measures {
            if m.values.len() != rows {
                return Err(Error::InvalidConfig(format!(
                    "measure {} has {} values for {rows} rows",
                    m.name,
                    m.values.len()
                )));
            }
        }
        Ok(Table {
            columns,
            codes,
            measures,
        })
    }

    /// Convenience constructor from string cells.
    pub fn from_rows<S: AsRef<str>, R: AsRef<[S]>>(names: &[S], rows: &[R]) -> Self {
        let mut b = TableBuilder::new(names);
        for r in rows {
            b.push(r.as_ref());
        }
        b.finish()
    }

    pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<Self> {
        let file = fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_csv(file, options)
    }

    pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(options.has_header)
            .flexible(true)
            .from_reader(reader);

        let mut records = Vec::new();
        for rec in rdr.records() {
            records.push(rec?);
        }
        let header: Vec<String> = if options.has_header {
            rdr.headers()?.iter().map(|h| h.trim().to_string()).collect()
        } else {
            let width = records.first().map_or(0, |r| r.len());
            (0..width).map(|i| format!("c{i}")).collect()
        };
        let width = header.len();

        let mut measure_idx = Vec::with_capacity(options.measures.len());
        for name in &options.measures {
            let idx = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownMeasure(name.clone()))?;
            measure_idx.push(idx);
        }
        let dim_idx: Vec<usize> = (0..width).filter(|i| !measure_idx.contains(i)).collect();
        let dim_names: Vec<&str> = dim_idx.iter().map(|&i| header[i].as_str()).collect();
        let mut builder = TableBuilder::new(&dim_names).with_measures(&options.measures);

        let mut cells: Vec<&str> = Vec::with_capacity(dim_idx.len());
        let mut values = Vec::with_capacity(measure_idx.len());
        'rows: for (r, rec) in records.iter().enumerate() {
            // 1-based line number of the record, counting the header line
            let line = r + 1 + usize::from(options.has_header);
            if rec.len() != width {
                return Err(Error::RaggedRow {
                    row: line,
                    found: rec.len(),
                    expected: width,
                });
            }
            cells.clear();
            values.clear();
            for &i in &dim_idx {
                let cell = rec[i].trim();
                if is_missing(cell) {
                    match options.na_policy {
                        NaPolicy::DropRow => continue 'rows,
                        NaPolicy::KeepAsValue => cells.push(NA_LABEL),
                    }
                } else {
                    cells.push(cell);
                }
            }
            for (&i, name) in measure_idx.iter().zip(&options.measures) {
                let cell = rec[i].trim();
                if is_missing(cell) && options.na_policy == NaPolicy::DropRow {
                    continue 'rows;
                }
                let v: f64 = cell.parse().map_err(|_| Error::NonNumericMeasure {
                    column: name.clone(),
                    row: line,
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
            builder.push_with_measures(&cells, &values);
        }

        let mut table = builder.finish();
        for spec in &options.buckets {
            table = table.bucketize(&spec.column, spec.strategy, spec.bins)?;
        }
        Ok(table)
    }

    pub fn num_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.codes.len() / self.columns.len()
        }
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num_rows() == 0
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn column(&self, c: usize) -> &ColumnSchema {
        &self.columns[c]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.columns.iter().map(ColumnSchema::distinct_count).collect()
    }

    pub fn row(&self, id: RowId) -> &[Code] {
        let w = self.columns.len();
        let start = id as usize * w;
        &self.codes[start..start + w]
    }

    /// Yields every row exactly once, in row-id order.
    pub fn scan(&self) -> impl Iterator<Item = (RowId, &[Code])> + '_ {
        let w = self.columns.len().max(1);
        let n = self.num_rows();
        self.codes[..n * self.columns.len()]
            .chunks_exact(w)
            .enumerate()
            .map(|(i, row)| (i as RowId, row))
    }

    pub fn decode_row(&self, id: RowId) -> Vec<&str> {
        self.row(id)
            .iter()
            .zip(&self.columns)
            .map(|(&code, col)| col.label(code))
            .collect()
    }

    pub fn measures(&self) -> &[MeasureColumn] {
        &self.measures
    }

    pub fn measure(&self, name: &str) -> Result<&[f64]> {
        self.measures
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.values.as_slice())
            .ok_or_else(|| Error::UnknownMeasure(name.to_string()))
    }

    /// Keeps only the given columns, in the given order. Dictionaries are unchanged.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Table> {
        if let Some(&bad) = keep.iter().find(|&&c| c >= self.columns.len()) {
            return Err(Error::UnknownColumn(format!("#{bad}")));
        }
        let columns = keep.iter().map(|&c| self.columns[c].clone()).collect();
        let mut codes = Vec::with_capacity(self.num_rows() * keep.len());
        for (_, row) in self.scan() {
            codes.extend(keep.iter().map(|&c| row[c]));
        }
        Ok(Table {
            columns,
            codes,
            measures: self.measures.clone(),
        })
    }

    pub fn first_columns(&self, n: usize) -> Result<Table> {
        let keep: Vec<usize> = (0..n.min(self.columns.len())).collect();
        self.select_columns(&keep)
    }

    /// Replaces a numeric column by bucket ids.
    ///
    /// A categorical column qualifies when every dictionary value parses as a
    /// number; a measure column is removed from the measures and appended as a
    /// new categorical column. Bucket labels read `[lo,hi]` for the first bucket
    /// and `(lo,hi]` for the rest.
    pub fn bucketize(&self, column: &str, strategy: BucketStrategy, bins: usize) -> Result<Table> {
        if bins < 1 {
            return Err(Error::InvalidBins);
        }
        let n = self.num_rows();
        let (values, position): (Vec<f64>, Option<usize>) =
            if let Some(c) = self.columns.iter().position(|c| c.name == column) {
                let parsed: Option<Vec<f64>> = self.columns[c]
                    .values
                    .iter()
                    .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect();
                let dict = parsed.ok_or_else(|| Error::NotNumeric(column.to_string()))?;
                let vals = self.scan().map(|(_, row)| dict[row[c] as usize]).collect();
                (vals, Some(c))
            } else if let Ok(m) = self.measure(column) {
                (m.to_vec(), None)
            } else {
                return Err(Error::UnknownColumn(column.to_string()));
            };

        let (edges, labels) = bucket_edges(&values, strategy, bins);
        let assign = |v: f64| edges.partition_point(|&e| e < v) as Code;
        let schema = ColumnSchema {
            name: column.to_string(),
            kind: ColumnKind::BucketizedNumeric,
            values: labels,
            bucket_edges: Some(edges.clone()),
        };

        let mut columns = self.columns.clone();
        let mut measures = self.measures.clone();
        let old_w = self.columns.len();
        let codes = match position {
            Some(c) => {
                columns[c] = schema;
                let mut codes = self.codes.clone();
                for (r, &v) in values.iter().enumerate() {
                    codes[r * old_w + c] = assign(v);
                }
                codes
            }
            None => {
                measures.retain(|m| m.name != column);
                columns.push(schema);
                let mut codes = Vec::with_capacity(n * (old_w + 1));
                for ((_, row), &v) in self.scan().zip(&values) {
                    codes.extend_from_slice(row);
                    codes.push(assign(v));
                }
                codes
            }
        };
        Ok(Table {
            columns,
            codes,
            measures,
        })
    }
}

/// Computes inner cut points and range labels. A value `v` falls into bucket
/// `i` when `edges[i-1] < v <= edges[i]`.
fn bucket_edges(values: &[f64], strategy: BucketStrategy, bins: usize) -> (Vec<f64>, Vec<String>) {
    if values.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut cuts: Vec<f64> = match strategy {
        BucketStrategy::EquiWidth => {
            let width = (hi - lo) / bins as f64;
            (1..bins).map(|i| lo + width * i as f64).collect()
        }
        BucketStrategy::EquiDepth => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            (1..bins)
                .map(|i| sorted[(i * n).div_ceil(bins) - 1])
                .collect()
        }
    };
    cuts.retain(|&c| c < hi);
    cuts.dedup();
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(lo);
    bounds.extend_from_slice(&cuts);
    bounds.push(hi);
    let labels = bounds
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if i == 0 {
                format!("[{},{}]", w[0], w[1])
            } else {
                format!("({},{}]", w[0], w[1])
            }
        })
        .collect();
    (cuts, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, opts: &LoadOptions) -> Result<Table> {
        Table::read_csv(text.as_bytes(), opts)
    }

    #[test]
    fn three_line_csv() {
        let t = load("A,B\na,b\na,c\n", &LoadOptions::default()).unwrap();
        assert_eq!(t.num_rows(), 2);
        assert_eq!(t.column(0).distinct_count(), 1);
        assert_eq!(t.column(1).distinct_count(), 2);
        assert_eq!(t.decode_row(1), vec!["a", "c"]);
    }

    #[test]
    fn header_only() {
        let t = load("A,B\n", &LoadOptions::default()).unwrap();
        assert_eq!(t.num_rows(), 0);
        assert_eq!(t.num_columns(), 2);
        assert!(t.columns().iter().all(|c| c.distinct_count() == 0));
        assert_eq!(t.scan().count(), 0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = load("A,B\na,b\na\n", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 3, found: 1, expected: 2 }));
    }

    #[test]
    fn measure_must_be_numeric() {
        let opts = LoadOptions {
            measures: vec!["sales".into()],
            ..Default::default()
        };
        let t = load("store,sales\nx,1.5\ny,2\n", &opts).unwrap();
        assert_eq!(t.measure("sales").unwrap(), &[1.5, 2.0]);
        assert_eq!(t.num_columns(), 1);
        let err = load("store,sales\nx,lots\n", &opts).unwrap_err();
        assert!(matches!(err, Error::NonNumericMeasure { .. }));
    }

    #[test]
    fn na_policies() {
        let text = "A,B\na,\nb,NA\nc,x\n";
        let keep = load(text, &LoadOptions::default()).unwrap();
        assert_eq!(keep.num_rows(), 3);
        assert_eq!(keep.column(1).values, vec!["NA", "x"]);
        let drop = load(
            text,
            &LoadOptions {
                na_policy: NaPolicy::DropRow,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(drop.num_rows(), 1);
    }

    #[test]
    fn first_appearance_codes_and_round_trip() {
        let text = "A,B\nz,1\ny,2\nz,3\n";
        let t = load(text, &LoadOptions::default()).unwrap();
        assert_eq!(t.column(0).values, vec!["z", "y"]);
        let raw: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
        for (id, _) in t.scan() {
            assert_eq!(t.decode_row(id), raw[id as usize]);
        }
    }

    #[test]
    fn equi_width_buckets() {
        let mut b = TableBuilder::new(&["v", "other"]);
        for i in 1..=100 {
            b.push(&[i.to_string(), "o".to_string()]);
        }
        let t = b.finish();
        let bt = t.bucketize("v", BucketStrategy::EquiWidth, 4).unwrap();
        let col = bt.column(0);
        assert_eq!(col.kind, ColumnKind::BucketizedNumeric);
        assert_eq!(
            col.values,
            vec!["[1,25.75]", "(25.75,50.5]", "(50.5,75.25]", "(75.25,100]"]
        );
        assert_eq!(col.bucket_edges.as_deref(), Some(&[25.75, 50.5, 75.25][..]));
        // 1..=25 -> 0, 26..=50 -> 1, ...
        assert_eq!(bt.row(24)[0], 0);
        assert_eq!(bt.row(25)[0], 1);
        assert_eq!(bt.row(99)[0], 3);
        assert_eq!(bt.num_rows(), t.num_rows());
        assert_eq!(bt.column(1), t.column(1));
        for (id, row) in t.scan() {
            assert_eq!(bt.row(id)[1], row[1]);
        }
    }

    #[test]
    fn equi_depth_median_split() {
        let t = Table::from_rows(&["v"], &[["1"], ["1"], ["1"], ["2"], ["3"], ["100"]]);
        let bt = t.bucketize("v", BucketStrategy::EquiDepth, 2).unwrap();
        let mut sizes = [0; 2];
        for (_, row) in bt.scan() {
            sizes[row[0] as usize] += 1;
        }
        assert_eq!(sizes, [3, 3]);
    }

    #[test]
    fn bucketize_rejects_labels_and_zero_bins() {
        let t = Table::from_rows(&["age"], &[["18-24"], ["25-34"]]);
        assert!(matches!(
            t.bucketize("age", BucketStrategy::EquiWidth, 2),
            Err(Error::NotNumeric(_))
        ));
        let t = Table::from_rows(&["v"], &[["1"], ["2"]]);
        assert!(matches!(
            t.bucketize("v", BucketStrategy::EquiWidth, 0),
            Err(Error::InvalidBins)
        ));
    }

    #[test]
    fn bucketize_measure_column() {
        let opts = LoadOptions {
            measures: vec!["m".into()],
            ..Default::default()
        };
        let t = load("a,m\nx,1\ny,2\nx,10\n", &opts).unwrap();
        let bt = t.bucketize("m", BucketStrategy::EquiWidth, 3).unwrap();
        assert!(bt.measures().is_empty());
        assert_eq!(bt.num_columns(), 2);
        assert_eq!(bt.column(1).distinct_count(), 3);
        assert_eq!(bt.row(2)[1], 2);
    }

    #[test]
    fn sidecar_schema() {
        let opts = LoadOptions::parse_sidecar(
            "# comment\nheader = true\nna = drop\nmeasures = sales, qty\nbucket.age = equi-depth:5\n",
        )
        .unwrap();
        assert_eq!(opts.na_policy, NaPolicy::DropRow);
        assert_eq!(opts.measures, vec!["sales", "qty"]);
        assert_eq!(
            opts.buckets,
            vec![BucketSpec {
                column: "age".into(),
                strategy: BucketStrategy::EquiDepth,
                bins: 5
            }]
        );
        assert!(LoadOptions::parse_sidecar("nonsense").is_err());
    }
}
