//! Append-only registry of loaded tables.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use smartdrill::{marketing, ColumnSchema, LoadOptions, Table};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    #[default]
    Csv,
    /// Whitespace-separated survey codes, see [`smartdrill::marketing`].
    Marketing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegisterRequest {
    pub name: Option<String>,
    /// File to load; relative paths resolve against the dataset directory.
    pub path: Option<PathBuf>,
    /// Inline CSV text, instead of `path`.
    pub csv: Option<String>,
    pub format: SourceFormat,
    pub options: Option<LoadOptions>,
    /// Sidecar schema file; ignored when `options` is given.
    pub schema: Option<PathBuf>,
    /// Keep only the first this many columns.
    pub columns: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub name: String,
    pub source: String,
    pub rows: usize,
    pub columns: Vec<ColumnSchema>,
    pub options: LoadOptions,
}

struct Entry {
    record: DatasetRecord,
    table: Arc<Table>,
}

#[derive(Default)]
pub struct Registry {
    entries: RwLock<Vec<Entry>>,
}

impl Registry {
    pub fn insert(&self, name: String, source: String, options: LoadOptions, table: Table) -> DatasetRecord {
        let mut entries = self.entries.write();
        let record = DatasetRecord {
            id: format!("ds-{}", entries.len() + 1),
            name,
            source,
            rows: table.num_rows(),
            columns: table.columns().to_vec(),
            options,
        };
        entries.push(Entry {
            record: record.clone(),
            table: Arc::new(table),
        });
        record
    }

    pub fn list(&self) -> Vec<DatasetRecord> {
        self.entries.read().iter().map(|e| e.record.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Result<(DatasetRecord, Arc<Table>), ServiceError> {
        self.entries
            .read()
            .iter()
            .find(|e| e.record.id == id)
            .map(|e| (e.record.clone(), Arc::clone(&e.table)))
            .ok_or_else(|| ServiceError::NotFound {
                kind: "dataset",
                id: id.into(),
            })
    }
}

/// Loads the table a registration request describes.
pub fn load(req: &RegisterRequest, dataset_dir: &Path) -> Result<(String, LoadOptions, Table), ServiceError> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dataset_dir.join(p) };
    let options = match (&req.options, &req.schema) {
        (Some(o), _) => o.clone(),
        (None, Some(s)) => LoadOptions::from_sidecar(&resolve(s))?,
        (None, None) => LoadOptions::default(),
    };
    let (source, table) = match (&req.path, &req.csv) {
        (Some(_), Some(_)) => return Err(ServiceError::BadRequest("give either path or csv, not both".into())),
        (None, None) => return Err(ServiceError::BadRequest("give a path or inline csv".into())),
        (None, Some(text)) => match req.format {
            SourceFormat::Csv => ("inline".to_string(), Table::read_csv(text.as_bytes(), &options)?),
            SourceFormat::Marketing => ("inline".to_string(), marketing::read_marketing(text.as_bytes())?),
        },
        (Some(p), None) => {
            let full = resolve(p);
            let t = match req.format {
                SourceFormat::Csv => Table::load_csv(&full, &options)?,
                SourceFormat::Marketing => marketing::load_marketing(&full)?,
            };
            (full.display().to_string(), t)
        }
    };
    let table = match req.columns {
        Some(n) => table.first_columns(n)?,
        None => table,
    };
    Ok((source, options, table))
}
