//! Reader for the public "Marketing" survey data (`marketing.data`): 14
//! whitespace-separated integer codes per row, `NA` for missing answers.
//!
//! The first seven columns are decoded to readable labels; the rest keep
//! their numeric codes. Missing answers become the value `NA`, and no rows
//! are dropped.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::table::{Table, TableBuilder, NA_LABEL};

pub const COLUMNS: [&str; 14] = [
    "Income",
    "Sex",
    "Marital status",
    "Age",
    "Education",
    "Occupation",
    "Time in Bay Area",
    "Dual income",
    "Household size",
    "Household under 18",
    "Householder status",
    "Type of home",
    "Ethnic classification",
    "Language",
];

pub const INCOME: [&str; 9] = [
    "Less than $10,000",
    "$10,000 to $14,999",
    "$15,000 to $19,999",
    "$20,000 to $24,999",
    "$25,000 to $29,999",
    "$30,000 to $39,999",
    "$40,000 to $49,999",
    "$50,000 to $74,999",
    "$75,000 or more",
];
pub const SEX: [&str; 2] = ["Male", "Female"];
pub const MARITAL: [&str; 5] = [
    "Married",
    "Living together, not married",
    "Divorced or separated",
    "Widowed",
    "Never married",
];
pub const AGE: [&str; 7] = ["14-17", "18-24", "25-34", "35-44", "45-54", "55-64", "64+"];
pub const EDUCATION: [&str; 6] = [
    "Grade 8 or less",
    "Grades 9-11",
    "High school",
    "1-3 years college",
    "College graduate",
    "Grad study",
];
pub const OCCUPATION: [&str; 9] = [
    "Professional / Managerial",
    "Sales Worker",
    "Factory Worker / Laborer / Driver",
    "Clerical / Service Worker",
    "Homemaker",
    "Student",
    "Military",
    "Retired",
    "Unemployed",
];
pub const TIME_IN_AREA: [&str; 5] = ["< 1 year", "1-3 years", "4-6 years", "7-10 years", "> 10 years"];

/// Value labels for the decoded columns, 1-based codes.
pub fn labels(column: usize) -> Option<&'static [&'static str]> {
    Some(match column {
        0 => &INCOME,
        1 => &SEX,
        2 => &MARITAL,
        3 => &AGE,
        4 => &EDUCATION,
        5 => &OCCUPATION,
        6 => &TIME_IN_AREA,
        _ => return None,
    })
}

pub fn read_marketing<R: Read>(reader: R) -> Result<Table> {
    let mut b = TableBuilder::new(&COLUMNS);
    let mut cells: Vec<String> = Vec::with_capacity(COLUMNS.len());
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        cells.clear();
        for (c, tok) in line.split_whitespace().enumerate() {
            if c >= COLUMNS.len() {
                break;
            }
            let cell = match (tok, labels(c)) {
                ("NA", _) => NA_LABEL.to_string(),
                (t, Some(names)) => {
                    let code: usize = t.parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("column {} holds {t:?}", COLUMNS[c]),
                    })?;
                    names
                        .get(code.wrapping_sub(1))
                        .ok_or_else(|| Error::Parse {
                            line: i + 1,
                            message: format!("code {code} out of range for {}", COLUMNS[c]),
                        })?
                        .to_string()
                }
                (t, None) => t.to_string(),
            };
            cells.push(cell);
        }
        if cells.len() != COLUMNS.len() {
            return Err(Error::RaggedRow {
                row: i + 1,
                found: cells.len(),
                expected: COLUMNS.len(),
            });
        }
        b.push(&cells);
    }
    Ok(b.finish())
}

/// Loads `marketing.data`, or a CSV with a header row when the file name
/// ends in `.csv`.
pub fn load_marketing(path: &Path) -> Result<Table> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Table::load_csv(path, &crate::table::LoadOptions::default());
    }
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_marketing(file)
}
