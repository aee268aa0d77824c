//! Relational data model, CSV ingestion, column type inference and
//! train/test splitting.
//!
//! Tables are immutable after load and safe to share across readers.
//! Ingestion deliberately repairs nothing: malformed-width rows are kept
//! (padded or truncated) and flagged, and sentinel strings like "NaN" or
//! "-999" stay as Text so the detectors can see them. Only truly empty
//! cells become [`Value::Missing`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::TypeInferenceConfig;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file has no data rows")]
    Empty,
    #[error("duplicate header name: {0}")]
    DuplicateHeader(String),
    #[error("label column not found: {0}")]
    LabelColumnNotFound(String),
    #[error("test fraction must be in (0,1), got {0}")]
    BadFraction(f64),
    #[error("all labels are missing; cannot build a test split")]
    AllLabelsMissing,
    #[error("not enough rows for a non-empty train/test split")]
    InsufficientRows,
    #[error("table has no label column")]
    NoLabels,
}

/// A single cell. Numbers are always finite: raw strings that would parse
/// to NaN or infinity are preserved as Text so detectors can flag them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Missing,
    Number(f64),
    Text(String),
}

impl Value {
    /// Parse one raw CSV cell. Only the empty string becomes Missing.
    pub fn parse(raw: &str) -> Value {
        if raw.is_empty() {
            return Value::Missing;
        }
        match raw.parse::<f64>() {
            Ok(n) if n.is_finite() => Value::number(n),
            _ => Value::Text(raw.to_string()),
        }
    }

    /// Construct a finite Number, normalizing -0.0 so equality and hashing agree.
    pub fn number(n: f64) -> Value {
        assert!(n.is_finite(), "stored numbers must be finite");
        Value::Number(if n == 0.0 { 0.0 } else { n })
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    /// The raw string form written back to CSV.
    pub fn to_csv_field(&self) -> String {
        match self {
            Value::Missing => String::new(),
            Value::Number(n) => format_number(*n),
            Value::Text(s) => s.clone(),
        }
    }
}

/// Shortest display form; round-trips through `f64` parsing.
fn format_number(n: f64) -> String {
    let s = format!("{n}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(n));
    s
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Missing, Value::Missing) => true,
            (Value::Number(a), Value::Number(b)) => a == b,
            (Value::Text(a), Value::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Value::Missing => 0u8.hash(state),
            Value::Number(n) => {
                1u8.hash(state);
                n.to_bits().hash(state);
            }
            Value::Text(s) => {
                2u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Value::Missing, Value::Missing) => Ordering::Equal,
            (Value::Missing, _) => Ordering::Less,
            (_, Value::Missing) => Ordering::Greater,
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Number(_), Value::Text(_)) => Ordering::Less,
            (Value::Text(_), Value::Number(_)) => Ordering::Greater,
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Missing => write!(f, ""),
            Value::Number(n) => write!(f, "{}", format_number(*n)),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Numeric,
    Categorical,
    Text,
    Date,
    Address,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<Column>,
    pub label_column: Option<String>,
}

impl Schema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn label_index(&self) -> Option<usize> {
        self.label_column
            .as_deref()
            .and_then(|n| self.column_index(n))
    }

    pub fn column_type(&self, name: &str) -> Option<ColumnType> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.ty)
    }

    /// Columns usable as model features (everything except the label).
    pub fn feature_indices(&self) -> Vec<usize> {
        let label = self.label_index();
        (0..self.columns.len())
            .filter(|i| Some(*i) != label)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub row_id: u64,
    pub values: Vec<Value>,
    /// Copy of the label cell; None when the label is missing or there is
    /// no label column.
    pub label: Option<Value>,
}

impl Record {
    pub fn value(&self, idx: usize) -> &Value {
        &self.values[idx]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub schema: Schema,
    pub records: Vec<Record>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Column values in row order.
    pub fn column_values(&self, idx: usize) -> impl Iterator<Item = &Value> {
        self.records.iter().map(move |r| &r.values[idx])
    }

    /// Rebuild each record's label field from the schema's label column.
    pub fn with_label_column(mut self, label_column: Option<String>) -> Result<Self, TableError> {
        if let Some(name) = &label_column {
            let idx = self
                .schema
                .column_index(name)
                .ok_or_else(|| TableError::LabelColumnNotFound(name.clone()))?;
            for rec in &mut self.records {
                rec.label = match &rec.values[idx] {
                    Value::Missing => None,
                    v => Some(v.clone()),
                };
            }
        } else {
            for rec in &mut self.records {
                rec.label = None;
            }
        }
        self.schema.label_column = label_column;
        Ok(self)
    }

    /// Distinct labels in first-occurrence train row order.
    pub fn label_order(&self) -> Vec<Value> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for rec in &self.records {
            if let Some(l) = &rec.label {
                if seen.insert(l.clone()) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    /// Most frequent label; ties break by first occurrence in row order.
    pub fn majority_label(&self) -> Option<Value> {
        let mut counts: BTreeMap<Value, usize> = BTreeMap::new();
        for rec in &self.records {
            if let Some(l) = &rec.label {
                *counts.entry(l.clone()).or_insert(0) += 1;
            }
        }
        let best = counts.values().copied().max()?;
        self.label_order()
            .into_iter()
            .find(|l| counts[l] == best)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Table,
    pub test: Table,
    pub schema: Schema,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub delimiter: Option<u8>,
    pub has_header: bool,
    pub label_column: Option<String>,
}

impl LoadOptions {
    pub fn with_header(label_column: Option<String>) -> Self {
        Self {
            delimiter: None,
            has_header: true,
            label_column,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: usize,
    pub columns: usize,
    /// Rows whose field count differed from the header width. They are
    /// retained (padded with Missing or truncated), not dropped.
    pub malformed_rows: Vec<u64>,
}

/// Load a CSV file. Empty cells become Missing; everything else is kept
/// byte-exact as Text or parsed as a finite Number.
pub fn load_csv(path: &Path, options: &LoadOptions) -> Result<(Table, LoadReport), TableError> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, options)
}

pub fn load_csv_reader<R: std::io::Read>(
    reader: R,
    options: &LoadOptions,
) -> Result<(Table, LoadReport), TableError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(options.delimiter.unwrap_or(b','))
        .from_reader(reader);

    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }

    let header: Vec<String> = if options.has_header {
        if rows.is_empty() {
            return Err(TableError::Empty);
        }
        let h = rows.remove(0);
        let names: Vec<String> = h.iter().map(|s| s.to_string()).collect();
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(TableError::DuplicateHeader(n.clone()));
            }
        }
        names
    } else {
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        (0..width).map(|i| format!("col{i}")).collect()
    };

    if rows.is_empty() {
        return Err(TableError::Empty);
    }

    let width = header.len();
    let mut records = Vec::with_capacity(rows.len());
    let mut malformed = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let row_id = i as u64;
        if row.len() != width {
            malformed.push(row_id);
        }
        let mut values: Vec<Value> = row.iter().take(width).map(Value::parse).collect();
        while values.len() < width {
            values.push(Value::Missing);
        }
        records.push(Record {
            row_id,
            values,
            label: None,
        });
    }

    let schema = Schema {
        columns: header
            .into_iter()
            .map(|name| Column {
                name,
                ty: ColumnType::Text,
            })
            .collect(),
        label_column: None,
    };
    let report = LoadReport {
        rows: records.len(),
        columns: width,
        malformed_rows: malformed,
    };
    let table = Table { schema, records }.with_label_column(options.label_column.clone())?;
    Ok((table, report))
}

/// Write a table back to CSV (RFC-4180 quoting, header included).
pub fn write_csv(table: &Table, path: &Path) -> Result<(), TableError> {
    let file = std::fs::File::create(path)?;
    write_csv_writer(table, file)
}

pub fn write_csv_writer<W: std::io::Write>(table: &Table, writer: W) -> Result<(), TableError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))?;
    for rec in &table.records {
        wtr.write_record(rec.values.iter().map(|v| v.to_csv_field()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// True when the string has enough components for a (Month, Day, Year) date.
pub fn looks_like_date(s: &str) -> bool {
    let tokens: Vec<&str> = s
        .split(|c: char| "-/., :T".contains(c))
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.len() < 3 {
        return false;
    }
    let nums: Vec<Option<u32>> = tokens.iter().map(|t| t.parse::<u32>().ok()).collect();
    let has_year = nums
        .iter()
        .any(|n| matches!(n, Some(y) if (1000..3000).contains(y)));
    let month_names = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    let has_month = nums
        .iter()
        .any(|n| matches!(n, Some(m) if (1..=12).contains(m)))
        || tokens.iter().any(|t| {
            let l = t.to_ascii_lowercase();
            month_names.iter().any(|m| l.starts_with(m))
        });
    let has_day = nums
        .iter()
        .any(|n| matches!(n, Some(d) if (1..=31).contains(d)));
    has_year && has_month && has_day
}

/// True when the string has minimal (Street, City) address components:
/// a leading street number, a street keyword and a comma-separated part.
pub fn looks_like_address(s: &str) -> bool {
    let street_words = [
        "st", "street", "ave", "avenue", "rd", "road", "blvd", "boulevard", "ln", "lane", "dr",
        "drive", "ct", "court", "way", "pl", "place",
    ];
    let has_number = s
        .split_whitespace()
        .next()
        .map(|t| t.chars().all(|c| c.is_ascii_digit()) && !t.is_empty())
        .unwrap_or(false);
    let has_street_word = s.split_whitespace().any(|t| {
        let l: String = t
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        street_words.contains(&l.as_str())
    });
    has_number && has_street_word && s.contains(',')
}

fn raw_text(v: &Value) -> Option<String> {
    match v {
        Value::Missing => None,
        Value::Number(n) => Some(format_number(*n)),
        Value::Text(s) => Some(s.clone()),
    }
}

/// Infer one type per column. Deterministic and row-permutation-invariant.
pub fn infer_types(table: &Table, cfg: &TypeInferenceConfig) -> Schema {
    let n_rows = table.len();
    let cat_bound = cfg
        .categorical_max_distinct
        .max((cfg.categorical_distinct_fraction * n_rows as f64) as usize);
    let mut columns = Vec::with_capacity(table.schema.columns.len());
    for (idx, col) in table.schema.columns.iter().enumerate() {
        let non_missing: Vec<&Value> = table
            .column_values(idx)
            .filter(|v| !v.is_missing())
            .collect();
        let ty = if non_missing.is_empty() {
            ColumnType::Text
        } else {
            let total = non_missing.len() as f64;
            let numeric = non_missing
                .iter()
                .filter(|v| matches!(v, Value::Number(_)))
                .count() as f64;
            if numeric / total >= cfg.numeric_threshold {
                ColumnType::Numeric
            } else {
                let texts: Vec<String> =
                    non_missing.iter().filter_map(|v| raw_text(v)).collect();
                let dates = texts.iter().filter(|s| looks_like_date(s)).count() as f64;
                let addresses = texts.iter().filter(|s| looks_like_address(s)).count() as f64;
                if dates / total >= cfg.date_threshold {
                    ColumnType::Date
                } else if addresses / total >= cfg.address_threshold {
                    ColumnType::Address
                } else {
                    let distinct: BTreeSet<&str> =
                        texts.iter().map(|s| s.as_str()).collect();
                    if distinct.len() <= cat_bound {
                        ColumnType::Categorical
                    } else {
                        ColumnType::Text
                    }
                }
            }
        };
        columns.push(Column {
            name: col.name.clone(),
            ty,
        });
    }
    Schema {
        columns,
        label_column: table.schema.label_column.clone(),
    }
}

/// Apply an inferred schema back onto a table (names must match).
pub fn with_schema(mut table: Table, schema: Schema) -> Table {
    assert_eq!(
        table.schema.columns.len(),
        schema.columns.len(),
        "schema width mismatch"
    );
    table.schema = schema;
    table
}

/// Deterministic train/test split. Test rows are drawn only from records
/// with non-missing labels; unlabeled records always stay in train.
pub fn split(table: &Table, test_fraction: f64, seed: u64) -> Result<Dataset, TableError> {
    if table.schema.label_column.is_none() {
        return Err(TableError::NoLabels);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(TableError::BadFraction(test_fraction));
    }
    let labeled: Vec<usize> = table
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.label.is_some())
        .map(|(i, _)| i)
        .collect();
    if labeled.is_empty() {
        return Err(TableError::AllLabelsMissing);
    }
    let n_total = table.len();
    let mut n_test = ((n_total as f64) * test_fraction).round() as usize;
    n_test = n_test.clamp(1, labeled.len());
    if n_test >= n_total {
        return Err(TableError::InsufficientRows);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = labeled.clone();
    shuffled.shuffle(&mut rng);
    let test_set: BTreeSet<usize> = shuffled.into_iter().take(n_test).collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, rec) in table.records.iter().enumerate() {
        if test_set.contains(&i) {
            test.push(rec.clone());
        } else {
            train.push(rec.clone());
        }
    }
    Ok(Dataset {
        schema: table.schema.clone(),
        train: Table {
            schema: table.schema.clone(),
            records: train,
        },
        test: Table {
            schema: table.schema.clone(),
            records: test,
        },
    })
}
