//! The pre-populated featurizers that map records to numeric feature
//! vectors with a feature-to-attribute mapping.
//!
//! Every featurizer returns a vector plus an attribution list naming the
//! source column of each component, so downstream anomaly detection can
//! translate threshold violations back into erroneous attributes. Type
//! signature checks use the short-circuit path: violations become
//! detector hits directly without passing through the forest.

mod embedding;

pub use embedding::{train_embeddings, EmbeddingError, EmbeddingFeaturizer, EmbeddingModel};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::table::{ColumnType, Record, Schema, Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Source attribute name per feature index; same length as `values`.
    pub attribution: Vec<String>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Fitted record-to-vector transform. `transform` is pure and its output
/// length is constant after fit; `short_circuit` reports attributes that
/// are instant failures regardless of any learned threshold.
pub trait Featurizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn transform(&self, record: &Record) -> FeatureVector;
    fn short_circuit(&self, _record: &Record) -> BTreeSet<String> {
        BTreeSet::new()
    }
}

/// Projects the Numeric columns into a feature vector. Missing or
/// unparseable cells contribute the column's train mean so the
/// quantitative signal stays orthogonal to missingness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NumericFeaturizer {
    columns: Vec<NumericColumn>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NumericColumn {
    index: usize,
    name: String,
    mean: f64,
}

impl NumericFeaturizer {
    pub fn fit(train: &Table) -> Self {
        let label_idx = train.schema.label_index();
        let mut columns = Vec::new();
        for (idx, col) in train.schema.columns.iter().enumerate() {
            if col.ty != ColumnType::Numeric || Some(idx) == label_idx {
                continue;
            }
            let nums: Vec<f64> = train
                .column_values(idx)
                .filter_map(|v| v.as_number())
                .collect();
            let mean = if nums.is_empty() {
                0.0
            } else {
                nums.iter().sum::<f64>() / nums.len() as f64
            };
            columns.push(NumericColumn {
                index: idx,
                name: col.name.clone(),
                mean,
            });
        }
        Self { columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

impl Featurizer for NumericFeaturizer {
    fn name(&self) -> &'static str {
        "numeric"
    }

    fn transform(&self, record: &Record) -> FeatureVector {
        let mut values = Vec::with_capacity(self.columns.len());
        let mut attribution = Vec::with_capacity(self.columns.len());
        for col in &self.columns {
            let v = record.values[col.index].as_number().unwrap_or(col.mean);
            values.push(v);
            attribution.push(col.name.clone());
        }
        FeatureVector { values, attribution }
    }
}

/// The hand-curated (and config-extensible) missing-value pattern bits.
pub const MISSING_PATTERNS: usize = 5;

/// One boolean feature per (column, missing pattern).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingFeaturizer {
    columns: Vec<(usize, String)>,
    sentinels: Vec<String>,
}

const MISSING_KEYWORDS: [&str; 5] = ["nan", "inf", "n/a", "none", "null"];

/// Bits: [storage Missing, empty after trim, missing keyword,
/// no alphanumeric characters, configured sentinel].
pub fn missing_pattern_bits(value: &Value, sentinels: &[String]) -> [bool; MISSING_PATTERNS] {
    let mut bits = [false; MISSING_PATTERNS];
    match value {
        Value::Missing => bits[0] = true,
        v => {
            let raw = v.to_csv_field();
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                bits[1] = true;
            }
            let lower = trimmed.to_ascii_lowercase();
            if MISSING_KEYWORDS.contains(&lower.as_str()) {
                bits[2] = true;
            }
            if !raw.chars().any(|c| c.is_alphanumeric()) {
                bits[3] = true;
            }
            if sentinels.iter().any(|s| s == trimmed) {
                bits[4] = true;
            }
        }
    }
    bits
}

impl MissingFeaturizer {
    pub fn fit(train: &Table, sentinels: &[String]) -> Self {
        let label_idx = train.schema.label_index();
        let columns = train
            .schema
            .columns
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(i, c)| (i, c.name.clone()))
            .collect();
        Self {
            columns,
            sentinels: sentinels.to_vec(),
        }
    }

    /// Columns where the record has any missing-pattern bit set.
    pub fn hit_columns(&self, record: &Record) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (idx, name) in &self.columns {
            if missing_pattern_bits(&record.values[*idx], &self.sentinels)
                .iter()
                .any(|b| *b)
            {
                out.insert(name.clone());
            }
        }
        out
    }
}

impl Featurizer for MissingFeaturizer {
    fn name(&self) -> &'static str {
        "missing"
    }

    fn transform(&self, record: &Record) -> FeatureVector {
        let mut values = Vec::with_capacity(self.columns.len() * MISSING_PATTERNS);
        let mut attribution = Vec::with_capacity(values.capacity());
        for (idx, name) in &self.columns {
            let bits = missing_pattern_bits(&record.values[*idx], &self.sentinels);
            for b in bits {
                values.push(if b { 1.0 } else { 0.0 });
                attribution.push(name.clone());
            }
        }
        FeatureVector { values, attribution }
    }

    fn short_circuit(&self, record: &Record) -> BTreeSet<String> {
        self.hit_columns(record)
    }
}

/// True when the value violates the column type's signature. Missing
/// cells are never type violations (the missing featurizer owns those).
pub fn violates_type(value: &Value, ty: ColumnType) -> bool {
    match value {
        Value::Missing => false,
        v => match ty {
            ColumnType::Numeric => !matches!(v, Value::Number(_)),
            ColumnType::Date => !crate::table::looks_like_date(&v.to_csv_field()),
            ColumnType::Address => !crate::table::looks_like_address(&v.to_csv_field()),
            ColumnType::Categorical | ColumnType::Text => false,
        },
    }
}

/// Attributes whose value violates the column's type signature.
pub fn check_type_signature(record: &Record, schema: &Schema) -> BTreeSet<String> {
    let label_idx = schema.label_index();
    let mut out = BTreeSet::new();
    for (idx, col) in schema.columns.iter().enumerate() {
        if Some(idx) == label_idx {
            continue;
        }
        if violates_type(&record.values[idx], col.ty) {
            out.insert(col.name.clone());
        }
    }
    out
}
