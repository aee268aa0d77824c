//! The repair library, conditional repairs and sequence application.
//!
//! A conditional repair pairs a predicate with a repair function and is
//! resolved to the data stage (rewrites training/test records before
//! classification) or the prediction stage (overrides the classifier's
//! output label). Data repairs fold left-to-right with predicates
//! evaluated against the current record; prediction repairs match
//! against the original uncleaned record and the last matching one wins.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::Predicate;
use crate::table::{ColumnType, Record, Table, Value};

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("discard is a data-stage repair; it cannot run at prediction stage")]
    DiscardAtPredictionStage,
    #[error("{repair} requires a Numeric column, {column} is not")]
    NonNumericColumn { repair: String, column: String },
    #[error("statistic undefined: every train cell in {column} is violated or missing")]
    UndefinedStatistic { column: String },
    #[error("train has no labels; cannot build a default prediction")]
    NoLabels,
    #[error("column not found: {0}")]
    ColumnNotFound(String),
    #[error("repair {0} is not applicable at the data stage")]
    NotADataRepair(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Data,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RepairKind {
    /// Replace violated cells in one column with a captured statistic.
    Impute { column: String, index: usize, value: Value },
    /// Drop the matching record from the training data.
    Discard,
    /// Override the classifier output with the majority train label.
    DefaultPrediction { label: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairFunction {
    pub name: String,
    pub stage: Stage,
    pub kind: RepairKind,
}

impl RepairFunction {
    /// The column an impute repair targets, if any.
    pub fn column(&self) -> Option<&str> {
        match &self.kind {
            RepairKind::Impute { column, .. } => Some(column),
            _ => None,
        }
    }
}

/// Cells of `column` in train rows where the paired predicate does not
/// implicate the column (the "excluding violated cells" rule).
fn unviolated_cells<'a>(
    train: &'a Table,
    predicate: &Predicate,
    column: &str,
    index: usize,
) -> impl Iterator<Item = &'a Value> + 'a {
    let column = column.to_string();
    let violated: Vec<bool> = train
        .records
        .iter()
        .map(|r| predicate.evaluate(r).contains(&column))
        .collect();
    train
        .records
        .iter()
        .zip(violated)
        .filter(|(_, v)| !v)
        .map(move |(r, _)| &r.values[index])
}

fn numeric_stat(
    train: &Table,
    predicate: &Predicate,
    column: &str,
    repair: &str,
    median: bool,
) -> Result<f64, RepairError> {
    let index = train
        .schema
        .column_index(column)
        .ok_or_else(|| RepairError::ColumnNotFound(column.to_string()))?;
    if train.schema.columns[index].ty != ColumnType::Numeric {
        return Err(RepairError::NonNumericColumn {
            repair: repair.to_string(),
            column: column.to_string(),
        });
    }
    let mut nums: Vec<f64> = unviolated_cells(train, predicate, column, index)
        .filter_map(|v| v.as_number())
        .collect();
    if nums.is_empty() {
        return Err(RepairError::UndefinedStatistic {
            column: column.to_string(),
        });
    }
    if median {
        nums.sort_by(f64::total_cmp);
        let mid = nums.len() / 2;
        Ok(if nums.len() % 2 == 1 {
            nums[mid]
        } else {
            0.5 * (nums[mid - 1] + nums[mid])
        })
    } else {
        Ok(nums.iter().sum::<f64>() / nums.len() as f64)
    }
}

/// Mean imputation over the train column, excluding violated cells.
pub fn impute_mean(
    train: &Table,
    predicate: &Predicate,
    column: &str,
) -> Result<RepairFunction, RepairError> {
    let value = numeric_stat(train, predicate, column, "impute_mean", false)?;
    Ok(RepairFunction {
        name: "impute_mean".into(),
        stage: Stage::Data,
        kind: RepairKind::Impute {
            column: column.to_string(),
            index: train.schema.column_index(column).unwrap(),
            value: Value::number(value),
        },
    })
}

/// Median imputation over the train column, excluding violated cells.
pub fn impute_median(
    train: &Table,
    predicate: &Predicate,
    column: &str,
) -> Result<RepairFunction, RepairError> {
    let value = numeric_stat(train, predicate, column, "impute_median", true)?;
    Ok(RepairFunction {
        name: "impute_median".into(),
        stage: Stage::Data,
        kind: RepairKind::Impute {
            column: column.to_string(),
            index: train.schema.column_index(column).unwrap(),
            value: Value::number(value),
        },
    })
}

/// Mode imputation; applicable to any column. Ties break by first
/// occurrence in train row order.
pub fn impute_mode(
    train: &Table,
    predicate: &Predicate,
    column: &str,
) -> Result<RepairFunction, RepairError> {
    let index = train
        .schema
        .column_index(column)
        .ok_or_else(|| RepairError::ColumnNotFound(column.to_string()))?;
    let cells: Vec<&Value> = unviolated_cells(train, predicate, column, index)
        .filter(|v| !v.is_missing())
        .collect();
    if cells.is_empty() {
        return Err(RepairError::UndefinedStatistic {
            column: column.to_string(),
        });
    }
    let mut counts: std::collections::BTreeMap<&Value, usize> = std::collections::BTreeMap::new();
    for v in &cells {
        *counts.entry(*v).or_insert(0) += 1;
    }
    let best = *counts.values().max().unwrap();
    let mode = cells
        .iter()
        .find(|v| counts[**v] == best)
        .unwrap();
    Ok(RepairFunction {
        name: "impute_mode".into(),
        stage: Stage::Data,
        kind: RepairKind::Impute {
            column: column.to_string(),
            index,
            value: (*mode).clone(),
        },
    })
}

/// Discard the dirty record from the training dataset. Data stage only:
/// deleting test data is disallowed.
pub fn discard_record() -> RepairFunction {
    RepairFunction {
        name: "discard".into(),
        stage: Stage::Data,
        kind: RepairKind::Discard,
    }
}

/// Prediction-stage override with the most popular train label.
pub fn default_prediction(train: &Table) -> Result<RepairFunction, RepairError> {
    let label = train.majority_label().ok_or(RepairError::NoLabels)?;
    Ok(RepairFunction {
        name: "default_prediction".into(),
        stage: Stage::Prediction,
        kind: RepairKind::DefaultPrediction { label },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionalRepair {
    pub predicate: Predicate,
    pub repair: RepairFunction,
    pub stage: Stage,
}

impl ConditionalRepair {
    pub fn new(predicate: Predicate, repair: RepairFunction) -> Result<Self, RepairError> {
        if matches!(repair.kind, RepairKind::Discard) && repair.stage == Stage::Prediction {
            return Err(RepairError::DiscardAtPredictionStage);
        }
        let stage = repair.stage;
        Ok(Self {
            predicate,
            repair,
            stage,
        })
    }

    /// Apply a data repair to a single record. Returns None when the
    /// record is discarded. The predicate evaluates against the current
    /// (possibly already cleaned) record; `_original` matches the
    /// two-argument repair signature but the built-in data repairs only
    /// read the current record.
    pub fn apply_data(&self, record: &Record, _original: &Record) -> Option<Record> {
        debug_assert_eq!(self.stage, Stage::Data);
        let violated = self.predicate.evaluate(record);
        if violated.is_empty() {
            return Some(record.clone());
        }
        match &self.repair.kind {
            RepairKind::Discard => None,
            RepairKind::Impute { column, index, value } => {
                let mut out = record.clone();
                // repair only the intersection of the implicated
                // attributes and this repair's target column
                if violated.contains(column) {
                    out.values[*index] = value.clone();
                }
                Some(out)
            }
            RepairKind::DefaultPrediction { .. } => Some(record.clone()),
        }
    }

    /// Whether this prediction repair matches the ORIGINAL record.
    pub fn matches_original(&self, original: &Record) -> bool {
        !self.predicate.evaluate(original).is_empty()
    }

    pub fn override_label(&self) -> Option<&Value> {
        match &self.repair.kind {
            RepairKind::DefaultPrediction { label } => Some(label),
            _ => None,
        }
    }
}

/// An ordered sequence of conditional repairs with its stage partitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairPlan {
    pub repairs: Vec<ConditionalRepair>,
}

impl RepairPlan {
    pub fn new(repairs: Vec<ConditionalRepair>) -> Self {
        Self { repairs }
    }

    /// L^d: the data-stage subsequence, order preserved.
    pub fn data_repairs(&self) -> Vec<&ConditionalRepair> {
        self.repairs.iter().filter(|r| r.stage == Stage::Data).collect()
    }

    /// L^p: the prediction-stage subsequence, order preserved.
    pub fn prediction_repairs(&self) -> Vec<&ConditionalRepair> {
        self.repairs
            .iter()
            .filter(|r| r.stage == Stage::Prediction)
            .collect()
    }
}

/// Fold the data repairs over every record in order; each repair sees the
/// current record and the record's original version. Discarded records
/// are removed at the end.
pub fn apply_data_repairs(repairs: &[&ConditionalRepair], table: &Table) -> Result<Table, RepairError> {
    for r in repairs {
        if r.stage != Stage::Data {
            return Err(RepairError::NotADataRepair(r.repair.name.clone()));
        }
    }
    let mut records = Vec::with_capacity(table.len());
    'rows: for rec in &table.records {
        let original = rec;
        let mut current = rec.clone();
        for r in repairs {
            match r.apply_data(&current, original) {
                Some(next) => current = next,
                None => continue 'rows,
            }
        }
        records.push(current);
    }
    Ok(Table {
        schema: table.schema.clone(),
        records,
    })
}

/// Apply one data-stage conditional repair to a single record (used when
/// materializing candidate test predictions).
pub fn apply_single_data_repair(repair: &ConditionalRepair, record: &Record) -> Option<Record> {
    repair.apply_data(record, record)
}

/// Among prediction repairs whose predicate matches the ORIGINAL record,
/// the one with the greatest index applies; otherwise the classifier
/// output stands.
pub fn apply_prediction_repair(
    repairs: &[&ConditionalRepair],
    original: &Record,
    classifier_output: Value,
) -> Value {
    let last_match = repairs
        .iter()
        .rev()
        .find(|r| r.stage == Stage::Prediction && r.matches_original(original));
    match last_match.and_then(|r| r.override_label()) {
        Some(label) => label.clone(),
        None => classifier_output,
    }
}
