//! Synthetic error injection for benchmarking the detector library.
//!
//! Each injection plants one error kind into an exact number of cells
//! (round(fraction x rows)) and records every touched cell as ground
//! truth, so detector recall is computable afterwards. An optional
//! label-correlation rho biases which rows receive errors toward one
//! label class. A cell is injected at most once across the whole spec.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{Table, Value};

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("fraction must be in (0,1), got {0}")]
    BadFraction(f64),
    #[error("rho must be in [0,1], got {0}")]
    BadRho(f64),
    #[error("column not found: {0}")]
    ColumnNotFound(String),
    #[error("{kind} needs {needed} target column(s), got {got}")]
    WrongColumnCount {
        kind: String,
        needed: usize,
        got: usize,
    },
    #[error("rho given without a target label")]
    RhoWithoutLabel,
    #[error("numeric-outlier target column {0} has no numeric values")]
    NotNumeric(String),
    #[error("no distinct value pair available for rare co-occurrence in ({0}, {1})")]
    NoRarePair(String, String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorKind {
    /// Replace the cell with a sentinel string such as "?".
    MissingSentinel { sentinel: String },
    /// Push the cell `sigma` standard deviations from the column mean.
    NumericOutlier { sigma: f64 },
    /// Overwrite the whole row with the column names, the classic
    /// re-embedded spreadsheet header.
    HeaderRow,
    /// Swap the values of the two target columns.
    SwapColumns,
    /// Write a pair of individually common values that never co-occur
    /// in the clean data into the two target columns.
    RareCoOccurrence,
}

impl ErrorKind {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::MissingSentinel { .. } => "missing-sentinel",
            ErrorKind::NumericOutlier { .. } => "numeric-outlier",
            ErrorKind::HeaderRow => "header-row",
            ErrorKind::SwapColumns => "swap-columns",
            ErrorKind::RareCoOccurrence => "rare-co-occurrence",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Injection {
    #[serde(flatten)]
    pub kind: ErrorKind,
    /// Target columns; header-row ignores this and touches every
    /// non-label column.
    #[serde(default)]
    pub columns: Vec<String>,
    pub fraction: f64,
    /// Label-correlation: 0 = uniform row choice, 1 = only rows of
    /// `label`.
    #[serde(default)]
    pub rho: Option<f64>,
    /// The label class rho biases toward (raw CSV form).
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub seed: u64,
    pub injections: Vec<Injection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedCell {
    pub row_id: u64,
    pub column: String,
    pub kind: String,
    pub clean: String,
    pub dirty: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub cells: Vec<InjectedCell>,
}

impl GroundTruth {
    pub fn cell_set(&self) -> BTreeSet<(u64, String)> {
        self.cells
            .iter()
            .map(|c| (c.row_id, c.column.clone()))
            .collect()
    }

    /// Fraction of ground-truth cells present in `flagged`, optionally
    /// restricted to one error kind.
    pub fn recall(&self, flagged: &BTreeSet<(u64, String)>, kind: Option<&str>) -> f64 {
        let relevant: Vec<&InjectedCell> = self
            .cells
            .iter()
            .filter(|c| kind.is_none_or(|k| c.kind == k))
            .collect();
        if relevant.is_empty() {
            return 1.0;
        }
        let hit = relevant
            .iter()
            .filter(|c| flagged.contains(&(c.row_id, c.column.clone())))
            .count();
        hit as f64 / relevant.len() as f64
    }
}

/// Pick exactly `k` distinct row indices from `eligible`, biased toward
/// rows of the target label: a rho share of the picks comes from the
/// biased class, the rest proportionally from everyone else.
fn pick_rows(
    table: &Table,
    eligible: &[usize],
    k: usize,
    rho: Option<f64>,
    label: Option<&str>,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut pool: Vec<usize> = eligible.to_vec();
    match (rho, label) {
        (Some(rho), Some(label)) if rho > 0.0 => {
            let (mut biased, mut rest): (Vec<usize>, Vec<usize>) = pool.iter().partition(|&&i| {
                table.records[i]
                    .label
                    .as_ref()
                    .map(|l| l.to_csv_field() == label)
                    .unwrap_or(false)
            });
            let share = rho + (1.0 - rho) * biased.len() as f64 / pool.len().max(1) as f64;
            let want_biased = ((k as f64 * share).round() as usize).min(k).min(biased.len());
            biased.shuffle(rng);
            rest.shuffle(rng);
            let mut out: Vec<usize> = biased.into_iter().take(want_biased).collect();
            out.extend(rest.into_iter().take(k - out.len().min(k)));
            out.truncate(k);
            out
        }
        _ => {
            pool.shuffle(rng);
            pool.truncate(k);
            pool
        }
    }
}

/// Apply the spec to a clean table. Deterministic under the spec seed.
pub fn inject(clean: &Table, spec: &InjectionSpec) -> Result<(Table, GroundTruth), InjectError> {
    let mut dirty = clean.clone();
    let mut truth = GroundTruth::default();
    // (row index, column index) pairs already injected
    let mut touched: BTreeSet<(usize, usize)> = BTreeSet::new();
    let label_idx = clean.schema.label_index();

    for (n, inj) in spec.injections.iter().enumerate() {
        if !(inj.fraction > 0.0 && inj.fraction < 1.0) {
            return Err(InjectError::BadFraction(inj.fraction));
        }
        if let Some(rho) = inj.rho {
            if !(0.0..=1.0).contains(&rho) {
                return Err(InjectError::BadRho(rho));
            }
            if inj.label.is_none() {
                return Err(InjectError::RhoWithoutLabel);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(n as u64));
        let k = (inj.fraction * clean.len() as f64).round() as usize;
        let col_indices: Vec<usize> = inj
            .columns
            .iter()
            .map(|c| {
                clean
                    .schema
                    .column_index(c)
                    .ok_or_else(|| InjectError::ColumnNotFound(c.clone()))
            })
            .collect::<Result<_, _>>()?;
        let needed = match inj.kind {
            ErrorKind::HeaderRow => 0,
            ErrorKind::SwapColumns | ErrorKind::RareCoOccurrence => 2,
            _ => 1,
        };
        if col_indices.len() != needed {
            return Err(InjectError::WrongColumnCount {
                kind: inj.kind.name().into(),
                needed,
                got: col_indices.len(),
            });
        }

        match &inj.kind {
            ErrorKind::MissingSentinel { sentinel } => {
                let col = col_indices[0];
                let eligible: Vec<usize> = (0..clean.len())
                    .filter(|&i| {
                        !touched.contains(&(i, col))
                            && clean.records[i].values[col].to_csv_field() != *sentinel
                    })
                    .collect();
                for i in pick_rows(clean, &eligible, k, inj.rho, inj.label.as_deref(), &mut rng) {
                    record_cell(
                        &mut dirty,
                        &mut truth,
                        &mut touched,
                        clean,
                        i,
                        col,
                        Value::parse(sentinel),
                        inj.kind.name(),
                    );
                }
            }
            ErrorKind::NumericOutlier { sigma } => {
                let col = col_indices[0];
                let nums: Vec<f64> = clean
                    .column_values(col)
                    .filter_map(|v| v.as_number())
                    .collect();
                if nums.is_empty() {
                    return Err(InjectError::NotNumeric(inj.columns[0].clone()));
                }
                let mean = nums.iter().sum::<f64>() / nums.len() as f64;
                let var = nums.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / nums.len() as f64;
                let std = var.sqrt().max(1e-9);
                let eligible: Vec<usize> = (0..clean.len())
                    .filter(|&i| !touched.contains(&(i, col)))
                    .collect();
                for i in pick_rows(clean, &eligible, k, inj.rho, inj.label.as_deref(), &mut rng) {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    let outlier = mean + sign * sigma * std;
                    record_cell(
                        &mut dirty,
                        &mut truth,
                        &mut touched,
                        clean,
                        i,
                        col,
                        Value::number(outlier),
                        inj.kind.name(),
                    );
                }
            }
            ErrorKind::HeaderRow => {
                let cols: Vec<usize> = (0..clean.schema.columns.len())
                    .filter(|i| Some(*i) != label_idx)
                    .collect();
                let eligible: Vec<usize> = (0..clean.len())
                    .filter(|&i| {
                        cols.iter().all(|&c| {
                            !touched.contains(&(i, c))
                                && clean.records[i].values[c].to_csv_field()
                                    != clean.schema.columns[c].name
                        })
                    })
                    .collect();
                for i in pick_rows(clean, &eligible, k, inj.rho, inj.label.as_deref(), &mut rng) {
                    for &c in &cols {
                        record_cell(
                            &mut dirty,
                            &mut truth,
                            &mut touched,
                            clean,
                            i,
                            c,
                            Value::parse(&clean.schema.columns[c].name),
                            inj.kind.name(),
                        );
                    }
                }
            }
            ErrorKind::SwapColumns => {
                let (a, b) = (col_indices[0], col_indices[1]);
                let eligible: Vec<usize> = (0..clean.len())
                    .filter(|&i| {
                        !touched.contains(&(i, a))
                            && !touched.contains(&(i, b))
                            && clean.records[i].values[a] != clean.records[i].values[b]
                    })
                    .collect();
                for i in pick_rows(clean, &eligible, k, inj.rho, inj.label.as_deref(), &mut rng) {
                    let va = clean.records[i].values[a].clone();
                    let vb = clean.records[i].values[b].clone();
                    record_cell(
                        &mut dirty,
                        &mut truth,
                        &mut touched,
                        clean,
                        i,
                        a,
                        vb,
                        inj.kind.name(),
                    );
                    record_cell(
                        &mut dirty,
                        &mut truth,
                        &mut touched,
                        clean,
                        i,
                        b,
                        va,
                        inj.kind.name(),
                    );
                }
            }
            ErrorKind::RareCoOccurrence => {
                let (a, b) = (col_indices[0], col_indices[1]);
                let pairs: BTreeSet<(String, String)> = clean
                    .records
                    .iter()
                    .map(|r| {
                        (
                            r.values[a].to_csv_field(),
                            r.values[b].to_csv_field(),
                        )
                    })
                    .collect();
                let vals_a: Vec<String> = clean
                    .column_values(a)
                    .filter(|v| !v.is_missing())
                    .map(|v| v.to_csv_field())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let vals_b: Vec<String> = clean
                    .column_values(b)
                    .filter(|v| !v.is_missing())
                    .map(|v| v.to_csv_field())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let rare = vals_a
                    .iter()
                    .flat_map(|x| vals_b.iter().map(move |y| (x.clone(), y.clone())))
                    .find(|p| !pairs.contains(p))
                    .ok_or_else(|| {
                        InjectError::NoRarePair(inj.columns[0].clone(), inj.columns[1].clone())
                    })?;
                let eligible: Vec<usize> = (0..clean.len())
                    .filter(|&i| {
                        !touched.contains(&(i, a))
                            && !touched.contains(&(i, b))
                            && (clean.records[i].values[a].to_csv_field() != rare.0
                                || clean.records[i].values[b].to_csv_field() != rare.1)
                    })
                    .collect();
                for i in pick_rows(clean, &eligible, k, inj.rho, inj.label.as_deref(), &mut rng) {
                    if clean.records[i].values[a].to_csv_field() != rare.0 {
                        record_cell(
                            &mut dirty,
                            &mut truth,
                            &mut touched,
                            clean,
                            i,
                            a,
                            Value::parse(&rare.0),
                            inj.kind.name(),
                        );
                    }
                    if clean.records[i].values[b].to_csv_field() != rare.1 {
                        record_cell(
                            &mut dirty,
                            &mut truth,
                            &mut touched,
                            clean,
                            i,
                            b,
                            Value::parse(&rare.1),
                            inj.kind.name(),
                        );
                    }
                }
            }
        }
    }
    Ok((dirty, truth))
}

#[allow(clippy::too_many_arguments)]
fn record_cell(
    dirty: &mut Table,
    truth: &mut GroundTruth,
    touched: &mut BTreeSet<(usize, usize)>,
    clean: &Table,
    row: usize,
    col: usize,
    value: Value,
    kind: &str,
) {
    let before = clean.records[row].values[col].clone();
    debug_assert_ne!(before, value, "injection must change the cell");
    dirty.records[row].values[col] = value.clone();
    touched.insert((row, col));
    truth.cells.push(InjectedCell {
        row_id: clean.records[row].row_id,
        column: dirty.schema.columns[col].name.clone(),
        kind: kind.into(),
        clean: before.to_csv_field(),
        dirty: value.to_csv_field(),
    });
}
