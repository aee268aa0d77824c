//! Detector generators and predicates.
//!
//! A detector generator is fitted on the training table and emits
//! predicates: pure boolean tests over a record that return the set of
//! implicated attributes when they fire. All training-set aggregates
//! (pattern hits, means, forests, embeddings) are captured at generation
//! time; evaluation never touches the training table. Predicates are
//! allowed false positives and false negatives -- selecting which ones
//! actually help is boosting's job.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DetectorConfig, EmbeddingParams, ForestParams};
use crate::featurize::{
    check_type_signature, missing_pattern_bits, train_embeddings, EmbeddingModel, Featurizer,
    MissingFeaturizer, NumericFeaturizer,
};
use crate::isoforest::{IsoError, IsoForest, IsoParams};
use crate::table::{ColumnType, Record, Schema, Table, Value};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("training table is empty")]
    EmptyTable,
    #[error("embedding error: {0}")]
    Embedding(#[from] crate::featurize::EmbeddingError),
    #[error("isolation forest error: {0}")]
    Forest(#[from] IsoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredicateKind {
    /// Hard-coded heuristic checks.
    DefinedRule,
    /// Learned from the training data.
    DerivedRule,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZScoreColumn {
    pub column: String,
    pub index: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PredicateImpl {
    /// Fires when any missing-value pattern bit is set for the column.
    MissingColumn {
        column: String,
        index: usize,
        sentinels: Vec<String>,
    },
    /// Fires when the value violates the column's type signature.
    TypeColumn {
        column: String,
        index: usize,
        ty: ColumnType,
    },
    /// Per-column z-score rule |v - mean| > sigma * stddev.
    ZScore {
        sigma: f64,
        columns: Vec<ZScoreColumn>,
    },
    /// Compiled isolation forest over the numeric featurizer.
    IsoNumeric {
        forest: IsoForest,
        featurizer: NumericFeaturizer,
    },
    /// Compiled isolation forest over record embeddings.
    IsoEmbedding {
        forest: IsoForest,
        model: EmbeddingModel,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Predicate {
    pub id: String,
    pub kind: PredicateKind,
    imp: PredicateImpl,
}

impl Predicate {
    pub fn new(id: String, kind: PredicateKind, imp: PredicateImpl) -> Self {
        Self { id, kind, imp }
    }

    /// The attributes this predicate implicates on the record; the record
    /// is a candidate dirty record iff the set is non-empty. Pure.
    pub fn evaluate(&self, record: &Record) -> BTreeSet<String> {
        match &self.imp {
            PredicateImpl::MissingColumn {
                column,
                index,
                sentinels,
            } => {
                let bits = missing_pattern_bits(&record.values[*index], sentinels);
                if bits.iter().any(|b| *b) {
                    BTreeSet::from([column.clone()])
                } else {
                    BTreeSet::new()
                }
            }
            PredicateImpl::TypeColumn { column, index, ty } => {
                if crate::featurize::violates_type(&record.values[*index], *ty) {
                    BTreeSet::from([column.clone()])
                } else {
                    BTreeSet::new()
                }
            }
            PredicateImpl::ZScore { sigma, columns } => {
                let mut out = BTreeSet::new();
                for col in columns {
                    if let Value::Number(v) = &record.values[col.index] {
                        if (v - col.mean).abs() > sigma * col.stddev {
                            out.insert(col.column.clone());
                        }
                    }
                }
                out
            }
            PredicateImpl::IsoNumeric { forest, featurizer } => forest
                .verdict(&featurizer.transform(record))
                .map(|v| v.implicated_attributes)
                .unwrap_or_default(),
            PredicateImpl::IsoEmbedding { forest, model } => forest
                .verdict(&model.embed_record(record))
                .map(|v| v.implicated_attributes)
                .unwrap_or_default(),
        }
    }

    /// Columns this predicate can ever implicate, used for pairing
    /// repairs with applicable columns.
    pub fn possible_columns(&self) -> BTreeSet<String> {
        match &self.imp {
            PredicateImpl::MissingColumn { column, .. }
            | PredicateImpl::TypeColumn { column, .. } => BTreeSet::from([column.clone()]),
            PredicateImpl::ZScore { columns, .. } => {
                columns.iter().map(|c| c.column.clone()).collect()
            }
            PredicateImpl::IsoNumeric { forest, .. }
            | PredicateImpl::IsoEmbedding { forest, .. } => {
                forest.attribution.iter().cloned().collect()
            }
        }
    }

    /// The embedding-space anomaly score, when this predicate is backed
    /// by the embedding forest.
    pub fn embedding_score(&self, record: &Record) -> Option<f64> {
        match &self.imp {
            PredicateImpl::IsoEmbedding { forest, model } => {
                forest.score(&model.embed_record(record)).ok()
            }
            _ => None,
        }
    }
}

/// A fitted generator: takes the full training set, returns predicates.
/// Custom detectors register by name through this same interface.
pub trait DetectorGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, train: &Table, seed: u64) -> Result<Vec<Predicate>, DetectError>;
}

/// One predicate per column that had at least one missing-pattern hit in
/// train. Zero-hit columns get no predicate, which keeps the candidate
/// cross-product small.
pub struct MissingDetector {
    pub sentinels: Vec<String>,
}

impl DetectorGenerator for MissingDetector {
    fn name(&self) -> &str {
        "missing"
    }

    fn generate(&self, train: &Table, _seed: u64) -> Result<Vec<Predicate>, DetectError> {
        if train.is_empty() {
            return Err(DetectError::EmptyTable);
        }
        let featurizer = MissingFeaturizer::fit(train, &self.sentinels);
        let mut hit_columns: BTreeSet<String> = BTreeSet::new();
        for rec in &train.records {
            hit_columns.extend(featurizer.hit_columns(rec));
        }
        let mut out = Vec::new();
        for col in &train.schema.columns {
            if !hit_columns.contains(&col.name) {
                continue;
            }
            let index = train.schema.column_index(&col.name).unwrap();
            out.push(Predicate::new(
                format!("missing:{}", col.name),
                PredicateKind::DefinedRule,
                PredicateImpl::MissingColumn {
                    column: col.name.clone(),
                    index,
                    sentinels: self.sentinels.clone(),
                },
            ));
        }
        Ok(out)
    }
}

/// One predicate per typed column (Numeric/Date/Address) wrapping the
/// type-signature check restricted to that column.
pub struct TypeDetector;

impl DetectorGenerator for TypeDetector {
    fn name(&self) -> &str {
        "type"
    }

    fn generate(&self, train: &Table, _seed: u64) -> Result<Vec<Predicate>, DetectError> {
        if train.is_empty() {
            return Err(DetectError::EmptyTable);
        }
        let label_idx = train.schema.label_index();
        let mut out = Vec::new();
        for (index, col) in train.schema.columns.iter().enumerate() {
            if Some(index) == label_idx {
                continue;
            }
            // Categorical and Text signatures are vacuous
            if !matches!(
                col.ty,
                ColumnType::Numeric | ColumnType::Date | ColumnType::Address
            ) {
                continue;
            }
            out.push(Predicate::new(
                format!("type:{}", col.name),
                PredicateKind::DefinedRule,
                PredicateImpl::TypeColumn {
                    column: col.name.clone(),
                    index,
                    ty: col.ty,
                },
            ));
        }
        Ok(out)
    }
}

/// Quantitative error detection: the per-column z-score rule plus a
/// compiled isolation forest over the numeric featurizer.
pub struct QuantitativeDetector {
    pub sigma: f64,
    pub forest_params: ForestParams,
}

impl DetectorGenerator for QuantitativeDetector {
    fn name(&self) -> &str {
        "quantitative"
    }

    fn generate(&self, train: &Table, seed: u64) -> Result<Vec<Predicate>, DetectError> {
        if train.is_empty() {
            return Err(DetectError::EmptyTable);
        }
        let label_idx = train.schema.label_index();
        let mut z_columns = Vec::new();
        for (index, col) in train.schema.columns.iter().enumerate() {
            if col.ty != ColumnType::Numeric || Some(index) == label_idx {
                continue;
            }
            let nums: Vec<f64> = train
                .column_values(index)
                .filter_map(|v| v.as_number())
                .collect();
            if nums.is_empty() {
                continue;
            }
            let mean = nums.iter().sum::<f64>() / nums.len() as f64;
            let var = nums.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nums.len() as f64;
            z_columns.push(ZScoreColumn {
                column: col.name.clone(),
                index,
                mean,
                stddev: var.sqrt(),
            });
        }
        if z_columns.is_empty() {
            return Ok(Vec::new());
        }
        let mut out = vec![Predicate::new(
            "zscore".to_string(),
            PredicateKind::DerivedRule,
            PredicateImpl::ZScore {
                sigma: self.sigma,
                columns: z_columns,
            },
        )];

        let featurizer = NumericFeaturizer::fit(train);
        if featurizer.width() > 0 && train.len() >= 2 {
            let points: Vec<_> = train
                .records
                .iter()
                .map(|r| featurizer.transform(r))
                .collect();
            let forest = IsoForest::fit(&points, &IsoParams::from(self.forest_params), seed)?;
            out.push(Predicate::new(
                "iso_numeric".to_string(),
                PredicateKind::DerivedRule,
                PredicateImpl::IsoNumeric { forest, featurizer },
            ));
        }
        Ok(out)
    }
}

/// Word-embedding detector: trains skip-gram embeddings on train, fits an
/// isolation forest in the embedded space and compiles it to a predicate.
pub struct EmbeddingDetector {
    pub embedding_params: EmbeddingParams,
    pub forest_params: ForestParams,
}

impl DetectorGenerator for EmbeddingDetector {
    fn name(&self) -> &str {
        "embedding"
    }

    fn generate(&self, train: &Table, seed: u64) -> Result<Vec<Predicate>, DetectError> {
        if train.is_empty() {
            return Err(DetectError::EmptyTable);
        }
        let model = train_embeddings(train, &self.embedding_params, seed)?;
        let points: Vec<_> = train.records.iter().map(|r| model.embed_record(r)).collect();
        if points.len() < 2 || points[0].is_empty() {
            return Ok(Vec::new());
        }
        let forest = IsoForest::fit(
            &points,
            &IsoParams::from(self.forest_params),
            seed.wrapping_add(1),
        )?;
        Ok(vec![Predicate::new(
            "iso_embedding".to_string(),
            PredicateKind::DerivedRule,
            PredicateImpl::IsoEmbedding { forest, model },
        )])
    }
}

/// The pre-populated detector library for a config.
pub fn default_library(cfg: &crate::config::Config) -> Vec<Box<dyn DetectorGenerator>> {
    let mut lib: Vec<Box<dyn DetectorGenerator>> = Vec::new();
    let d: &DetectorConfig = &cfg.detectors;
    if d.missing {
        lib.push(Box::new(MissingDetector {
            sentinels: d.missing_sentinels.clone(),
        }));
    }
    if d.types {
        lib.push(Box::new(TypeDetector));
    }
    if d.quantitative {
        lib.push(Box::new(QuantitativeDetector {
            sigma: d.z_score_sigma,
            forest_params: cfg.forest,
        }));
    }
    if d.embedding {
        lib.push(Box::new(EmbeddingDetector {
            embedding_params: cfg.embedding,
            forest_params: cfg.forest,
        }));
    }
    lib
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredicateReport {
    pub id: String,
    pub kind: PredicateKind,
    pub train_hits: usize,
    /// Up to 10 violating train row ids.
    pub sample_rows: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectReport {
    pub predicates: Vec<PredicateReport>,
}

/// Run every generator in library order. Ids are stable and the result is
/// deterministic given (table, seed).
pub fn generate_all(
    library: &[Box<dyn DetectorGenerator>],
    train: &Table,
    seed: u64,
) -> Result<(Vec<Predicate>, DetectReport), DetectError> {
    let mut predicates = Vec::new();
    for gen in library {
        predicates.extend(gen.generate(train, seed)?);
    }
    let report = DetectReport {
        predicates: predicates
            .iter()
            .map(|p| {
                let mut train_hits = 0;
                let mut sample_rows = Vec::new();
                for rec in &train.records {
                    if !p.evaluate(rec).is_empty() {
                        train_hits += 1;
                        if sample_rows.len() < 10 {
                            sample_rows.push(rec.row_id);
                        }
                    }
                }
                PredicateReport {
                    id: p.id.clone(),
                    kind: p.kind,
                    train_hits,
                    sample_rows,
                }
            })
            .collect(),
    };
    Ok((predicates, report))
}

/// Evaluate every predicate on a record, unioning implicated attributes.
pub fn union_hits(predicates: &[Predicate], record: &Record) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for p in predicates {
        out.extend(p.evaluate(record));
    }
    out
}

/// Restricts check_type_signature to one column (helper for tests).
pub fn type_violations(record: &Record, schema: &Schema) -> BTreeSet<String> {
    check_type_signature(record, schema)
}
