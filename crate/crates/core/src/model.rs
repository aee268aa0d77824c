//! The black-box training interface, the built-in random-forest
//! reference classifier and the accuracy metrics.
//!
//! Training is a pluggable procedure: anything that can turn a labeled
//! table into a deterministic classifier fits. The built-in forest does
//! its own featurization (numeric pass-through, one-hot categories,
//! bag-of-words text) so callers hand it records, never vectors.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ClassifierParams;
use crate::table::{ColumnType, Record, Table, Value};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training needs at least 2 labeled rows, got {0}")]
    TooFewRows(usize),
    #[error("training needs at least 2 distinct labels")]
    SingleLabel,
    #[error("no usable features in the training table")]
    ZeroFeatures,
    #[error("weight vector must be non-negative with at least one positive entry")]
    BadWeights,
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("model payload corrupt: {0}")]
    Corrupt(String),
}

/// A trained classifier: pure, total over schema-conforming records.
pub trait Classifier: Send + Sync {
    fn predict(&self, record: &Record) -> Value;
    /// The finite label set observed in train, in train row order.
    fn labels(&self) -> &[Value];
}

/// User-suppliable training procedure; deterministic under seed.
pub trait TrainProcedure: Send + Sync {
    fn train(&self, train: &Table, seed: u64) -> Result<Box<dyn Classifier>, ModelError>;
}

/// Non-negative weighting over test records, keyed by row id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: BTreeMap<u64, f64>,
}

impl WeightVector {
    pub fn uniform(test: &Table) -> Self {
        let n = test.len() as f64;
        Self {
            weights: test.records.iter().map(|r| (r.row_id, 1.0 / n)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let any_positive = self.weights.values().any(|w| *w > 0.0);
        let none_negative = self.weights.values().all(|w| *w >= 0.0);
        if any_positive && none_negative {
            Ok(())
        } else {
            Err(ModelError::BadWeights)
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Record-to-vector encoding learned from train: Numeric pass-through
/// with the train mean for holes, one-hot categories, top-K bag-of-words
/// counts for Text.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    columns: Vec<FeatureColumn>,
    width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum FeatureColumn {
    Numeric { index: usize, mean: f64 },
    OneHot { index: usize, vocab: Vec<String> },
    BagOfWords { index: usize, tokens: Vec<String> },
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
}

impl FeatureSpace {
    pub fn fit(train: &Table, bag_of_words_k: usize) -> Self {
        let label_idx = train.schema.label_index();
        let mut columns = Vec::new();
        for (idx, col) in train.schema.columns.iter().enumerate() {
            if Some(idx) == label_idx {
                continue;
            }
            match col.ty {
                ColumnType::Numeric => {
                    let nums: Vec<f64> = train
                        .column_values(idx)
                        .filter_map(|v| v.as_number())
                        .collect();
                    let mean = if nums.is_empty() {
                        0.0
                    } else {
                        nums.iter().sum::<f64>() / nums.len() as f64
                    };
                    columns.push(FeatureColumn::Numeric { index: idx, mean });
                }
                ColumnType::Categorical | ColumnType::Date | ColumnType::Address => {
                    let vocab: std::collections::BTreeSet<String> = train
                        .column_values(idx)
                        .filter(|v| !v.is_missing())
                        .map(|v| v.to_csv_field())
                        .collect();
                    if !vocab.is_empty() {
                        columns.push(FeatureColumn::OneHot {
                            index: idx,
                            vocab: vocab.into_iter().collect(),
                        });
                    }
                }
                ColumnType::Text => {
                    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                    for v in train.column_values(idx) {
                        if let Value::Text(s) = v {
                            for tok in tokenize(s) {
                                *counts.entry(tok).or_insert(0) += 1;
                            }
                        }
                    }
                    // top-K by count; ties resolve alphabetically via the
                    // BTreeMap iteration order under a stable sort
                    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
                    ranked.sort_by(|a, b| b.1.cmp(&a.1));
                    let tokens: Vec<String> = ranked
                        .into_iter()
                        .take(bag_of_words_k)
                        .map(|(t, _)| t)
                        .collect();
                    if !tokens.is_empty() {
                        columns.push(FeatureColumn::BagOfWords { index: idx, tokens });
                    }
                }
            }
        }
        let width = columns
            .iter()
            .map(|c| match c {
                FeatureColumn::Numeric { .. } => 1,
                FeatureColumn::OneHot { vocab, .. } => vocab.len(),
                FeatureColumn::BagOfWords { tokens, .. } => tokens.len(),
            })
            .sum();
        Self { columns, width }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode(&self, record: &Record) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        for col in &self.columns {
            match col {
                FeatureColumn::Numeric { index, mean } => {
                    out.push(record.values[*index].as_number().unwrap_or(*mean));
                }
                FeatureColumn::OneHot { index, vocab } => {
                    let raw = record.values[*index].to_csv_field();
                    for entry in vocab {
                        out.push(if *entry == raw { 1.0 } else { 0.0 });
                    }
                }
                FeatureColumn::BagOfWords { index, tokens } => {
                    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
                    if let Value::Text(s) = &record.values[*index] {
                        for tok in tokenize(s) {
                            if let Some(slot) = tokens.iter().find(|t| **t == tok) {
                                *counts.entry(slot.as_str()).or_insert(0.0) += 1.0;
                            }
                        }
                    }
                    for t in tokens {
                        out.push(counts.get(t.as_str()).copied().unwrap_or(0.0));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        label: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn predict(&self, x: &[f64]) -> usize {
        match self {
            TreeNode::Leaf { label } => *label,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

/// The built-in reference classifier: a bagged forest of depth-limited
/// gini trees over the [`FeatureSpace`] encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ClassifierParams,
    space: FeatureSpace,
    /// Distinct train labels in first-occurrence order; leaf/vote ties
    /// break toward the lower index.
    labels: Vec<Value>,
    trees: Vec<TreeNode>,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|c| {
            let p = *c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let best = counts.iter().max().copied().unwrap_or(0);
    counts.iter().position(|c| *c == best).unwrap_or(0)
}

struct TreeBuilder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [usize],
    n_labels: usize,
    max_depth: usize,
    min_leaf: usize,
    n_feature_choices: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let mut counts = vec![0usize; self.n_labels];
        for &r in rows {
            counts[self.ys[r]] += 1;
        }
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        if pure || depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return TreeNode::Leaf {
                label: majority(&counts),
            };
        }
        let n_features = self.xs[0].len();
        let mut feats: Vec<usize> = (0..n_features).collect();
        feats.shuffle(rng);
        feats.truncate(self.n_feature_choices.min(n_features));
        feats.sort_unstable(); // deterministic evaluation order

        let parent_impurity = gini(&counts, rows.len());
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        for &f in &feats {
            let mut ordered: Vec<usize> = rows.to_vec();
            ordered.sort_by(|a, b| self.xs[*a][f].total_cmp(&self.xs[*b][f]));
            let mut left_counts = vec![0usize; self.n_labels];
            let mut right_counts = counts.clone();
            for i in 0..ordered.len() - 1 {
                let r = ordered[i];
                left_counts[self.ys[r]] += 1;
                right_counts[self.ys[r]] -= 1;
                let a = self.xs[r][f];
                let b = self.xs[ordered[i + 1]][f];
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let nr = ordered.len() - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let w = nl as f64 / ordered.len() as f64;
                let child = w * gini(&left_counts, nl) + (1.0 - w) * gini(&right_counts, nr);
                let gain = parent_impurity - child;
                let threshold = 0.5 * (a + b);
                let better = match best {
                    None => gain > 1e-12,
                    Some((g, bf, bt)) => {
                        gain > g + 1e-12
                            || ((gain - g).abs() <= 1e-12 && (f, threshold) < (bf, bt))
                    }
                };
                if better {
                    best = Some((gain, f, threshold));
                }
            }
        }
        match best {
            None => TreeNode::Leaf {
                label: majority(&counts),
            },
            Some((_, f, threshold)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&r| self.xs[r][f] <= threshold);
                TreeNode::Split {
                    feature: f,
                    threshold,
                    left: Box::new(self.build(&left_rows, depth + 1, rng)),
                    right: Box::new(self.build(&right_rows, depth + 1, rng)),
                }
            }
        }
    }
}

/// Train the built-in forest. Deterministic under (train content, seed,
/// hyperparams).
pub fn train_reference(
    train: &Table,
    seed: u64,
    params: &ClassifierParams,
) -> Result<RandomForest, ModelError> {
    let labeled: Vec<&Record> = train.records.iter().filter(|r| r.label.is_some()).collect();
    if labeled.len() < 2 {
        return Err(ModelError::TooFewRows(labeled.len()));
    }
    let labels = train.label_order();
    if labels.len() < 2 {
        return Err(ModelError::SingleLabel);
    }
    let space = FeatureSpace::fit(train, params.bag_of_words_k);
    if space.width() == 0 {
        return Err(ModelError::ZeroFeatures);
    }
    let label_index: BTreeMap<&Value, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let xs: Vec<Vec<f64>> = labeled.iter().map(|r| space.encode(r)).collect();
    let ys: Vec<usize> = labeled
        .iter()
        .map(|r| label_index[r.label.as_ref().unwrap()])
        .collect();
    let n_features = space.width();
    let builder = TreeBuilder {
        xs: &xs,
        ys: &ys,
        n_labels: labels.len(),
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        n_feature_choices: (n_features as f64).sqrt().ceil() as usize,
    };
    let n = xs.len();
    let trees: Vec<TreeNode> = (0..params.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            builder.build(&rows, 0, &mut rng)
        })
        .collect();
    Ok(RandomForest {
        params: params.clone(),
        space,
        labels,
        trees,
    })
}

impl Classifier for RandomForest {
    fn predict(&self, record: &Record) -> Value {
        let x = self.space.encode(record);
        let mut votes = vec![0usize; self.labels.len()];
        for tree in &self.trees {
            votes[tree.predict(&x)] += 1;
        }
        self.labels[majority(&votes)].clone()
    }

    fn labels(&self) -> &[Value] {
        &self.labels
    }
}

/// [`TrainProcedure`] wrapper around [`train_reference`].
#[derive(Debug, Clone)]
pub struct ReferenceTrainer {
    pub params: ClassifierParams,
}

impl TrainProcedure for ReferenceTrainer {
    fn train(&self, train: &Table, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        Ok(Box::new(train_reference(train, seed, &self.params)?))
    }
}

/// Fraction of test records whose prediction equals the stored label.
pub fn accuracy(classifier: &dyn Classifier, test: &Table) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let correct = test
        .records
        .iter()
        .filter(|r| r.label.as_ref() == Some(&classifier.predict(r)))
        .count();
    correct as f64 / test.len() as f64
}

/// Weighted accuracy over materialized predictions:
/// sum of weights on correct records divided by the total weight.
pub fn weighted_accuracy(
    predictions: &BTreeMap<u64, Value>,
    test: &Table,
    w: &WeightVector,
) -> f64 {
    let mut correct = 0.0;
    let mut total = 0.0;
    for rec in &test.records {
        let weight = w.weights.get(&rec.row_id).copied().unwrap_or(0.0);
        total += weight;
        if predictions.get(&rec.row_id) == rec.label.as_ref() {
            correct += weight;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        correct / total
    }
}

const MODEL_MAGIC: &[u8; 8] = b"BCMODEL\0";
const MODEL_VERSION: u8 = 1;

/// Write the forest as a versioned binary file: magic, version byte,
/// then the canonical JSON payload.
pub fn save_model(model: &RandomForest, path: &Path) -> Result<(), ModelError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(MODEL_MAGIC)?;
    f.write_all(&[MODEL_VERSION])?;
    let payload =
        serde_json::to_vec(model).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    f.write_all(&payload)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RandomForest, ModelError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|_| ModelError::BadMagic)?;
    if &magic != MODEL_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut version = [0u8; 1];
    f.read_exact(&mut version)
        .map_err(|_| ModelError::Corrupt("truncated header".into()))?;
    if version[0] != MODEL_VERSION {
        return Err(ModelError::VersionMismatch {
            found: version[0],
            expected: MODEL_VERSION,
        });
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    serde_json::from_slice(&payload).map_err(|e| ModelError::Corrupt(e.to_string()))
}
