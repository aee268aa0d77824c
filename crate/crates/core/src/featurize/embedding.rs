//! Skip-gram word embeddings over record attribute values.
//!
//! Each record is a document and each (column, value) token is a word;
//! every ordered pair of distinct tokens within a record is a training
//! pair. Numeric values are bucketed by train quartiles to keep the
//! vocabulary finite. Training is single-threaded and deterministic
//! under the seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EmbeddingParams;
use crate::table::{ColumnType, Record, Table, Value};

use super::{FeatureVector, Featurizer};

const MAGIC: &[u8; 8] = b"BCEMBED1";
const RARE_TOKEN: &str = "<rare>";
const NONNUM_TOKEN: &str = "<nonnum>";
const MISSING_TOKEN: &str = "<missing>";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("training table is empty")]
    EmptyTable,
    #[error("no eligible columns for embedding")]
    NoEligibleColumns,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an embedding model file (bad magic bytes)")]
    BadMagic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum EmbedKind {
    /// Categorical/Text/Date/Address: the value string is the token.
    Token,
    /// Numeric: quartile bucket id is the token.
    Bucketed { q1: f64, q2: f64, q3: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbedColumn {
    index: usize,
    name: String,
    kind: EmbedKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingModel {
    dim: usize,
    columns: Vec<EmbedColumn>,
    /// Token key "column\x1ftoken" to row index in `vectors`.
    vocab: BTreeMap<String, usize>,
    vectors: Vec<Vec<f32>>,
    /// Average skip-gram loss per training epoch.
    pub epoch_losses: Vec<f64>,
}

fn token_key(column: &str, token: &str) -> String {
    format!("{column}\u{1f}{token}")
}

fn quartiles(sorted: &[f64]) -> (f64, f64, f64) {
    let q = |p: f64| -> f64 {
        if sorted.is_empty() {
            return 0.0;
        }
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (q(0.25), q(0.5), q(0.75))
}

impl EmbedColumn {
    fn raw_token(&self, value: &Value) -> String {
        match &self.kind {
            EmbedKind::Token => match value {
                Value::Missing => MISSING_TOKEN.to_string(),
                v => v.to_csv_field(),
            },
            EmbedKind::Bucketed { q1, q2, q3 } => match value {
                Value::Missing => MISSING_TOKEN.to_string(),
                Value::Number(n) => {
                    let b = if *n <= *q1 {
                        0
                    } else if *n <= *q2 {
                        1
                    } else if *n <= *q3 {
                        2
                    } else {
                        3
                    };
                    format!("q{b}")
                }
                Value::Text(_) => NONNUM_TOKEN.to_string(),
            },
        }
    }
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// The trained vector for a (column, value) token; zero if unseen.
    pub fn token_vector(&self, column_pos: usize, value: &Value) -> Vec<f32> {
        let col = &self.columns[column_pos];
        let token = col.raw_token(value);
        match self.vocab.get(&token_key(&col.name, &token)) {
            Some(&idx) => self.vectors[idx].clone(),
            None => vec![0.0; self.dim],
        }
    }

    pub fn vector_for(&self, column: &str, token: &str) -> Option<&[f32]> {
        self.vocab
            .get(&token_key(column, token))
            .map(|&i| self.vectors[i].as_slice())
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Concatenation of per-attribute token vectors in schema column order.
    pub fn embed_record(&self, record: &Record) -> FeatureVector {
        let mut values = Vec::with_capacity(self.columns.len() * self.dim);
        let mut attribution = Vec::with_capacity(values.capacity());
        for (pos, col) in self.columns.iter().enumerate() {
            let vec = self.token_vector(pos, &record.values[col.index]);
            for v in vec {
                values.push(v as f64);
            }
            for _ in 0..self.dim {
                attribution.push(col.name.clone());
            }
        }
        FeatureVector { values, attribution }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EmbeddingError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), EmbeddingError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        for col in &self.columns {
            write_str(w, &col.name)?;
            w.write_all(&(col.index as u32).to_le_bytes())?;
            match &col.kind {
                EmbedKind::Token => w.write_all(&[0u8])?,
                EmbedKind::Bucketed { q1, q2, q3 } => {
                    w.write_all(&[1u8])?;
                    for q in [q1, q2, q3] {
                        w.write_all(&q.to_le_bytes())?;
                    }
                }
            }
        }
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        for (key, idx) in &self.vocab {
            write_str(w, key)?;
            w.write_all(&(*idx as u32).to_le_bytes())?;
        }
        for row in &self.vectors {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EmbeddingError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EmbeddingError::BadMagic);
        }
        let dim = read_u32(r)? as usize;
        let n_cols = read_u32(r)? as usize;
        let mut columns = Vec::with_capacity(n_cols);
        for _ in 0..n_cols {
            let name = read_str(r)?;
            let index = read_u32(r)? as usize;
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag)?;
            let kind = match tag[0] {
                0 => EmbedKind::Token,
                _ => {
                    let mut qs = [0f64; 3];
                    for q in &mut qs {
                        let mut buf = [0u8; 8];
                        r.read_exact(&mut buf)?;
                        *q = f64::from_le_bytes(buf);
                    }
                    EmbedKind::Bucketed {
                        q1: qs[0],
                        q2: qs[1],
                        q3: qs[2],
                    }
                }
            };
            columns.push(EmbedColumn { index, name, kind });
        }
        let vocab_len = read_u32(r)? as usize;
        let mut vocab = BTreeMap::new();
        for _ in 0..vocab_len {
            let key = read_str(r)?;
            let idx = read_u32(r)? as usize;
            vocab.insert(key, idx);
        }
        let mut vectors = vec![vec![0f32; dim]; vocab_len];
        for row in &mut vectors {
            for v in row.iter_mut() {
                let mut buf = [0u8; 4];
                r.read_exact(&mut buf)?;
                *v = f32::from_le_bytes(buf);
            }
        }
        Ok(Self {
            dim,
            columns,
            vocab,
            vectors,
            epoch_losses: Vec::new(),
        })
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, EmbeddingError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf)
        .map_err(|_| EmbeddingError::Io(std::io::Error::other("invalid utf-8 in model file")))
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Train skip-gram embeddings with negative sampling over the eligible
/// columns (everything but the label). Tokens rarer than `min_count` are
/// collapsed into a per-column rare token.
pub fn train_embeddings(
    train: &Table,
    params: &EmbeddingParams,
    seed: u64,
) -> Result<EmbeddingModel, EmbeddingError> {
    if train.is_empty() {
        return Err(EmbeddingError::EmptyTable);
    }
    let label_idx = train.schema.label_index();
    let mut columns = Vec::new();
    for (idx, col) in train.schema.columns.iter().enumerate() {
        if Some(idx) == label_idx {
            continue;
        }
        let kind = if col.ty == ColumnType::Numeric {
            let mut nums: Vec<f64> = train
                .column_values(idx)
                .filter_map(|v| v.as_number())
                .collect();
            nums.sort_by(f64::total_cmp);
            let (q1, q2, q3) = quartiles(&nums);
            EmbedKind::Bucketed { q1, q2, q3 }
        } else {
            EmbedKind::Token
        };
        columns.push(EmbedColumn {
            index: idx,
            name: col.name.clone(),
            kind,
        });
    }
    if columns.is_empty() {
        return Err(EmbeddingError::NoEligibleColumns);
    }

    // First pass: raw token counts per column.
    let mut counts: HashMap<String, usize> = HashMap::new();
    for rec in &train.records {
        for col in &columns {
            let key = token_key(&col.name, &col.raw_token(&rec.values[col.index]));
            *counts.entry(key).or_insert(0) += 1;
        }
    }

    // Vocabulary: frequent tokens keep their identity, the rest collapse
    // into a per-column rare token. BTreeSet gives a stable index order.
    let mut kept: BTreeSet<String> = BTreeSet::new();
    for col in &columns {
        for rec in &train.records {
            let raw = col.raw_token(&rec.values[col.index]);
            let key = token_key(&col.name, &raw);
            if counts[&key] >= params.min_count {
                kept.insert(key);
            } else {
                kept.insert(token_key(&col.name, RARE_TOKEN));
            }
        }
    }
    let vocab: BTreeMap<String, usize> = kept
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    let vocab_len = vocab.len();

    // Token index per (record, eligible column) after rare collapsing.
    let mut docs: Vec<Vec<usize>> = Vec::with_capacity(train.len());
    let mut freq = vec![0usize; vocab_len];
    for rec in &train.records {
        let mut doc = Vec::with_capacity(columns.len());
        for col in &columns {
            let raw = col.raw_token(&rec.values[col.index]);
            let key = token_key(&col.name, &raw);
            let idx = match vocab.get(&key) {
                Some(&i) => i,
                None => vocab[&token_key(&col.name, RARE_TOKEN)],
            };
            freq[idx] += 1;
            doc.push(idx);
        }
        docs.push(doc);
    }

    // Unigram^0.75 negative-sampling distribution as a cumulative table.
    let mut cumulative = Vec::with_capacity(vocab_len);
    let mut acc = 0.0f64;
    for f in &freq {
        acc += (*f as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total = acc;
    let sample_negative = |rng: &mut ChaCha8Rng| -> usize {
        let x = rng.gen::<f64>() * total;
        cumulative.partition_point(|&c| c < x).min(vocab_len - 1)
    };

    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w_in: Vec<Vec<f32>> = (0..vocab_len)
        .map(|_| {
            (0..dim)
                .map(|_| (rng.gen::<f32>() - 0.5) / dim as f32)
                .collect()
        })
        .collect();
    let mut w_out: Vec<Vec<f32>> = vec![vec![0.0; dim]; vocab_len];

    let mut epoch_losses = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let progress = epoch as f32 / params.epochs.max(1) as f32;
        let lr = (params.learning_rate as f32) * (1.0 - progress).max(0.1);
        let mut loss_sum = 0.0f64;
        let mut pair_count = 0u64;
        for doc in &docs {
            for (ci, &center) in doc.iter().enumerate() {
                for (oi, &context) in doc.iter().enumerate() {
                    if ci == oi {
                        continue;
                    }
                    let mut grad_in = vec![0.0f32; dim];
                    // positive pair
                    let dot: f32 = w_in[center]
                        .iter()
                        .zip(&w_out[context])
                        .map(|(a, b)| a * b)
                        .sum();
                    let f = sigmoid(dot);
                    loss_sum += -(f.max(1e-7) as f64).ln();
                    let g = (1.0 - f) * lr;
                    for d in 0..dim {
                        grad_in[d] += g * w_out[context][d];
                        w_out[context][d] += g * w_in[center][d];
                    }
                    // negative samples
                    for _ in 0..params.negatives {
                        let neg = sample_negative(&mut rng);
                        if neg == context {
                            continue;
                        }
                        let dot: f32 = w_in[center]
                            .iter()
                            .zip(&w_out[neg])
                            .map(|(a, b)| a * b)
                            .sum();
                        let f = sigmoid(dot);
                        loss_sum += -((1.0 - f).max(1e-7) as f64).ln();
                        let g = -f * lr;
                        for d in 0..dim {
                            grad_in[d] += g * w_out[neg][d];
                            w_out[neg][d] += g * w_in[center][d];
                        }
                    }
                    for d in 0..dim {
                        w_in[center][d] += grad_in[d];
                    }
                    pair_count += 1;
                }
            }
        }
        epoch_losses.push(loss_sum / pair_count.max(1) as f64);
    }

    Ok(EmbeddingModel {
        dim,
        columns,
        vocab,
        vectors: w_in,
        epoch_losses,
    })
}

/// [`Featurizer`] view over a trained embedding model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingFeaturizer {
    pub model: EmbeddingModel,
}

impl Featurizer for EmbeddingFeaturizer {
    fn name(&self) -> &'static str {
        "embedding"
    }

    fn transform(&self, record: &Record) -> FeatureVector {
        self.model.embed_record(record)
    }
}
