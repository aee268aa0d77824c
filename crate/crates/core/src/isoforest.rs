//! Isolation forest anomaly scoring with attribute attribution.
//!
//! Trees are grown on without-replacement subsamples by picking a random
//! non-constant feature and a random split strictly between its min and
//! max, until single-point leaves or the height limit. A record's score
//! is `2^(-E[h]/c(psi))` where `h` is the path depth plus the standard
//! average-path adjustment at truncated leaves. Axis-aligned splits let
//! flagged records be attributed to the attributes of the most frequent
//! shallow split features along their paths.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::FeatureVector;

#[derive(Debug, Error)]
pub enum IsoError {
    #[error("need at least 2 points to fit, got {0}")]
    TooFewPoints(usize),
    #[error("feature vectors have inconsistent widths")]
    InconsistentWidths,
    #[error("point width {got} does not match training width {expected}")]
    WidthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsoNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<IsoNode>,
        right: Box<IsoNode>,
    },
    Leaf {
        /// Training sample count that reached this leaf.
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    pub root: IsoNode,
}

impl IsoTree {
    /// Path depth plus the average-path adjustment at the reached leaf.
    pub fn path_length(&self, point: &[f64]) -> f64 {
        let mut node = &self.root;
        let mut depth = 0usize;
        loop {
            match node {
                IsoNode::Leaf { count } => return depth as f64 + average_path_length(*count),
                IsoNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[*feature] < *threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }

    /// Split features encountered at depths 0 and 1 on the point's path.
    fn shallow_path_features(&self, point: &[f64]) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        let mut node = &self.root;
        for _ in 0..2 {
            match node {
                IsoNode::Leaf { .. } => break,
                IsoNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push(*feature);
                    node = if point[*feature] < *threshold { left } else { right };
                }
            }
        }
        out
    }
}

/// `c(n) = 2 H(n-1) - 2(n-1)/n`, the expected path length of an
/// unsuccessful BST search; 0 for n <= 1.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let harmonic: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * harmonic - 2.0 * (n - 1) as f64 / n as f64
}

/// `s = 2^(-avg_path / c_psi)`.
pub fn anomaly_score(avg_path: f64, c_psi: f64) -> f64 {
    2f64.powf(-avg_path / c_psi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyVerdict {
    pub score: f64,
    pub flagged: bool,
    pub implicated_attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IsoParams {
    pub n_trees: usize,
    /// Subsample size psi (capped at N during fit).
    pub subsample: usize,
    /// Fraction of training points the threshold flags.
    pub contamination: f64,
    /// Attributes implicated per flagged record.
    pub top_m: usize,
}

impl From<crate::config::ForestParams> for IsoParams {
    fn from(p: crate::config::ForestParams) -> Self {
        Self {
            n_trees: p.n_trees,
            subsample: p.subsample,
            contamination: p.contamination,
            top_m: p.top_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoForest {
    pub trees: Vec<IsoTree>,
    pub subsample: usize,
    pub height_limit: usize,
    /// Score threshold tau in (0,1); records scoring strictly above are flagged.
    pub threshold: f64,
    /// Feature index to attribute name.
    pub attribution: Vec<String>,
    pub top_m: usize,
    width: usize,
    /// True when no feature was splittable anywhere; such a forest flags nothing.
    degenerate: bool,
}

fn grow(
    points: &[Vec<f64>],
    indices: &mut [usize],
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
) -> IsoNode {
    let n = indices.len();
    if n <= 1 || depth >= height_limit {
        return IsoNode::Leaf { count: n };
    }
    let width = points[0].len();
    // non-constant features only: constant features have zero-width split
    // intervals and are never selected
    let mut candidates = Vec::new();
    for f in 0..width {
        let first = points[indices[0]][f];
        if indices.iter().any(|&i| points[i][f] != first) {
            candidates.push(f);
        }
    }
    if candidates.is_empty() {
        return IsoNode::Leaf { count: n };
    }
    let feature = candidates[rng.gen_range(0..candidates.len())];
    let min = indices
        .iter()
        .map(|&i| points[i][feature])
        .fold(f64::INFINITY, f64::min);
    let max = indices
        .iter()
        .map(|&i| points[i][feature])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut threshold = 0.5 * (min + max);
    for _ in 0..16 {
        let t = min + rng.gen::<f64>() * (max - min);
        if t > min && t < max {
            threshold = t;
            break;
        }
    }
    let split = itertools_partition(indices, |&i| points[i][feature] < threshold);
    let (left_idx, right_idx) = indices.split_at_mut(split);
    let left = grow(points, left_idx, depth + 1, height_limit, rng);
    let right = grow(points, right_idx, depth + 1, height_limit, rng);
    IsoNode::Internal {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Stable partition: elements satisfying the predicate first; returns the
/// split point.
fn itertools_partition<T: Copy, F: Fn(&T) -> bool>(slice: &mut [T], pred: F) -> usize {
    let mut buf: Vec<T> = Vec::with_capacity(slice.len());
    let mut split = 0;
    for &x in slice.iter() {
        if pred(&x) {
            buf.insert(split, x);
            split += 1;
        } else {
            buf.push(x);
        }
    }
    slice.copy_from_slice(&buf);
    split
}

impl IsoForest {
    /// Fit a forest. Deterministic under seed; each tree's RNG stream is
    /// derived as seed + tree index so concurrent growth would match
    /// sequential growth.
    pub fn fit(points: &[FeatureVector], params: &IsoParams, seed: u64) -> Result<Self, IsoError> {
        if points.len() < 2 {
            return Err(IsoError::TooFewPoints(points.len()));
        }
        let width = points[0].len();
        if points.iter().any(|p| p.len() != width) {
            return Err(IsoError::InconsistentWidths);
        }
        let attribution = points[0].attribution.clone();
        let raw: Vec<Vec<f64>> = points.iter().map(|p| p.values.clone()).collect();
        Self::fit_raw(&raw, attribution, params, seed)
    }

    pub fn fit_raw(
        points: &[Vec<f64>],
        attribution: Vec<String>,
        params: &IsoParams,
        seed: u64,
    ) -> Result<Self, IsoError> {
        let n = points.len();
        if n < 2 {
            return Err(IsoError::TooFewPoints(n));
        }
        let width = points[0].len();
        let psi = params.subsample.min(n).max(2);
        let height_limit = (psi as f64).log2().ceil() as usize;

        let degenerate = (0..width).all(|f| {
            let first = points[0][f];
            points.iter().all(|p| p[f] == first)
        });

        let mut trees = Vec::with_capacity(params.n_trees);
        for t in 0..params.n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut indices: Vec<usize> = if psi < n {
                sample(&mut rng, n, psi).into_vec()
            } else {
                (0..n).collect()
            };
            let root = grow(points, &mut indices, 0, height_limit, &mut rng);
            trees.push(IsoTree { root });
        }

        let mut forest = Self {
            trees,
            subsample: psi,
            height_limit,
            threshold: 0.5,
            attribution,
            top_m: params.top_m,
            width,
            degenerate,
        };

        // tau: flag roughly the configured contamination fraction of the
        // training points (ties at tau are not flagged)
        let mut scores: Vec<f64> = points.iter().map(|p| forest.score_raw(p)).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let k = ((params.contamination * n as f64).ceil() as usize).clamp(1, n - 1);
        forest.threshold = scores[k];
        Ok(forest)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn score_raw(&self, point: &[f64]) -> f64 {
        let avg: f64 = self
            .trees
            .iter()
            .map(|t| t.path_length(point))
            .sum::<f64>()
            / self.trees.len() as f64;
        anomaly_score(avg, average_path_length(self.subsample))
    }

    pub fn score(&self, point: &FeatureVector) -> Result<f64, IsoError> {
        if point.len() != self.width {
            return Err(IsoError::WidthMismatch {
                expected: self.width,
                got: point.len(),
            });
        }
        Ok(self.score_raw(&point.values))
    }

    /// Score a point and, when flagged, attribute it to the top-m most
    /// frequent split features at depths 0-1 along its root-to-leaf paths.
    pub fn verdict(&self, point: &FeatureVector) -> Result<AnomalyVerdict, IsoError> {
        let score = self.score(point)?;
        let flagged = !self.degenerate && score > self.threshold;
        let implicated_attributes = if flagged {
            self.implicate(&point.values)
        } else {
            BTreeSet::new()
        };
        Ok(AnomalyVerdict {
            score,
            flagged,
            implicated_attributes,
        })
    }

    fn implicate(&self, point: &[f64]) -> BTreeSet<String> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for tree in &self.trees {
            for f in tree.shallow_path_features(point) {
                *counts.entry(f).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(usize, usize)> = counts.into_iter().collect();
        // ties break by lower feature index (stable after sort by count desc)
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
            .into_iter()
            .take(self.top_m)
            .map(|(f, _)| self.attribution[f].clone())
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}
