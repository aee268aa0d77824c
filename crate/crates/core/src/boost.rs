//! Boosting-based selection of conditional repairs.
//!
//! Each candidate couples one conditional repair (or the untouched base)
//! with a classifier trained under it. Selection runs an AdaBoost loop
//! over the candidates against the clean test labels and compiles the
//! chosen rounds into a deployable voting ensemble. The selection loop
//! never invokes a classifier: test predictions are materialized once
//! per candidate and indexed by label, so each round is a weighted sum
//! over precomputed correctness masks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ClassifierParams, RepairConfig};
use crate::detect::Predicate;
use crate::model::{
    train_reference, Classifier, ModelError, RandomForest, WeightVector,
};
use crate::repair::{
    self, apply_data_repairs, apply_single_data_repair, ConditionalRepair, RepairError,
    Stage,
};
use crate::table::{ColumnType, Record, Table, Value};

const EPSILON_CLAMP: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("boost_select needs exactly 2 labels, got {0}; use one_vs_rest")]
    NotBinary(usize),
    #[error("train has no labels")]
    NoLabels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Repair(#[from] RepairError),
    #[error("ensemble io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an ensemble file (bad magic)")]
    BadMagic,
    #[error("unsupported ensemble version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },
    #[error("ensemble payload corrupt: {0}")]
    Corrupt(String),
}

/// One repair-classifier pairing with its materialized test predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    /// None for the base candidate.
    pub repair: Option<ConditionalRepair>,
    pub classifier: RandomForest,
    /// row_id -> predicted label, covering every test row.
    pub predictions: BTreeMap<u64, Value>,
    /// Exact inverse of `predictions`: label -> rows predicted as it.
    pub label_index: BTreeMap<Value, BTreeSet<u64>>,
}

impl Candidate {
    fn from_predictions(
        id: usize,
        repair: Option<ConditionalRepair>,
        classifier: RandomForest,
        predictions: BTreeMap<u64, Value>,
    ) -> Self {
        let mut label_index: BTreeMap<Value, BTreeSet<u64>> = BTreeMap::new();
        for (row, label) in &predictions {
            label_index.entry(label.clone()).or_default().insert(*row);
        }
        Self {
            id,
            repair,
            classifier,
            predictions,
            label_index,
        }
    }
}

/// Predict under a candidate's own conditional repair: data repairs
/// rewrite a copy of the record first (a discarded test record falls
/// back to the original, deleting test data is disallowed); prediction
/// repairs override the classifier output when their predicate matches
/// the original record.
pub fn candidate_predict(
    repair: Option<&ConditionalRepair>,
    classifier: &RandomForest,
    record: &Record,
) -> Value {
    match repair {
        None => classifier.predict(record),
        Some(cr) => match cr.stage {
            Stage::Data => match apply_single_data_repair(cr, record) {
                Some(cleaned) => classifier.predict(&cleaned),
                None => classifier.predict(record),
            },
            Stage::Prediction => {
                if cr.matches_original(record) {
                    cr.override_label().cloned().unwrap_or_else(|| classifier.predict(record))
                } else {
                    classifier.predict(record)
                }
            }
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub predicate_id: String,
    pub repair: String,
    pub column: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BuildReport {
    pub candidates: usize,
    pub skipped: Vec<SkippedCandidate>,
}

struct CandidateSpec {
    seed_offset: u64,
    predicate_id: String,
    repair: ConditionalRepair,
}

/// Enumerate and train the candidate set: candidate 0 is the base
/// classifier on untouched train; every applicable (predicate, column,
/// repair) triple contributes one more. Candidates whose repaired train
/// collapses (empty, single-label) are skipped with a report entry.
pub fn build_candidates(
    predicates: &[Predicate],
    repairs: &RepairConfig,
    train: &Table,
    test: &Table,
    params: &ClassifierParams,
    seed: u64,
    threads: usize,
) -> Result<(Vec<Candidate>, BuildReport), BoostError> {
    let base = train_reference(train, seed, params)?;
    let mut report = BuildReport::default();
    let mut specs: Vec<CandidateSpec> = Vec::new();
    let mut next_offset: u64 = 1;
    let mut push = |specs: &mut Vec<CandidateSpec>, p: &Predicate, repair| {
        specs.push(CandidateSpec {
            seed_offset: next_offset,
            predicate_id: p.id.clone(),
            repair,
        });
        next_offset += 1;
    };
    for p in predicates {
        for column in p.possible_columns() {
            let col_ty = train.schema.column_type(&column);
            let numeric = col_ty == Some(ColumnType::Numeric);
            let mut try_impute = |built: Result<repair::RepairFunction, RepairError>,
                                  name: &str,
                                  specs: &mut Vec<CandidateSpec>,
                                  report: &mut BuildReport| {
                match built {
                    Ok(f) => match ConditionalRepair::new(p.clone(), f) {
                        Ok(cr) => push(specs, p, cr),
                        Err(e) => report.skipped.push(SkippedCandidate {
                            predicate_id: p.id.clone(),
                            repair: name.into(),
                            column: Some(column.clone()),
                            reason: e.to_string(),
                        }),
                    },
                    Err(e) => report.skipped.push(SkippedCandidate {
                        predicate_id: p.id.clone(),
                        repair: name.into(),
                        column: Some(column.clone()),
                        reason: e.to_string(),
                    }),
                }
            };
            if repairs.impute_mean && numeric {
                try_impute(
                    repair::impute_mean(train, p, &column),
                    "impute_mean",
                    &mut specs,
                    &mut report,
                );
            }
            if repairs.impute_median && numeric {
                try_impute(
                    repair::impute_median(train, p, &column),
                    "impute_median",
                    &mut specs,
                    &mut report,
                );
            }
            if repairs.impute_mode {
                try_impute(
                    repair::impute_mode(train, p, &column),
                    "impute_mode",
                    &mut specs,
                    &mut report,
                );
            }
        }
        if repairs.discard {
            let cr = ConditionalRepair::new(p.clone(), repair::discard_record())?;
            push(&mut specs, p, cr);
        }
        if repairs.default_prediction {
            match repair::default_prediction(train) {
                Ok(f) => {
                    let cr = ConditionalRepair::new(p.clone(), f)?;
                    push(&mut specs, p, cr);
                }
                Err(e) => report.skipped.push(SkippedCandidate {
                    predicate_id: p.id.clone(),
                    repair: "default_prediction".into(),
                    column: None,
                    reason: e.to_string(),
                }),
            }
        }
    }

    // train concurrently; per-spec seed streams keep results equal to
    // sequential execution
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| BoostError::Corrupt(e.to_string()))?;
    let built: Vec<Result<Candidate, SkippedCandidate>> = pool.install(|| {
        use rayon::prelude::*;
        specs
            .par_iter()
            .map(|spec| build_one(spec, &base, train, test, params, seed))
            .collect()
    });

    let base_predictions: BTreeMap<u64, Value> = test
        .records
        .iter()
        .map(|r| (r.row_id, base.predict(r)))
        .collect();
    let mut candidates = vec![Candidate::from_predictions(
        0,
        None,
        base.clone(),
        base_predictions,
    )];
    for item in built {
        match item {
            Ok(mut c) => {
                c.id = candidates.len();
                candidates.push(c);
            }
            Err(skip) => report.skipped.push(skip),
        }
    }
    report.candidates = candidates.len();
    Ok((candidates, report))
}

fn build_one(
    spec: &CandidateSpec,
    base: &RandomForest,
    train: &Table,
    test: &Table,
    params: &ClassifierParams,
    seed: u64,
) -> Result<Candidate, SkippedCandidate> {
    let skip = |reason: String| SkippedCandidate {
        predicate_id: spec.predicate_id.clone(),
        repair: spec.repair.repair.name.clone(),
        column: spec.repair.repair.column().map(String::from),
        reason,
    };
    let classifier = match spec.repair.stage {
        // a prediction repair does not alter training data; reuse base
        Stage::Prediction => base.clone(),
        Stage::Data => {
            let cleaned = apply_data_repairs(&[&spec.repair], train)
                .map_err(|e| skip(e.to_string()))?;
            if cleaned.is_empty() {
                return Err(skip("repaired train is empty".into()));
            }
            if cleaned.label_order().len() < 2 {
                return Err(skip("repaired train is single-label".into()));
            }
            train_reference(&cleaned, seed.wrapping_add(spec.seed_offset), params)
                .map_err(|e| skip(e.to_string()))?
        }
    };
    let predictions: BTreeMap<u64, Value> = test
        .records
        .iter()
        .map(|r| {
            (
                r.row_id,
                candidate_predict(Some(&spec.repair), &classifier, r),
            )
        })
        .collect();
    Ok(Candidate::from_predictions(
        0, // renumbered by the caller
        Some(spec.repair.clone()),
        classifier,
        predictions,
    ))
}

/// 1 − weighted accuracy, computed from the materialized predictions via
/// the label index; no classifier invocation.
pub fn weighted_error(candidate: &Candidate, w: &WeightVector, test: &Table) -> f64 {
    let truth: BTreeMap<&Value, BTreeSet<u64>> = {
        let mut m: BTreeMap<&Value, BTreeSet<u64>> = BTreeMap::new();
        for rec in &test.records {
            if let Some(l) = &rec.label {
                m.entry(l).or_default().insert(rec.row_id);
            }
        }
        m
    };
    let mut correct = 0.0;
    for (label, rows) in &truth {
        if let Some(predicted_rows) = candidate.label_index.get(label) {
            for row in rows.intersection(predicted_rows) {
                correct += w.weights.get(row).copied().unwrap_or(0.0);
            }
        }
    }
    let total = w.total();
    if total == 0.0 {
        1.0
    } else {
        1.0 - correct / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub t: usize,
    pub candidate_id: usize,
    pub epsilon: f64,
    pub alpha: f64,
    /// Accuracy of the round-1..=t prefix ensemble on its selection
    /// targets.
    pub running_accuracy: f64,
}

/// Per-round diagnostics kept out of the serialized ensemble.
#[derive(Debug, Clone, Default)]
pub struct BoostTrace {
    /// Sum of weights after each round's renormalization.
    pub weight_sums: Vec<f64>,
    /// Weighted error of the chosen candidate on the UPDATED weights.
    pub post_update_errors: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub candidate_id: usize,
    pub repair: Option<ConditionalRepair>,
    pub classifier: RandomForest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EnsembleRounds {
    Binary {
        positive: Value,
        negative: Value,
        rounds: Vec<Round>,
    },
    OneVsRest {
        classes: Vec<(Value, Vec<Round>)>,
    },
}

/// The deployable compiled cleaner+classifier: members vote with their
/// own conditional repair, weighted by the selection alphas.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    /// Train label set in first-occurrence order.
    pub labels: Vec<Value>,
    pub majority_label: Value,
    pub members: BTreeMap<usize, EnsembleMember>,
    pub rounds: EnsembleRounds,
}

impl Ensemble {
    pub fn round_list(&self) -> Vec<&Round> {
        match &self.rounds {
            EnsembleRounds::Binary { rounds, .. } => rounds.iter().collect(),
            EnsembleRounds::OneVsRest { classes } => {
                classes.iter().flat_map(|(_, r)| r.iter()).collect()
            }
        }
    }
}

/// Correctness mask over test rows for one candidate. With `class`
/// given, the problem is the relabeled one-vs-rest world: the candidate
/// is correct when its prediction and the true label agree about
/// membership in the class.
fn correct_mask(candidate: &Candidate, test: &Table, class: Option<&Value>) -> Vec<bool> {
    test.records
        .iter()
        .map(|rec| {
            let pred = candidate.predictions.get(&rec.row_id);
            match class {
                None => pred == rec.label.as_ref(),
                Some(c) => {
                    (pred == Some(c)) == (rec.label.as_ref() == Some(c))
                }
            }
        })
        .collect()
}

/// The AdaBoost loop over precomputed correctness masks. `majority_sign`
/// is the vote assigned to a zero margin when measuring the running
/// prefix accuracy.
fn run_rounds(
    masks: &[Vec<bool>],
    targets: &[bool],
    b: usize,
    majority_sign: bool,
) -> (Vec<Round>, BoostTrace) {
    let n = targets.len();
    let mut w = vec![1.0 / n as f64; n];
    let mut margins = vec![0.0f64; n];
    let mut rounds = Vec::new();
    let mut trace = BoostTrace::default();
    for t in 1..=b {
        // best weighted accuracy, ties toward the lower candidate id
        let mut best_id = 0usize;
        let mut best_acc = f64::NEG_INFINITY;
        for (id, mask) in masks.iter().enumerate() {
            let acc: f64 = mask
                .iter()
                .zip(&w)
                .filter(|(c, _)| **c)
                .map(|(_, wi)| *wi)
                .sum();
            if acc > best_acc {
                best_acc = acc;
                best_id = id;
            }
        }
        let raw_epsilon = 1.0 - best_acc;
        // weak-learning failure: stop before recording, except in round 1
        // where the ensemble must contain at least one member; there the
        // clamp pins alpha to a vanishing positive value so the ensemble
        // degenerates to the best single candidate
        if t > 1 && raw_epsilon >= 0.5 {
            break;
        }
        let epsilon = raw_epsilon.clamp(EPSILON_CLAMP, 0.5 - EPSILON_CLAMP);
        let alpha = ((1.0 - epsilon) / epsilon).ln();
        let mask = &masks[best_id];
        // exponential reweighting: down-weight correct, up-weight wrong;
        // the half-alpha exponent is what renders the chosen candidate
        // exactly uninformative (error 1/2) under the new weights
        let down = (-alpha / 2.0).exp();
        let up = (alpha / 2.0).exp();
        for (wi, correct) in w.iter_mut().zip(mask) {
            *wi *= if *correct { down } else { up };
        }
        let sum: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= sum;
        }
        trace.weight_sums.push(w.iter().sum());
        let post: f64 = mask
            .iter()
            .zip(&w)
            .filter(|(c, _)| !**c)
            .map(|(_, wi)| *wi)
            .sum();
        trace.post_update_errors.push(post);

        for i in 0..n {
            let vote = if mask[i] { targets[i] } else { !targets[i] };
            margins[i] += if vote { alpha } else { -alpha };
        }
        let correct_now = (0..n)
            .filter(|&i| {
                let vote = if margins[i] > 0.0 {
                    true
                } else if margins[i] < 0.0 {
                    false
                } else {
                    majority_sign
                };
                vote == targets[i]
            })
            .count();
        rounds.push(Round {
            t,
            candidate_id: best_id,
            epsilon,
            alpha,
            running_accuracy: correct_now as f64 / n as f64,
        });
    }
    (rounds, trace)
}

fn prefix_truncate(rounds: &mut Vec<Round>, base_accuracy: f64) {
    if let Some(last) = rounds.last() {
        if last.running_accuracy >= base_accuracy {
            return;
        }
    }
    // the full ensemble fell below the base candidate: keep the shortest
    // prefix with the best running accuracy (prefix 1 is the best single
    // candidate, which is never worse than the base)
    let best = rounds
        .iter()
        .enumerate()
        .max_by(|a, b| {
            a.1.running_accuracy
                .partial_cmp(&b.1.running_accuracy)
                .unwrap()
                .then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i + 1)
        .unwrap_or(0);
    rounds.truncate(best.max(1));
}

fn members_for(candidates: &[Candidate], rounds: &[&Round]) -> BTreeMap<usize, EnsembleMember> {
    let ids: BTreeSet<usize> = rounds.iter().map(|r| r.candidate_id).collect();
    ids.into_iter()
        .map(|id| {
            let c = &candidates[id];
            (
                id,
                EnsembleMember {
                    candidate_id: id,
                    repair: c.repair.clone(),
                    classifier: c.classifier.clone(),
                },
            )
        })
        .collect()
}

/// Binary Boost-and-Clean selection. Labels are mapped to {+1, −1} with
/// the first train label positive. `seed` is part of the signature for
/// interface symmetry; selection itself is deterministic.
pub fn boost_select(
    candidates: &[Candidate],
    test: &Table,
    b: usize,
    seed: u64,
) -> Result<Ensemble, BoostError> {
    let (ensemble, _) = boost_select_traced(candidates, test, b, seed)?;
    Ok(ensemble)
}

pub fn boost_select_traced(
    candidates: &[Candidate],
    test: &Table,
    b: usize,
    _seed: u64,
) -> Result<(Ensemble, BoostTrace), BoostError> {
    if candidates.is_empty() {
        return Err(BoostError::NoCandidates);
    }
    let labels = candidates[0].classifier.labels().to_vec();
    if labels.len() != 2 {
        return Err(BoostError::NotBinary(labels.len()));
    }
    let positive = labels[0].clone();
    let negative = labels[1].clone();
    let majority_label = majority_test_label(test).unwrap_or_else(|| positive.clone());
    let masks: Vec<Vec<bool>> = candidates
        .iter()
        .map(|c| correct_mask(c, test, None))
        .collect();
    let targets: Vec<bool> = test
        .records
        .iter()
        .map(|r| r.label.as_ref() == Some(&positive))
        .collect();
    let (mut rounds, trace) = run_rounds(&masks, &targets, b.max(1), majority_label == positive);
    let base_accuracy = masks[0].iter().filter(|c| **c).count() as f64 / targets.len() as f64;
    prefix_truncate(&mut rounds, base_accuracy);
    let members = members_for(candidates, &rounds.iter().collect::<Vec<_>>());
    Ok((
        Ensemble {
            labels,
            majority_label,
            members,
            rounds: EnsembleRounds::Binary {
                positive,
                negative,
                rounds,
            },
        },
        trace,
    ))
}

fn majority_test_label(test: &Table) -> Option<Value> {
    test.majority_label()
}

/// Multi-class selection: one boosting run per label over the relabeled
/// problem, reusing the same materialized predictions; prediction is the
/// argmax class margin.
pub fn one_vs_rest(
    candidates: &[Candidate],
    test: &Table,
    b: usize,
    seed: u64,
) -> Result<Ensemble, BoostError> {
    let (ensemble, _) = one_vs_rest_traced(candidates, test, b, seed)?;
    Ok(ensemble)
}

pub fn one_vs_rest_traced(
    candidates: &[Candidate],
    test: &Table,
    b: usize,
    _seed: u64,
) -> Result<(Ensemble, BoostTrace), BoostError> {
    if candidates.is_empty() {
        return Err(BoostError::NoCandidates);
    }
    let labels = candidates[0].classifier.labels().to_vec();
    if labels.is_empty() {
        return Err(BoostError::NoLabels);
    }
    let majority_label = majority_test_label(test).unwrap_or_else(|| labels[0].clone());
    let mut classes = Vec::new();
    let mut trace = BoostTrace::default();
    for label in &labels {
        let masks: Vec<Vec<bool>> = candidates
            .iter()
            .map(|c| correct_mask(c, test, Some(label)))
            .collect();
        let targets: Vec<bool> = test
            .records
            .iter()
            .map(|r| r.label.as_ref() == Some(label))
            .collect();
        let (mut rounds, t) =
            run_rounds(&masks, &targets, b.max(1), *label == majority_label);
        let base_accuracy =
            masks[0].iter().filter(|c| **c).count() as f64 / targets.len() as f64;
        prefix_truncate(&mut rounds, base_accuracy);
        trace.weight_sums.extend(t.weight_sums);
        trace.post_update_errors.extend(t.post_update_errors);
        classes.push((label.clone(), rounds));
    }
    let all_rounds: Vec<&Round> = classes.iter().flat_map(|(_, r)| r.iter()).collect();
    let members = members_for(candidates, &all_rounds);
    let mut ensemble = Ensemble {
        labels,
        majority_label,
        members,
        rounds: EnsembleRounds::OneVsRest { classes },
    };
    // never-worse guard on the overall argmax: if the per-class runs
    // composed badly, fall back to the best single candidate
    let base_acc = materialized_accuracy_of(&candidates[0], test);
    if selection_accuracy(&ensemble, candidates, test) < base_acc {
        let best = (0..candidates.len())
            .max_by(|a, b| {
                materialized_accuracy_of(&candidates[*a], test)
                    .partial_cmp(&materialized_accuracy_of(&candidates[*b], test))
                    .unwrap()
                    .then(b.cmp(a))
            })
            .unwrap();
        let classes: Vec<(Value, Vec<Round>)> = ensemble
            .labels
            .iter()
            .map(|label| {
                let mask = correct_mask(&candidates[best], test, Some(label));
                let eps = (1.0
                    - mask.iter().filter(|c| **c).count() as f64 / mask.len() as f64)
                    .clamp(EPSILON_CLAMP, 0.5 - EPSILON_CLAMP);
                (
                    label.clone(),
                    vec![Round {
                        t: 1,
                        candidate_id: best,
                        epsilon: eps,
                        alpha: ((1.0 - eps) / eps).ln(),
                        running_accuracy: 1.0 - eps,
                    }],
                )
            })
            .collect();
        let all_rounds: Vec<&Round> = classes.iter().flat_map(|(_, r)| r.iter()).collect();
        ensemble.members = members_for(candidates, &all_rounds);
        ensemble.rounds = EnsembleRounds::OneVsRest { classes };
    }
    Ok((ensemble, trace))
}

fn materialized_accuracy_of(candidate: &Candidate, test: &Table) -> f64 {
    let mask = correct_mask(candidate, test, None);
    mask.iter().filter(|c| **c).count() as f64 / mask.len().max(1) as f64
}

/// Ensemble accuracy on the selection test set, evaluated from the
/// candidates' materialized predictions (no classifier invocation).
pub fn selection_accuracy(ensemble: &Ensemble, candidates: &[Candidate], test: &Table) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let correct = test
        .records
        .iter()
        .filter(|rec| {
            let votes: BTreeMap<usize, &Value> = ensemble
                .round_list()
                .iter()
                .map(|r| {
                    (
                        r.candidate_id,
                        &candidates[r.candidate_id].predictions[&rec.row_id],
                    )
                })
                .collect();
            let label = combine_votes(ensemble, &votes);
            Some(&label) == rec.label.as_ref()
        })
        .count();
    correct as f64 / test.len() as f64
}

fn combine_votes(ensemble: &Ensemble, votes: &BTreeMap<usize, &Value>) -> Value {
    match &ensemble.rounds {
        EnsembleRounds::Binary {
            positive,
            negative,
            rounds,
        } => {
            let margin: f64 = rounds
                .iter()
                .map(|r| {
                    if *votes[&r.candidate_id] == *positive {
                        r.alpha
                    } else {
                        -r.alpha
                    }
                })
                .sum();
            if margin > 0.0 {
                positive.clone()
            } else if margin < 0.0 {
                negative.clone()
            } else {
                ensemble.majority_label.clone()
            }
        }
        EnsembleRounds::OneVsRest { classes } => {
            let mut best: Option<(f64, &Value)> = None;
            // ties resolve to the earlier label in train order
            for (label, rounds) in classes {
                let margin: f64 = rounds
                    .iter()
                    .map(|r| {
                        if *votes[&r.candidate_id] == *label {
                            r.alpha
                        } else {
                            -r.alpha
                        }
                    })
                    .sum();
                match best {
                    Some((m, _)) if margin <= m => {}
                    _ => best = Some((margin, label)),
                }
            }
            best.map(|(_, l)| l.clone())
                .unwrap_or_else(|| ensemble.majority_label.clone())
        }
    }
}

/// Deployed prediction: every member votes with its own conditional
/// repair applied to the incoming record.
pub fn ensemble_predict(ensemble: &Ensemble, record: &Record) -> Value {
    let votes: BTreeMap<usize, Value> = ensemble
        .members
        .iter()
        .map(|(id, m)| {
            (
                *id,
                candidate_predict(m.repair.as_ref(), &m.classifier, record),
            )
        })
        .collect();
    let borrowed: BTreeMap<usize, &Value> = votes.iter().map(|(k, v)| (*k, v)).collect();
    combine_votes(ensemble, &borrowed)
}

/// Signed vote margin toward the positive label; None for multi-class
/// ensembles.
pub fn ensemble_margin(ensemble: &Ensemble, record: &Record) -> Option<f64> {
    let EnsembleRounds::Binary {
        positive, rounds, ..
    } = &ensemble.rounds
    else {
        return None;
    };
    let margin = rounds
        .iter()
        .map(|r| {
            let m = &ensemble.members[&r.candidate_id];
            let vote = candidate_predict(m.repair.as_ref(), &m.classifier, record);
            if vote == *positive {
                r.alpha
            } else {
                -r.alpha
            }
        })
        .sum();
    Some(margin)
}

pub fn ensemble_accuracy(ensemble: &Ensemble, test: &Table) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let correct = test
        .records
        .iter()
        .filter(|r| Some(ensemble_predict(ensemble, r)) == r.label)
        .count();
    correct as f64 / test.len() as f64
}

const ENSEMBLE_MAGIC: &[u8; 8] = b"BCENSMB\0";
const ENSEMBLE_VERSION: u8 = 1;

/// Serialize the full ensemble (captured predicate parameters, repair
/// statistics, classifiers, alphas) as a self-contained versioned file.
pub fn deploy(ensemble: &Ensemble, path: &Path) -> Result<(), BoostError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(ENSEMBLE_MAGIC)?;
    f.write_all(&[ENSEMBLE_VERSION])?;
    let payload =
        serde_json::to_vec(ensemble).map_err(|e| BoostError::Corrupt(e.to_string()))?;
    f.write_all(&payload)?;
    Ok(())
}

pub fn load_deployed(path: &Path) -> Result<Ensemble, BoostError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|_| BoostError::BadMagic)?;
    if &magic != ENSEMBLE_MAGIC {
        return Err(BoostError::BadMagic);
    }
    let mut version = [0u8; 1];
    f.read_exact(&mut version)
        .map_err(|_| BoostError::Corrupt("truncated header".into()))?;
    if version[0] != ENSEMBLE_VERSION {
        return Err(BoostError::VersionMismatch {
            found: version[0],
            expected: ENSEMBLE_VERSION,
        });
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    serde_json::from_slice(&payload).map_err(|e| BoostError::Corrupt(e.to_string()))
}

pub mod naive {
    //! Reference selection without the materialization, indexing or
    //! parallelization shortcuts: every round re-predicts every
    //! candidate on every test record. Used as the oracle the optimized
    //! path must match exactly.

    use super::*;

    fn repredict(candidate: &Candidate, record: &Record) -> Value {
        candidate_predict(candidate.repair.as_ref(), &candidate.classifier, record)
    }

    fn rounds_naive(
        candidates: &[Candidate],
        test: &Table,
        targets: &[bool],
        class: Option<&Value>,
        b: usize,
        majority_sign: bool,
    ) -> Vec<Round> {
        let n = test.len();
        let mut w = vec![1.0 / n as f64; n];
        let mut margins = vec![0.0f64; n];
        let mut rounds = Vec::new();
        for t in 1..=b {
            let mut best_id = 0usize;
            let mut best_acc = f64::NEG_INFINITY;
            for (id, cand) in candidates.iter().enumerate() {
                let mut acc = 0.0;
                for (i, rec) in test.records.iter().enumerate() {
                    let pred = repredict(cand, rec);
                    let correct = match class {
                        None => Some(&pred) == rec.label.as_ref(),
                        Some(c) => (pred == *c) == (rec.label.as_ref() == Some(c)),
                    };
                    if correct {
                        acc += w[i];
                    }
                }
                if acc > best_acc {
                    best_acc = acc;
                    best_id = id;
                }
            }
            let raw_epsilon = 1.0 - best_acc;
            if t > 1 && raw_epsilon >= 0.5 {
                break;
            }
            let epsilon = raw_epsilon.clamp(EPSILON_CLAMP, 0.5 - EPSILON_CLAMP);
            let alpha = ((1.0 - epsilon) / epsilon).ln();
            let chosen = &candidates[best_id];
            let correct: Vec<bool> = test
                .records
                .iter()
                .map(|rec| {
                    let pred = repredict(chosen, rec);
                    match class {
                        None => Some(&pred) == rec.label.as_ref(),
                        Some(c) => (pred == *c) == (rec.label.as_ref() == Some(c)),
                    }
                })
                .collect();
            for i in 0..n {
                w[i] *= if correct[i] {
                    (-alpha / 2.0).exp()
                } else {
                    (alpha / 2.0).exp()
                };
            }
            let sum: f64 = w.iter().sum();
            for wi in &mut w {
                *wi /= sum;
            }
            for i in 0..n {
                let vote = if correct[i] { targets[i] } else { !targets[i] };
                margins[i] += if vote { alpha } else { -alpha };
            }
            let correct_now = (0..n)
                .filter(|&i| {
                    let vote = if margins[i] > 0.0 {
                        true
                    } else if margins[i] < 0.0 {
                        false
                    } else {
                        majority_sign
                    };
                    vote == targets[i]
                })
                .count();
            rounds.push(Round {
                t,
                candidate_id: best_id,
                epsilon,
                alpha,
                running_accuracy: correct_now as f64 / n as f64,
            });
        }
        rounds
    }

    pub fn boost_select(
        candidates: &[Candidate],
        test: &Table,
        b: usize,
        _seed: u64,
    ) -> Result<Ensemble, BoostError> {
        if candidates.is_empty() {
            return Err(BoostError::NoCandidates);
        }
        let labels = candidates[0].classifier.labels().to_vec();
        if labels.len() != 2 {
            return Err(BoostError::NotBinary(labels.len()));
        }
        let positive = labels[0].clone();
        let negative = labels[1].clone();
        let majority_label = test.majority_label().unwrap_or_else(|| positive.clone());
        let targets: Vec<bool> = test
            .records
            .iter()
            .map(|r| r.label.as_ref() == Some(&positive))
            .collect();
        let mut rounds = rounds_naive(
            candidates,
            test,
            &targets,
            None,
            b.max(1),
            majority_label == positive,
        );
        let base_correct = test
            .records
            .iter()
            .filter(|rec| Some(repredict(&candidates[0], rec)) == rec.label.clone())
            .count();
        super::prefix_truncate(&mut rounds, base_correct as f64 / test.len() as f64);
        let members = super::members_for(candidates, &rounds.iter().collect::<Vec<_>>());
        Ok(Ensemble {
            labels,
            majority_label,
            members,
            rounds: EnsembleRounds::Binary {
                positive,
                negative,
                rounds,
            },
        })
    }
}
