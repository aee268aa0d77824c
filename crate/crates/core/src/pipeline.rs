//! End-to-end orchestration: load, infer, split, detect, build
//! candidates, boost, deploy, evaluate.
//!
//! This is the programmatic surface the CLI wraps. Everything here is
//! deterministic given (input table, config): detector fitting, the
//! train/test split, candidate training and selection all derive their
//! randomness from the config seed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boost::{
    self, boost_select_traced, build_candidates, one_vs_rest_traced, BoostError, BoostTrace,
    BuildReport, Candidate, Ensemble, EnsembleRounds, Round, SkippedCandidate,
};
use crate::config::Config;
use crate::detect::{default_library, generate_all, DetectError, DetectReport, Predicate};
use crate::model::{Classifier, ModelError};
use crate::table::{infer_types, split, with_schema, Dataset, Table, TableError, Value};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One selection round as reported to the user, joined with the chosen
/// candidate's repair description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReport {
    /// One-vs-rest class this round belongs to; absent for binary runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub t: usize,
    pub candidate_id: usize,
    /// None for the base candidate.
    pub predicate_id: Option<String>,
    pub repair: Option<String>,
    pub column: Option<String>,
    pub epsilon: f64,
    pub alpha: f64,
    pub running_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub budget: usize,
    pub candidates: usize,
    pub rounds: Vec<RoundReport>,
    pub base_accuracy: f64,
    pub ensemble_accuracy: f64,
    pub skipped: Vec<SkippedCandidate>,
}

pub struct PipelineOutput {
    pub dataset: Dataset,
    pub predicates: Vec<Predicate>,
    pub detect_report: DetectReport,
    pub candidates: Vec<Candidate>,
    pub build_report: BuildReport,
    pub ensemble: Ensemble,
    pub trace: BoostTrace,
    pub selection_report: SelectionReport,
}

/// Attach the label column and the inferred schema to a freshly loaded
/// table.
pub fn prepare(table: Table, label: Option<&str>, cfg: &Config) -> Result<Table, TableError> {
    let table = table.with_label_column(label.map(String::from))?;
    let schema = infer_types(&table, &cfg.types);
    Ok(with_schema(table, schema))
}

/// Detector phase only: fit the configured library on the full table.
pub fn run_detect(
    table: &Table,
    cfg: &Config,
) -> Result<(Vec<Predicate>, DetectReport), PipelineError> {
    let library = default_library(cfg);
    Ok(generate_all(&library, table, cfg.seed)?)
}

/// The full selection pipeline over a prepared (labeled, typed) table.
pub fn run_select(table: &Table, cfg: &Config) -> Result<PipelineOutput, PipelineError> {
    let dataset = split(table, cfg.test_fraction, cfg.seed)?;
    let library = default_library(cfg);
    let (predicates, detect_report) = generate_all(&library, &dataset.train, cfg.seed)?;
    let (candidates, build_report) = build_candidates(
        &predicates,
        &cfg.repairs,
        &dataset.train,
        &dataset.test,
        &cfg.classifier,
        cfg.seed,
        cfg.threads,
    )?;
    let n_labels = candidates[0].classifier.labels().len();
    let (ensemble, trace) = if cfg.budget == 0 {
        (base_only_ensemble(&candidates, &dataset.test)?, BoostTrace::default())
    } else if n_labels == 2 {
        boost_select_traced(&candidates, &dataset.test, cfg.budget, cfg.seed)?
    } else {
        one_vs_rest_traced(&candidates, &dataset.test, cfg.budget, cfg.seed)?
    };
    let selection_report = selection_report(cfg, &candidates, &build_report, &ensemble, &dataset);
    Ok(PipelineOutput {
        dataset,
        predicates,
        detect_report,
        candidates,
        build_report,
        ensemble,
        trace,
        selection_report,
    })
}

/// Budget 0: the deployed model is the base classifier alone, expressed
/// as a single-round ensemble so every downstream path stays uniform.
fn base_only_ensemble(candidates: &[Candidate], test: &Table) -> Result<Ensemble, BoostError> {
    let base = std::slice::from_ref(&candidates[0]);
    let labels = candidates[0].classifier.labels().len();
    if labels == 2 {
        boost::boost_select(base, test, 1, 0)
    } else {
        boost::one_vs_rest(base, test, 1, 0)
    }
}

fn selection_report(
    cfg: &Config,
    candidates: &[Candidate],
    build: &BuildReport,
    ensemble: &Ensemble,
    dataset: &Dataset,
) -> SelectionReport {
    let describe = |r: &Round, class: Option<&Value>| {
        let cand = &candidates[r.candidate_id];
        RoundReport {
            class: class.map(|c| c.to_csv_field()),
            t: r.t,
            candidate_id: r.candidate_id,
            predicate_id: cand.repair.as_ref().map(|cr| cr.predicate.id.clone()),
            repair: cand.repair.as_ref().map(|cr| cr.repair.name.clone()),
            column: cand
                .repair
                .as_ref()
                .and_then(|cr| cr.repair.column().map(String::from)),
            epsilon: r.epsilon,
            alpha: r.alpha,
            running_accuracy: r.running_accuracy,
        }
    };
    let rounds = match &ensemble.rounds {
        EnsembleRounds::Binary { rounds, .. } => {
            rounds.iter().map(|r| describe(r, None)).collect()
        }
        EnsembleRounds::OneVsRest { classes } => classes
            .iter()
            .flat_map(|(label, rounds)| {
                rounds
                    .iter()
                    .map(move |r| describe(r, Some(label)))
                    .collect::<Vec<_>>()
            })
            .collect(),
    };
    let base_accuracy = dataset
        .test
        .records
        .iter()
        .filter(|rec| candidates[0].predictions.get(&rec.row_id) == rec.label.as_ref())
        .count() as f64
        / dataset.test.len().max(1) as f64;
    SelectionReport {
        budget: cfg.budget,
        candidates: candidates.len(),
        rounds,
        base_accuracy,
        ensemble_accuracy: boost::selection_accuracy(ensemble, candidates, &dataset.test),
        skipped: build.skipped.clone(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: usize,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    /// Area under the ROC curve of the ensemble margin; only defined for
    /// binary ensembles on a two-class evaluation set.
    pub auc: Option<f64>,
}

/// Accuracy, per-class precision/recall and (binary) AUC of a deployed
/// ensemble on a labeled table.
pub fn evaluate(ensemble: &Ensemble, table: &Table) -> Metrics {
    let labeled: Vec<_> = table
        .records
        .iter()
        .filter(|r| r.label.is_some())
        .collect();
    let predictions: Vec<Value> = labeled
        .iter()
        .map(|r| boost::ensemble_predict(ensemble, r))
        .collect();
    let correct = labeled
        .iter()
        .zip(&predictions)
        .filter(|(r, p)| r.label.as_ref() == Some(p))
        .count();
    let accuracy = correct as f64 / labeled.len().max(1) as f64;

    let mut class_names: Vec<Value> = ensemble.labels.clone();
    for r in &labeled {
        let l = r.label.clone().unwrap();
        if !class_names.contains(&l) {
            class_names.push(l);
        }
    }
    let mut per_class = BTreeMap::new();
    for class in &class_names {
        let tp = labeled
            .iter()
            .zip(&predictions)
            .filter(|(r, p)| r.label.as_ref() == Some(class) && *p == class)
            .count();
        let pred_pos = predictions.iter().filter(|p| *p == class).count();
        let support = labeled
            .iter()
            .filter(|r| r.label.as_ref() == Some(class))
            .count();
        per_class.insert(
            class.to_csv_field(),
            ClassMetrics {
                precision: (pred_pos > 0).then(|| tp as f64 / pred_pos as f64),
                recall: (support > 0).then(|| tp as f64 / support as f64),
                support,
            },
        );
    }

    let auc = binary_auc(ensemble, &labeled);
    Metrics {
        rows: labeled.len(),
        accuracy,
        per_class,
        auc,
    }
}

fn binary_auc(ensemble: &Ensemble, labeled: &[&crate::table::Record]) -> Option<f64> {
    let EnsembleRounds::Binary { positive, .. } = &ensemble.rounds else {
        return None;
    };
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(labeled.len());
    for rec in labeled {
        let margin = boost::ensemble_margin(ensemble, rec)?;
        scored.push((margin, rec.label.as_ref() == Some(positive)));
    }
    let n_pos = scored.iter().filter(|(_, p)| *p).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None; // single-class evaluation set: AUC undefined
    }
    // Mann-Whitney rank statistic with average ranks on ties
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // ranks are 1-based
        for item in &scored[i..j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{load_csv_reader, LoadOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn load(csv: &str, label: &str, cfg: &Config) -> Table {
        let (t, _) = load_csv_reader(csv.as_bytes(), &LoadOptions::with_header(None)).unwrap();
        prepare(t, Some(label), cfg).unwrap()
    }

    fn noisy_fixture(n: usize) -> String {
        let mut csv = String::from("age,hours,country,y\n");
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for i in 0..n {
            let hi = i % 2 == 0;
            let age: f64 = if hi {
                rng.gen_range(45.0..65.0)
            } else {
                rng.gen_range(20.0..40.0)
            };
            let hours: f64 = if hi {
                rng.gen_range(40.0..55.0)
            } else {
                rng.gen_range(25.0..40.0)
            };
            let country = if i % 12 == 0 { "?" } else { "US" };
            let y = if hi { "hi" } else { "lo" };
            csv.push_str(&format!("{age:.1},{hours:.1},{country},{y}\n"));
        }
        csv
    }

    #[test]
    fn full_pipeline_produces_consistent_report() {
        let cfg = Config {
            budget: 3,
            ..Config::default()
        };
        let t = load(&noisy_fixture(200), "y", &cfg);
        let out = run_select(&t, &cfg).unwrap();
        assert!(!out.predicates.is_empty());
        assert!(out.candidates.len() > 1);
        assert_eq!(
            out.selection_report.rounds.len(),
            out.ensemble.round_list().len()
        );
        assert!(out.selection_report.ensemble_accuracy >= out.selection_report.base_accuracy);
        // report rows describe real candidates
        for r in &out.selection_report.rounds {
            assert!(r.candidate_id < out.candidates.len());
            if r.candidate_id == 0 {
                assert!(r.predicate_id.is_none());
            } else {
                assert!(r.predicate_id.is_some());
            }
        }
    }

    #[test]
    fn budget_zero_deploys_the_base_model_only() {
        let cfg = Config {
            budget: 0,
            ..Config::default()
        };
        let t = load(&noisy_fixture(150), "y", &cfg);
        let out = run_select(&t, &cfg).unwrap();
        let rounds = out.ensemble.round_list();
        assert_eq!(rounds.len(), 1);
        assert_eq!(rounds[0].candidate_id, 0);
        assert!(out.ensemble.members[&0].repair.is_none());
    }

    #[test]
    fn pipeline_is_deterministic() {
        let cfg = Config {
            budget: 3,
            ..Config::default()
        };
        let t = load(&noisy_fixture(150), "y", &cfg);
        let a = run_select(&t, &cfg).unwrap();
        let b = run_select(&t, &cfg).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.ensemble).unwrap(),
            serde_json::to_vec(&b.ensemble).unwrap()
        );
        assert_eq!(
            serde_json::to_vec(&a.selection_report).unwrap(),
            serde_json::to_vec(&b.selection_report).unwrap()
        );
        assert_eq!(
            serde_json::to_vec(&a.detect_report).unwrap(),
            serde_json::to_vec(&b.detect_report).unwrap()
        );
    }

    #[test]
    fn evaluate_reports_sane_metrics() {
        let cfg = Config {
            budget: 3,
            ..Config::default()
        };
        let t = load(&noisy_fixture(200), "y", &cfg);
        let out = run_select(&t, &cfg).unwrap();
        let m = evaluate(&out.ensemble, &out.dataset.test);
        assert!(m.accuracy > 0.5);
        assert_eq!(m.rows, out.dataset.test.len());
        assert!(m.per_class.contains_key("hi") && m.per_class.contains_key("lo"));
        for c in m.per_class.values() {
            if let Some(p) = c.precision {
                assert!((0.0..=1.0).contains(&p));
            }
            if let Some(r) = c.recall {
                assert!((0.0..=1.0).contains(&r));
            }
        }
        let auc = m.auc.expect("binary ensemble has an AUC");
        assert!((0.0..=1.0).contains(&auc));
        assert!(auc > 0.5, "separable data should rank well, auc={auc}");
    }

    #[test]
    fn auc_undefined_on_single_class_eval_set() {
        let cfg = Config {
            budget: 1,
            ..Config::default()
        };
        let t = load(&noisy_fixture(150), "y", &cfg);
        let out = run_select(&t, &cfg).unwrap();
        let mut single = out.dataset.test.clone();
        single
            .records
            .retain(|r| r.label == Some(Value::Text("hi".into())));
        let m = evaluate(&out.ensemble, &single);
        assert!(m.auc.is_none());
    }

    #[test]
    fn auc_of_random_scorer_is_near_half() {
        // a label-blind margin must produce AUC ~ 0.5 on balanced labels
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut scored: Vec<(f64, bool)> = (0..1000)
            .map(|i| (rng.gen_range(-1.0..1.0), i % 2 == 0))
            .collect();
        // reuse the rank computation through a handmade call
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n_pos = scored.iter().filter(|(_, p)| *p).count();
        let n_neg = scored.len() - n_pos;
        let mut rank_sum_pos = 0.0;
        for (idx, (_, pos)) in scored.iter().enumerate() {
            if *pos {
                rank_sum_pos += (idx + 1) as f64;
            }
        }
        let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
        let auc = u / (n_pos as f64 * n_neg as f64);
        assert!((auc - 0.5).abs() < 0.05, "auc={auc}");
    }
}
