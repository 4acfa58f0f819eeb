//! Simulation battery: scenarios × replicates × models × estimators.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stcv_core::condvar::{conditional_variance_profile, CondVarCell, ProfileScheme};
use stcv_core::estimate::{cv_estimate, true_interpolation_error};
use stcv_core::partition::PartitionSpec;
use stcv_core::rng::derive_seed;
use stcv_core::sim::{replicate_seed, simulate_replicate, ScenarioConfig, SimulatedField};
use stcv_core::{mse_loss, FoldAssignment, Learner, ModelRegistry, PartitionRegistry, SpaceTimeDataset};

use crate::config::{estimator_name, StudyConfig};
use crate::error::Result;

pub const TRUE_GRID: &str = "true_grid";

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "scenario", "replicate", "model", "estimator", "estimate", "n_folds", "n_test", "seed", "error",
];
pub const FOLD_COLUMNS: [&str; 7] = ["scenario", "replicate", "model", "estimator", "fold", "loss", "n_test"];
pub const CONDVAR_COLUMNS: [&str; 9] = [
    "scenario", "replicate", "model", "estimator", "fold", "location", "time", "cond_var", "sq_error",
];

/// One estimate of one model's error on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: u32,
    pub replicate: u64,
    pub model: String,
    pub estimator: String,
    pub estimate: Option<f64>,
    pub n_folds: usize,
    pub n_test: usize,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub scenario: u32,
    pub replicate: u64,
    pub model: String,
    pub estimator: String,
    pub fold: usize,
    pub loss: f64,
    pub n_test: usize,
}

/// Conditional variance of a held-out cell next to the squared error a
/// model made there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondVarRow {
    pub scenario: u32,
    pub replicate: u64,
    pub model: String,
    pub estimator: String,
    pub fold: usize,
    pub location: usize,
    pub time: i64,
    pub cond_var: f64,
    pub sq_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyResults {
    pub aggregate: Vec<AggregateRow>,
    pub folds: Vec<FoldRow>,
    pub condvar: Vec<CondVarRow>,
}

fn write_rows<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path)?));
    w.write_record(columns)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl StudyResults {
    pub fn n_failures(&self) -> usize {
        self.aggregate.iter().filter(|r| r.error.is_some()).count()
    }

    /// Finite estimates for one (scenario, model, estimator), by replicate.
    pub fn estimates(&self, scenario: u32, model: &str, estimator: &str) -> Vec<f64> {
        self.aggregate
            .iter()
            .filter(|r| r.scenario == scenario && r.model == model && r.estimator == estimator)
            .filter_map(|r| r.estimate)
            .collect()
    }

    /// Writes `aggregate.csv`, `folds.csv` and `condvar.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("aggregate.csv"), &AGGREGATE_COLUMNS, &self.aggregate)?;
        write_rows(&dir.join("folds.csv"), &FOLD_COLUMNS, &self.folds)?;
        write_rows(&dir.join("condvar.csv"), &CONDVAR_COLUMNS, &self.condvar)?;
        Ok(())
    }
}

/// Every lattice domain has the same diameter; fractional buffers resolve
/// against it.
pub fn lattice_diameter(field: &SimulatedField) -> f64 {
    (field.config.grid_side as f64 - 1.0) * std::f64::consts::SQRT_2
}

struct Resolved {
    models: Vec<(String, Box<dyn Learner>)>,
    estimators: Vec<PartitionSpec>,
}

struct Scored {
    aggregate: AggregateRow,
    folds: Vec<FoldRow>,
    /// Prediction per scored cell, keyed by (lattice location, time).
    predictions: HashMap<(usize, i64), f64>,
}

fn lattice_key(ds: &SpaceTimeDataset, row: usize) -> (usize, i64) {
    let c = ds.cell(row);
    let loc = ds.location(c.location).id.parse().expect("simulated location ids are lattice indices");
    (loc, c.time)
}

fn failed(scenario: u32, replicate: u64, model: &str, estimator: &str, seed: u64, err: String) -> AggregateRow {
    AggregateRow {
        scenario,
        replicate,
        model: model.to_string(),
        estimator: estimator.to_string(),
        estimate: None,
        n_folds: 0,
        n_test: 0,
        seed,
        error: Some(err),
    }
}

fn score_truth(field: &SimulatedField, learner: &dyn Learner, seed: u64) -> stcv_core::Result<(f64, usize, HashMap<(usize, i64), f64>)> {
    let obs = field.observed_dataset()?;
    let hold = field.holdout_dataset()?;
    let rule = learner.fit(&obs, &obs.usable_rows(), seed)?;
    let (report, pred) = true_interpolation_error(rule.as_ref(), &obs, &hold, mse_loss)?;
    let map = hold
        .usable_rows()
        .into_iter()
        .zip(pred)
        .map(|(r, p)| (lattice_key(&hold, r), p))
        .collect();
    Ok((report.estimate, report.n_test(), map))
}

/// Runs one replicate of one scenario. Rows come out in (model, estimator)
/// order with the true-grid row first.
fn run_unit(cfg: &StudyConfig, res: &Resolved, sc: &ScenarioConfig, rep: u64) -> StudyResults {
    let seed = replicate_seed(cfg.master_seed, sc.id, rep);
    let mut out = StudyResults::default();
    let mut est_names: Vec<String> = Vec::new();
    if cfg.true_grid {
        est_names.push(TRUE_GRID.to_string());
    }
    let field = simulate_replicate(sc, rep, cfg.master_seed);
    let field = match field.and_then(|f| f.observed_dataset().map(|d| (f, d))) {
        Ok(f) => f,
        Err(e) => {
            let diameter = ((sc.gp_config().grid_side as f64) - 1.0) * std::f64::consts::SQRT_2;
            est_names.extend(res.estimators.iter().map(|e| estimator_name(e, diameter).unwrap_or_else(|_| e.scheme.clone())));
            for (m, _) in &res.models {
                for name in &est_names {
                    out.aggregate.push(failed(sc.id, rep, m, name, seed, format!("simulation: {e}")));
                }
            }
            return out;
        }
    };
    let (field, obs) = field;
    let diameter = lattice_diameter(&field);
    let registry = PartitionRegistry::with_defaults();
    let partitions: Vec<(String, std::result::Result<FoldAssignment, String>)> = res
        .estimators
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let name = estimator_name(spec, diameter).unwrap_or_else(|_| spec.scheme.clone());
            let fa = registry
                .build(spec, diameter)
                .and_then(|p| p.partition(&obs, derive_seed(&[seed, 1, e as u64])))
                .map_err(|err| format!("partition: {err}"));
            (name, fa)
        })
        .collect();

    let with_condvar = (rep as usize) < cfg.condvar_replicates;
    let profile = |scheme: ProfileScheme<'_>| -> Option<Vec<CondVarCell>> {
        if !with_condvar {
            return None;
        }
        conditional_variance_profile(&field, scheme)
            .map_err(|e| log::warn!("scenario {} replicate {rep}: conditional variances failed: {e}", sc.id))
            .ok()
    };
    let truth_profile = if cfg.true_grid { profile(ProfileScheme::TrueGrid) } else { None };
    let fold_profiles: Vec<Option<Vec<CondVarCell>>> = partitions
        .iter()
        .map(|(_, fa)| fa.as_ref().ok().and_then(|fa| profile(ProfileScheme::Folds(fa))))
        .collect();

    for (m, (model, learner)) in res.models.iter().enumerate() {
        let fit_seed = derive_seed(&[seed, 2, m as u64]);
        let mut scored: Vec<(Scored, Option<&Vec<CondVarCell>>)> = Vec::new();
        if cfg.true_grid {
            match score_truth(&field, learner.as_ref(), fit_seed) {
                Ok((estimate, n_test, predictions)) => {
                    let agg = AggregateRow {
                        scenario: sc.id,
                        replicate: rep,
                        model: model.clone(),
                        estimator: TRUE_GRID.into(),
                        estimate: Some(estimate),
                        n_folds: 1,
                        n_test,
                        seed: fit_seed,
                        error: None,
                    };
                    out.aggregate.push(agg.clone());
                    scored.push((
                        Scored {
                            aggregate: agg,
                            folds: Vec::new(),
                            predictions,
                        },
                        truth_profile.as_ref(),
                    ));
                }
                Err(e) => out.aggregate.push(failed(sc.id, rep, model, TRUE_GRID, fit_seed, e.to_string())),
            }
        }
        for ((name, fa), prof) in partitions.iter().zip(&fold_profiles) {
            let fa = match fa {
                Ok(fa) => fa,
                Err(e) => {
                    out.aggregate.push(failed(sc.id, rep, model, name, fit_seed, e.clone()));
                    continue;
                }
            };
            match cv_estimate(&obs, fa, learner.as_ref(), mse_loss, fit_seed) {
                Ok(cv) => {
                    let agg = AggregateRow {
                        scenario: sc.id,
                        replicate: rep,
                        model: model.clone(),
                        estimator: name.clone(),
                        estimate: Some(cv.report.estimate),
                        n_folds: cv.report.per_fold.len(),
                        n_test: cv.report.n_test(),
                        seed: fit_seed,
                        error: None,
                    };
                    out.aggregate.push(agg.clone());
                    let folds = cv
                        .report
                        .per_fold
                        .iter()
                        .map(|f| FoldRow {
                            scenario: sc.id,
                            replicate: rep,
                            model: model.clone(),
                            estimator: name.clone(),
                            fold: f.fold,
                            loss: f.loss.value,
                            n_test: f.loss.n,
                        })
                        .collect();
                    let predictions = cv
                        .predictions
                        .iter()
                        .map(|h| (lattice_key(&obs, h.row), h.prediction))
                        .collect();
                    scored.push((
                        Scored {
                            aggregate: agg,
                            folds,
                            predictions,
                        },
                        prof.as_ref(),
                    ));
                }
                Err(e) => out.aggregate.push(failed(sc.id, rep, model, name, fit_seed, e.to_string())),
            }
        }
        for (s, prof) in scored {
            out.folds.extend(s.folds);
            let Some(prof) = prof else { continue };
            for c in prof {
                let key = (c.location, c.time);
                let sq_error = s.predictions.get(&key).map(|p| (field.y[field.cell(c.location, c.time)] - p).powi(2));
                out.condvar.push(CondVarRow {
                    scenario: sc.id,
                    replicate: rep,
                    model: model.clone(),
                    estimator: s.aggregate.estimator.clone(),
                    fold: c.fold,
                    location: c.location,
                    time: c.time,
                    cond_var: c.cond_var,
                    sq_error,
                });
            }
        }
    }
    out
}

/// Runs the battery. Replicates execute in parallel; rows are merged in
/// (scenario, replicate, model, estimator, fold) order, so the output is
/// independent of scheduling. Failures become rows with an error message.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResults> {
    cfg.validate()?;
    let reg = ModelRegistry::with_defaults();
    let res = Resolved {
        models: cfg
            .models
            .iter()
            .map(|m| Ok((m.display_name().to_string(), reg.build(m)?)))
            .collect::<Result<_>>()?,
        estimators: cfg.estimators.clone(),
    };
    let units: Vec<(ScenarioConfig, u64)> = cfg
        .resolved_scenarios()?
        .into_iter()
        .flat_map(|s| (0..s.replicates as u64).map(move |r| (s, r)))
        .collect();
    let parts: Vec<StudyResults> = units
        .par_iter()
        .map(|(sc, rep)| {
            let r = run_unit(cfg, &res, sc, *rep);
            log::info!(
                "scenario {} replicate {rep}: {} rows, {} failures",
                sc.id,
                r.aggregate.len(),
                r.n_failures()
            );
            r
        })
        .collect();
    let mut out = StudyResults::default();
    for p in parts {
        out.aggregate.extend(p.aggregate);
        out.folds.extend(p.folds);
        out.condvar.extend(p.condvar);
    }
    Ok(out)
}

/// Pearson correlation of paired (truth, estimate) values.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Writes a short plain-text digest of median estimates.
pub fn write_summary<W: Write>(results: &StudyResults, mut w: W) -> Result<()> {
    let mut keys: Vec<(u32, String, String)> = results
        .aggregate
        .iter()
        .map(|r| (r.scenario, r.model.clone(), r.estimator.clone()))
        .collect();
    keys.dedup();
    keys.sort();
    keys.dedup();
    writeln!(w, "scenario  model           estimator         median      n")?;
    for (s, m, e) in keys {
        let v = results.estimates(s, &m, &e);
        writeln!(w, "{s:<9} {m:<15} {e:<17} {:<11.5} {}", crate::bands::median(&v), v.len())?;
    }
    Ok(())
}
