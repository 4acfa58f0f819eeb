//! Prediction-error estimators built from partitions, learners and a loss.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};
use crate::loss::LossValue;
use crate::models::{FittedRule, Learner};
use crate::partition::FoldAssignment;
use crate::rng::{derive_seed, stream};

/// A loss over paired outcomes and predictions.
pub type LossFn = fn(&[f64], &[f64]) -> Result<LossValue>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorLabel {
    TrueGrid,
    NaiveCv(usize),
    LloK(usize),
    Lolo,
    /// Buffer distance in coordinate units.
    Buffered(f64),
    OobBootstrap,
    Validation,
}

impl fmt::Display for EstimatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorLabel::TrueGrid => f.write_str("true_grid"),
            EstimatorLabel::NaiveCv(k) => write!(f, "naive_cv{k}"),
            EstimatorLabel::LloK(k) => write!(f, "llo_{k}"),
            EstimatorLabel::Lolo => f.write_str("lolo"),
            EstimatorLabel::Buffered(d) => write!(f, "buffered_{d:.3}"),
            EstimatorLabel::OobBootstrap => f.write_str("oob_bootstrap"),
            EstimatorLabel::Validation => f.write_str("validation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldLoss {
    pub fold: usize,
    pub loss: LossValue,
}

/// Column order of the per-fold CSV serialisation.
pub const REPORT_COLUMNS: [&str; 7] = ["estimator", "model", "scenario", "replicate", "fold", "loss", "n_test"];

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub label: EstimatorLabel,
    /// Overrides the label's default name in output.
    pub label_name: Option<String>,
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub per_fold: Vec<FoldLoss>,
    pub estimate: f64,
}

impl ErrorReport {
    pub fn new(label: EstimatorLabel, model: &str, per_fold: Vec<FoldLoss>) -> Self {
        let estimate = aggregate(&per_fold);
        ErrorReport {
            label,
            label_name: None,
            model: model.to_string(),
            dataset: String::new(),
            seed: 0,
            per_fold,
            estimate,
        }
    }

    pub fn with_dataset(mut self, dataset: &str, seed: u64) -> Self {
        self.dataset = dataset.to_string();
        self.seed = seed;
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.label_name = Some(name.to_string());
        self
    }

    pub fn estimator_name(&self) -> String {
        self.label_name.clone().unwrap_or_else(|| self.label.to_string())
    }

    /// Recomputes the estimate from the per-fold losses.
    pub fn rederive(&self) -> f64 {
        aggregate(&self.per_fold)
    }

    pub fn n_test(&self) -> usize {
        self.per_fold.iter().map(|f| f.loss.n).sum()
    }

    /// One row per fold, then an `aggregate` row carrying the estimate.
    pub fn csv_records(&self, scenario: &str, replicate: &str) -> Vec<[String; 7]> {
        let est = self.estimator_name();
        let mut rows: Vec<[String; 7]> = self
            .per_fold
            .iter()
            .map(|f| {
                [
                    est.clone(),
                    self.model.clone(),
                    scenario.to_string(),
                    replicate.to_string(),
                    f.fold.to_string(),
                    crate::data::fmt_f64(f.loss.value),
                    f.loss.n.to_string(),
                ]
            })
            .collect();
        rows.push([
            est,
            self.model.clone(),
            scenario.to_string(),
            replicate.to_string(),
            "aggregate".to_string(),
            crate::data::fmt_f64(self.estimate),
            self.n_test().to_string(),
        ]);
        rows
    }

    pub fn write_csv<W: Write>(&self, writer: W, scenario: &str, replicate: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(REPORT_COLUMNS)?;
        for r in self.csv_records(scenario, replicate) {
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Unweighted mean of per-fold mean losses. Summation runs over the sorted
/// values so the result does not depend on fold order.
pub fn aggregate(per_fold: &[FoldLoss]) -> f64 {
    if per_fold.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = per_fold.iter().map(|f| f.loss.value).collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Held-out prediction for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOut {
    pub fold: usize,
    pub row: usize,
    pub prediction: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: ErrorReport,
    pub predictions: Vec<HeldOut>,
}

/// Fits on each fold's training rows and scores its test rows. Fold `k` is
/// fitted with seed `derive_seed([seed, k])`; folds run in parallel with
/// results identical to sequential execution.
pub fn cv_estimate(
    ds: &SpaceTimeDataset,
    partition: &FoldAssignment,
    learner: &dyn Learner,
    loss: LossFn,
    seed: u64,
) -> Result<CvOutcome> {
    let per_fold: Vec<Result<(FoldLoss, Vec<HeldOut>)>> = partition
        .folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| {
            let wrap = |e: Error| Error::FoldFit {
                fold: k,
                source: Box::new(e),
            };
            let rule = learner.fit(ds, &fold.train, derive_seed(&[seed, k as u64])).map_err(wrap)?;
            let pred = rule.predict_rows(ds, &fold.test).map_err(wrap)?;
            let truth: Vec<f64> = fold.test.iter().map(|&r| ds.y(r)).collect();
            let l = loss(&truth, &pred).map_err(wrap)?;
            let held = fold
                .test
                .iter()
                .zip(&pred)
                .map(|(&row, &prediction)| HeldOut {
                    fold: k,
                    row,
                    prediction,
                })
                .collect();
            Ok((FoldLoss { fold: k, loss: l }, held))
        })
        .collect();
    let mut losses = Vec::with_capacity(per_fold.len());
    let mut predictions = Vec::new();
    for r in per_fold {
        let (l, h) = r?;
        losses.push(l);
        predictions.extend(h);
    }
    let report = ErrorReport::new(partition.label, &learner.kind().to_string(), losses).with_dataset("", seed);
    Ok(CvOutcome { report, predictions })
}

fn score_all(rule: &dyn FittedRule, ds: &SpaceTimeDataset, loss: LossFn) -> Result<(LossValue, Vec<f64>)> {
    let rows = ds.usable_rows();
    if rows.is_empty() {
        return Err(Error::invalid("evaluation set has no observed outcomes"));
    }
    let pred = rule.predict_rows(ds, &rows)?;
    let truth: Vec<f64> = rows.iter().map(|&r| ds.y(r)).collect();
    Ok((loss(&truth, &pred)?, pred))
}

/// Loss of a trained rule over every held-out cell at locations absent from
/// the training data. Returns the report and predictions for each usable
/// holdout row in order.
pub fn true_interpolation_error(
    rule: &dyn FittedRule,
    training: &SpaceTimeDataset,
    holdout: &SpaceTimeDataset,
    loss: LossFn,
) -> Result<(ErrorReport, Vec<f64>)> {
    let overlap: Vec<String> = holdout
        .locations()
        .iter()
        .filter(|h| {
            training
                .locations()
                .iter()
                .any(|t| t.id == h.id || t.coords == h.coords)
        })
        .map(|h| h.id.clone())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::LocationOverlap(overlap));
    }
    let (l, pred) = score_all(rule, holdout, loss)?;
    let report = ErrorReport::new(EstimatorLabel::TrueGrid, &rule.kind().to_string(), vec![FoldLoss { fold: 0, loss: l }]);
    Ok((report, pred))
}

/// Loss of a trained rule over a validation set.
pub fn validation_error(rule: &dyn FittedRule, validation: &SpaceTimeDataset, loss: LossFn) -> Result<ErrorReport> {
    let (l, _) = score_all(rule, validation, loss)?;
    Ok(ErrorReport::new(
        EstimatorLabel::Validation,
        &rule.kind().to_string(),
        vec![FoldLoss { fold: 0, loss: l }],
    ))
}

/// Row positions (into the usable rows) drawn with replacement for resample `b`.
pub fn bootstrap_draw(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream(&[seed, b as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

#[derive(Debug, Clone)]
pub struct OobOutcome {
    pub report: ErrorReport,
    /// Resamples that left no row out.
    pub skipped: usize,
}

/// Out-of-bag bootstrap: rows are treated as exchangeable, so this is only
/// meaningful for independent data. Resample `b` is scored on the rows it
/// did not draw; resamples drawing every row are skipped and counted.
pub fn oob_bootstrap_estimate(
    ds: &SpaceTimeDataset,
    b: usize,
    learner: &dyn Learner,
    loss: LossFn,
    seed: u64,
) -> Result<OobOutcome> {
    if b == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    let usable = ds.usable_rows();
    let n = usable.len();
    let results: Vec<Result<Option<FoldLoss>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let draw = bootstrap_draw(n, seed, k);
            let mut drawn = vec![false; n];
            for &i in &draw {
                drawn[i] = true;
            }
            let out: Vec<usize> = (0..n).filter(|&i| !drawn[i]).map(|i| usable[i]).collect();
            if out.is_empty() {
                return Ok(None);
            }
            let train: Vec<usize> = draw.iter().map(|&i| usable[i]).collect();
            let wrap = |e: Error| Error::FoldFit {
                fold: k,
                source: Box::new(e),
            };
            let rule = learner.fit(ds, &train, derive_seed(&[seed, k as u64, 1])).map_err(wrap)?;
            let pred = rule.predict_rows(ds, &out).map_err(wrap)?;
            let truth: Vec<f64> = out.iter().map(|&r| ds.y(r)).collect();
            Ok(Some(FoldLoss {
                fold: k,
                loss: loss(&truth, &pred).map_err(wrap)?,
            }))
        })
        .collect();
    let mut per_fold = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(f) => per_fold.push(f),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} of {b} bootstrap resamples left no row out and were skipped");
    }
    if per_fold.is_empty() {
        return Err(Error::invalid("every bootstrap resample drew all rows"));
    }
    let report = ErrorReport::new(EstimatorLabel::OobBootstrap, &learner.kind().to_string(), per_fold).with_dataset("", seed);
    Ok(OobOutcome { report, skipped })
}
