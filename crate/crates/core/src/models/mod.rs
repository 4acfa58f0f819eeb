//! Prediction rules.
//!
//! A [`Learner`] is an unfitted model configuration; fitting it on a set of
//! training rows yields an immutable [`FittedRule`]. Learners are created by
//! name from a [`ModelSpec`] through the [`ModelRegistry`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};

pub mod forest;
pub mod kriging;
pub mod ols;

pub use forest::{ForestParams, RandomForest};
pub use kriging::{Kriging, KrigingConfig, KrigingParams};
pub use ols::Ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ols,
    RandomForest,
    Kriging,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ols => "ols",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Kriging => "kriging",
        })
    }
}

/// A single prediction target: covariates plus where and when.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub coords: [f64; 2],
    pub time: i64,
    pub covariates: &'a [f64],
}

impl<'a> Query<'a> {
    pub fn from_row(ds: &'a SpaceTimeDataset, row: usize) -> Self {
        Query {
            coords: ds.coords(row),
            time: ds.cell(row).time,
            covariates: ds.covariates(row),
        }
    }
}

pub trait Learner: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Fits on `rows` of `ds` (all must be usable). `seed` feeds any
    /// randomness in the fit.
    fn fit(&self, ds: &SpaceTimeDataset, rows: &[usize], seed: u64) -> Result<Box<dyn FittedRule>>;
}

pub trait FittedRule: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;

    /// Covariate dimension the rule was trained with.
    fn p(&self) -> usize;

    fn predict_one(&self, q: &Query<'_>) -> f64;

    /// Key-value description of the fitted state.
    fn describe(&self) -> String;

    fn predict(&self, q: &Query<'_>) -> Result<f64> {
        if q.covariates.len() != self.p() {
            return Err(Error::invalid(format!(
                "query has {} covariates, rule expects {}",
                q.covariates.len(),
                self.p()
            )));
        }
        Ok(self.predict_one(q))
    }

    fn predict_rows(&self, ds: &SpaceTimeDataset, rows: &[usize]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&r| self.predict(&Query::from_row(ds, r)))
            .collect()
    }
}

pub(crate) fn check_rows(ds: &SpaceTimeDataset, rows: &[usize], min: usize) -> Result<()> {
    if rows.len() < min {
        return Err(Error::invalid(format!(
            "need at least {min} training observations, got {}",
            rows.len()
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| !ds.is_usable(r)) {
        return Err(Error::invalid(format!("training row {r} has a missing outcome")));
    }
    Ok(())
}

/// Configuration-level description of a model: a registered kind plus
/// numeric hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: String,
    /// Display name; defaults to `kind`.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn new(kind: &str) -> Self {
        ModelSpec {
            kind: kind.to_string(),
            name: None,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.kind)
    }

    pub(crate) fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::invalid(format!(
                "model `{}` does not accept parameter `{k}` (allowed: {})",
                self.kind,
                allowed.join(", ")
            )));
        }
        Ok(())
    }

    pub(crate) fn count(&self, key: &str) -> Result<Option<usize>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(&v) if v >= 0.0 && v.fract() == 0.0 => Ok(Some(v as usize)),
            Some(v) => Err(Error::invalid(format!("`{key}` must be a non-negative integer, got {v}"))),
        }
    }
}

type ModelFactory = fn(&ModelSpec) -> Result<Box<dyn Learner>>;

/// Name → constructor table for prediction rules.
pub struct ModelRegistry {
    entries: BTreeMap<String, ModelFactory>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("ols", |s| {
            s.reject_unknown(&[])?;
            Ok(Box::new(Ols))
        });
        r.register("random_forest", |s| Ok(Box::new(RandomForest::new(ForestParams::from_spec(s)?)?)));
        r.register("kriging", |s| Ok(Box::new(Kriging::new(KrigingConfig::from_spec(s)?)?)));
        r
    }

    pub fn register(&mut self, name: &str, factory: ModelFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn build(&self, spec: &ModelSpec) -> Result<Box<dyn Learner>> {
        let f = self.entries.get(&spec.kind).ok_or_else(|| Error::UnknownStrategy {
            kind: "model",
            name: spec.kind.clone(),
        })?;
        f(spec)
    }
}
