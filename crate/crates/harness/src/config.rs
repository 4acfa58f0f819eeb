//! Study and case-study configuration files (TOML).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stcv_core::models::ModelSpec;
use stcv_core::partition::PartitionSpec;
use stcv_core::sim::{Dependence, ScenarioConfig};
use stcv_core::{ModelRegistry, PartitionRegistry};

use crate::error::{HarnessError, Result};

pub const DESK_REPLICATES: usize = 20;
pub const DEFAULT_BOOTSTRAP_B: usize = 300;
pub const DEFAULT_LOWESS_FRACTION: f64 = 2.0 / 3.0;

/// One scenario of a study: a row of the scenario table plus optional
/// overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub id: u32,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub n_observed: Option<usize>,
    #[serde(default)]
    pub days: Option<usize>,
    #[serde(default)]
    pub spatial: Option<Dependence>,
    #[serde(default)]
    pub temporal: Option<Dependence>,
}

impl ScenarioEntry {
    pub fn new(id: u32) -> Self {
        ScenarioEntry {
            id,
            replicates: None,
            n_observed: None,
            days: None,
            spatial: None,
            temporal: None,
        }
    }

    /// Scenario table row with overrides applied; `replicates` falls back
    /// to `default_replicates`.
    pub fn resolve(&self, default_replicates: usize) -> Result<ScenarioConfig> {
        let mut s = ScenarioConfig::get(self.id)?;
        s.replicates = self.replicates.unwrap_or(default_replicates);
        if let Some(n) = self.n_observed {
            s.n_observed = n;
        }
        if let Some(d) = self.days {
            s.days = d;
        }
        if let Some(d) = self.spatial {
            s.spatial = d;
        }
        if let Some(d) = self.temporal {
            s.temporal = d;
        }
        s.gp_config().validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Replicates for scenarios that do not set their own.
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_bootstrap_b")]
    pub bootstrap_b: usize,
    #[serde(default = "default_lowess_fraction")]
    pub lowess_fraction: f64,
    /// Also score each fitted rule on the unobserved grid.
    #[serde(default = "yes")]
    pub true_grid: bool,
    /// Replicates per scenario (counted from 0) that get per-cell
    /// conditional variances.
    #[serde(default)]
    pub condvar_replicates: usize,
    pub scenarios: Vec<ScenarioEntry>,
    pub models: Vec<ModelSpec>,
    pub estimators: Vec<PartitionSpec>,
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_replicates() -> usize {
    DESK_REPLICATES
}

fn default_bootstrap_b() -> usize {
    DEFAULT_BOOTSTRAP_B
}

fn default_lowess_fraction() -> f64 {
    DEFAULT_LOWESS_FRACTION
}

fn yes() -> bool {
    true
}

/// Naive 10-fold, LLO_10, LOLO and three buffered schemes.
pub fn default_estimators() -> Vec<PartitionSpec> {
    vec![
        PartitionSpec::new("naive_kfold").with_k(10).with_label("naive_cv10"),
        PartitionSpec::new("llo_k").with_k(10).with_label("llo_10"),
        PartitionSpec::new("lolo"),
        PartitionSpec::new("buffered").with_buffer_fraction(0.05).with_label("buffered_small"),
        PartitionSpec::new("buffered").with_buffer_fraction(0.15).with_label("buffered_medium"),
        PartitionSpec::new("buffered").with_buffer_fraction(0.30).with_label("buffered_large"),
    ]
}

pub fn default_models() -> Vec<ModelSpec> {
    vec![ModelSpec::new("ols"), ModelSpec::new("random_forest"), ModelSpec::new("kriging")]
}

impl Default for StudyConfig {
    /// The desk-scale battery: all eight scenarios at 20 replicates.
    fn default() -> Self {
        StudyConfig {
            master_seed: default_seed(),
            output_dir: default_output_dir(),
            replicates: DESK_REPLICATES,
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
            lowess_fraction: DEFAULT_LOWESS_FRACTION,
            true_grid: true,
            condvar_replicates: 5,
            scenarios: (1..=8).map(ScenarioEntry::new).collect(),
            models: default_models(),
            estimators: default_estimators(),
        }
    }
}

/// Label a partition spec reports under, resolved against a domain diameter.
pub fn estimator_name(spec: &PartitionSpec, diameter: f64) -> Result<String> {
    if let Some(l) = &spec.label {
        return Ok(l.clone());
    }
    Ok(PartitionRegistry::with_defaults().build(spec, diameter)?.label().to_string())
}

fn check_unique<'a>(what: &str, names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(HarnessError::config(format!("duplicate {what} name `{n}`")));
        }
    }
    Ok(())
}

fn check_specs(models: &[ModelSpec], estimators: &[PartitionSpec]) -> Result<()> {
    if models.is_empty() {
        return Err(HarnessError::config("`models` must not be empty"));
    }
    let reg = ModelRegistry::with_defaults();
    for m in models {
        reg.build(m)?;
    }
    check_unique("model", models.iter().map(ModelSpec::display_name))?;
    let preg = PartitionRegistry::with_defaults();
    for e in estimators {
        preg.build(e, 1.0)?;
    }
    let names = estimators
        .iter()
        .map(|e| estimator_name(e, 1.0))
        .collect::<Result<Vec<_>>>()?;
    check_unique("estimator", names.iter().map(String::as_str))
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("study config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(HarnessError::config("`scenarios` must not be empty"));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::config("`estimators` must not be empty"));
        }
        if self.bootstrap_b == 0 {
            return Err(HarnessError::config("`bootstrap_b` must be at least 1"));
        }
        if !(self.lowess_fraction > 0.0 && self.lowess_fraction <= 1.0) {
            return Err(HarnessError::config("`lowess_fraction` must lie in (0, 1]"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.scenarios {
            if !ids.insert(s.id) {
                return Err(HarnessError::config(format!("scenario {} listed twice", s.id)));
            }
            let r = s.resolve(self.replicates)?;
            if r.replicates == 0 {
                return Err(HarnessError::config(format!("scenario {} has zero replicates", s.id)));
            }
        }
        check_specs(&self.models, &self.estimators)
    }

    /// Overrides every scenario's replicate count.
    pub fn with_replicates(mut self, n: usize) -> Self {
        self.replicates = n;
        for s in &mut self.scenarios {
            s.replicates = None;
        }
        self
    }

    pub fn resolved_scenarios(&self) -> Result<Vec<ScenarioConfig>> {
        self.scenarios.iter().map(|s| s.resolve(self.replicates)).collect()
    }
}

/// Generated stand-in for a monitor network when no input file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureConfig {
    #[serde(default = "default_monitors")]
    pub monitors: usize,
    #[serde(default = "default_weeks")]
    pub weeks: usize,
    #[serde(default = "default_fixture_seed")]
    pub seed: u64,
}

fn default_monitors() -> usize {
    30
}

fn default_weeks() -> usize {
    22
}

fn default_fixture_seed() -> u64 {
    2008
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            monitors: default_monitors(),
            weeks: default_weeks(),
            seed: default_fixture_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    /// Dataset CSV; the generated fixture is used when absent.
    #[serde(default)]
    pub input_csv: Option<PathBuf>,
    #[serde(default = "default_intervals")]
    pub interval_weeks: Vec<u32>,
    #[serde(default = "default_pollutant")]
    pub pollutant: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_min_locations")]
    pub min_locations: usize,
    #[serde(default = "default_case_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fixture: FixtureConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    #[serde(default = "default_case_estimators")]
    pub estimators: Vec<PartitionSpec>,
}

fn default_intervals() -> Vec<u32> {
    vec![1, 2, 4, 8]
}

fn default_pollutant() -> String {
    "ozone".into()
}

fn default_min_locations() -> usize {
    10
}

fn default_case_output_dir() -> PathBuf {
    PathBuf::from("case_study")
}

pub fn default_case_estimators() -> Vec<PartitionSpec> {
    vec![
        PartitionSpec::new("naive_kfold").with_k(10).with_label("naive_cv10"),
        PartitionSpec::new("llo_k").with_k(10).with_label("llo_10"),
        PartitionSpec::new("lolo"),
    ]
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        CaseStudyConfig {
            input_csv: None,
            interval_weeks: default_intervals(),
            pollutant: default_pollutant(),
            seed: default_seed(),
            min_locations: default_min_locations(),
            output_dir: default_case_output_dir(),
            fixture: FixtureConfig::default(),
            models: default_models(),
            estimators: default_case_estimators(),
        }
    }
}

impl CaseStudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CaseStudyConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.interval_weeks.is_empty() {
            return Err(HarnessError::config("`interval_weeks` must not be empty"));
        }
        if let Some(w) = self.interval_weeks.iter().find(|w| ![1, 2, 4, 8].contains(*w)) {
            return Err(HarnessError::config(format!("interval length {w} not in {{1, 2, 4, 8}} weeks")));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::config("`estimators` must not be empty"));
        }
        if self.min_locations < 2 {
            return Err(HarnessError::config("`min_locations` must be at least 2"));
        }
        if self.fixture.monitors < 2 || self.fixture.weeks == 0 {
            return Err(HarnessError::config("fixture needs at least 2 monitors and 1 week"));
        }
        check_specs(&self.models, &self.estimators)
    }
}

/// Annotated example of both configuration files.
pub const CONFIG_SCHEMA: &str = r#"# ---- study configuration (stcv study --config FILE) ----
master_seed = 42             # u64; with the config, fixes every output cell
output_dir = "results"       # where aggregate.csv, folds.csv, condvar.csv go
replicates = 20              # default per scenario; --replicates overrides
bootstrap_b = 300            # bootstrap resamples for plot bands, >= 1
lowess_fraction = 0.6667     # smoother span in (0, 1]
true_grid = true             # score each rule on the unobserved grid
condvar_replicates = 5       # replicates 0..n also write per-cell conditional variances

[[scenarios]]                # ids 1..=8 of the scenario table
id = 1
# replicates = 20            # optional per-scenario overrides:
# n_observed = 50
# days = 10
# spatial = "low"            # "low" | "moderate"
# temporal = "moderate"

[[scenarios]]
id = 3

[[models]]
kind = "ols"                 # "ols" | "random_forest" | "kriging"
# name = "lm"                # display name, defaults to kind

[[models]]
kind = "random_forest"
n_trees = 200                # also: mtry, min_leaf, max_depth

[[models]]
kind = "kriging"             # also: tol, min_nugget_share, max_sweeps, or all of
                             # sigma2, v_s, v_t, nugget to fix the covariance

[[estimators]]
scheme = "naive_kfold"       # "naive_kfold" | "llo_k" | "lolo" | "buffered"
k = 10
label = "naive_cv10"         # column value in the outputs

[[estimators]]
scheme = "lolo"

[[estimators]]
scheme = "buffered"
buffer_fraction = 0.15       # of the domain diameter; or buffer_distance
label = "buffered_medium"

# ---- case-study configuration (stcv case-study --config FILE) ----
# input_csv = "monitors.csv" # dataset CSV; generated fixture when absent
# interval_weeks = [1, 2, 4, 8]
# pollutant = "ozone"
# seed = 42
# min_locations = 10
# output_dir = "case_study"
# [fixture]
# monitors = 30
# weeks = 22
# seed = 2008
# models / estimators as above; defaults: ols, random_forest, kriging with
# naive_cv10, llo_10 and lolo
"#;
