//! Monitor-network pipeline: per-interval cross-validation of each model,
//! plus a generator for a synthetic network with the same covariate schema.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stcv_core::data::DatasetBuilder;
use stcv_core::estimate::cv_estimate;
use stcv_core::rng::{derive_seed, stream};
use stcv_core::sim::{sample_gp, sq_exp_covariance};
use stcv_core::{mse_loss, Learner, ModelRegistry, PartitionRegistry, SpaceTimeDataset};

use crate::config::{estimator_name, CaseStudyConfig, FixtureConfig};
use crate::error::{HarnessError, Result};

pub const DAYS_PER_WEEK: i64 = 7;

/// Land-use, meteorological, satellite and chemical-transport covariates
/// of the monitor network (coordinates and date are the location and time).
pub const MONITOR_COVARIATES: [&str; 18] = [
    "elevation_m",
    "dew_point_k",
    "boundary_layer_height_m",
    "surface_pressure_pa",
    "relative_humidity_pct",
    "temperature_2m_k",
    "wind_u_ms",
    "wind_v_ms",
    "inverse_distance_fire_per_m",
    "traffic_1km",
    "agricultural_land_1km_pct",
    "urban_land_1km_pct",
    "vegetation_land_1km_pct",
    "ndvi",
    "no2_log_molecules_cm2",
    "wrf_chem_co_log",
    "wrf_chem_pm25_log",
    "wrf_chem_ozone_log8hrmax",
];

pub const INTERVAL_COLUMNS: [&str; 12] = [
    "pollutant",
    "interval_weeks",
    "interval",
    "start_time",
    "end_time",
    "model",
    "estimator",
    "estimate",
    "n_locations",
    "n_cells",
    "seed",
    "error",
];

/// Fixture outcome components: a smooth persistent site effect, a
/// nonlinear response to temperature, a regional daily signal carried by
/// the chemical-transport covariate, and measurement noise.
const SITE_SD: f64 = 0.5;
const SITE_RANGE: f64 = 4.0;
const TEMPERATURE_EFFECT: f64 = 0.35;
const NOISE_SD: f64 = 0.05;
const MISSING_SHARE: f64 = 0.04;

/// Synthetic monitor network: `monitors` sites over a 10° × 9.5° box,
/// daily values for `weeks` weeks. The outcome depends on location through
/// a spatially smooth site effect that no covariate carries, so a flexible
/// model does well when other days of the same site are in training and
/// poorly at new sites.
pub fn generate_fixture(cfg: &FixtureConfig) -> Result<SpaceTimeDataset> {
    let mut rng = stream(&[cfg.seed]);
    let n = cfg.monitors;
    let days = cfg.weeks as i64 * DAYS_PER_WEEK;
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [-124.0 + 10.0 * rng.random::<f64>(), 32.5 + 9.5 * rng.random::<f64>()])
        .collect();
    let cov = sq_exp_covariance(&coords, SITE_RANGE, 1e-8)?;
    let site: Vec<f64> = sample_gp(&vec![0.0; n], &cov, &mut rng)?
        .into_iter()
        .map(|v| SITE_SD * v)
        .collect();
    let regional: Vec<f64> = (0..days)
        .map(|t| {
            let t = t as f64;
            0.12 * (2.0 * std::f64::consts::PI * t / 45.0).sin() + 0.05 * (t / 9.0).cos()
        })
        .collect();
    let statics: Vec<[f64; 6]> = (0..n)
        .map(|_| {
            // a fourth, unreported class (water, barren) keeps the shares free
            let land: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
            let total: f64 = land.iter().sum();
            [
                2500.0 * rng.random::<f64>(),
                (8.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)).exp(),
                100.0 * land[0] / total,
                100.0 * land[1] / total,
                100.0 * land[2] / total,
                0.1 + 0.7 * rng.random::<f64>(),
            ]
        })
        .collect();

    let mut b = DatasetBuilder::new(MONITOR_COVARIATES.iter().map(|s| s.to_string()).collect());
    let ids: Vec<String> = (0..n).map(|i| format!("m{i:03}")).collect();
    for (id, c) in ids.iter().zip(&coords) {
        b.location(id, *c)?;
    }
    for t in 0..days {
        for i in 0..n {
            let mut z = || rng.sample::<f64, _>(StandardNormal);
            let temp_z = z();
            let x = vec![
                statics[i][0],
                283.0 + 4.0 * z(),
                800.0 + 300.0 * z(),
                100_000.0 + 800.0 * z(),
                (50.0 + 15.0 * z()).clamp(1.0, 100.0),
                295.0 + 6.0 * temp_z,
                3.0 * z(),
                3.0 * z(),
                1.0 / (5_000.0 + 40_000.0 * z().abs()),
                statics[i][1],
                statics[i][2],
                statics[i][3],
                statics[i][4],
                statics[i][5],
                35.0 + 0.5 * z(),
                10.0 + 0.5 * z(),
                3.0 + 0.5 * z(),
                3.7 + regional[t as usize] + 0.02 * z(),
            ];
            // centred so the effect has no linear component in temperature
            let nonlinear = TEMPERATURE_EFFECT * (temp_z * temp_z - 1.0) / std::f64::consts::SQRT_2;
            let y = 3.7 + site[i] + regional[t as usize] + nonlinear + NOISE_SD * z();
            let missing = rng.random::<f64>() < MISSING_SHARE;
            b.observe(&ids[i], t, (!missing).then_some(y), Some(x))?;
        }
    }
    Ok(b.build()?)
}

/// Cross-validated error of one model under one scheme on one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub pollutant: String,
    pub interval_weeks: u32,
    pub interval: usize,
    pub start_time: i64,
    pub end_time: i64,
    pub model: String,
    pub estimator: String,
    pub estimate: Option<f64>,
    pub n_locations: usize,
    pub n_cells: usize,
    pub seed: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseStudyResults {
    /// Rows for every configured interval length.
    pub intervals: Vec<IntervalRow>,
    /// One-week intervals.
    pub weekly: Vec<IntervalRow>,
}

fn write_rows(path: &Path, rows: &[IntervalRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(INTERVAL_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl CaseStudyResults {
    pub fn n_failures(&self) -> usize {
        self.intervals.iter().chain(&self.weekly).filter(|r| r.error.is_some()).count()
    }

    /// Writes `case_intervals.csv` and `weekly.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("case_intervals.csv"), &self.intervals)?;
        write_rows(&dir.join("weekly.csv"), &self.weekly)
    }
}

/// Mean estimate per (model, estimator) over the given rows.
pub fn mean_table(rows: &[IntervalRow]) -> BTreeMap<(String, String), f64> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.estimate {
            let a = acc.entry((r.model.clone(), r.estimator.clone())).or_default();
            a.0 += e;
            a.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Model with the smallest entry for `estimator` in a mean table.
pub fn best_model(table: &BTreeMap<(String, String), f64>, estimator: &str) -> Option<String> {
    table
        .iter()
        .filter(|((_, e), _)| e == estimator)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|((m, _), _)| m.clone())
}

struct Models {
    learners: Vec<(String, Box<dyn Learner>)>,
}

/// Splits the study period into consecutive `weeks`-week blocks; a
/// trailing partial block is dropped.
pub fn interval_bounds(ds: &SpaceTimeDataset, weeks: u32) -> Vec<(i64, i64)> {
    let times = ds.times();
    let (Some(&first), Some(&last)) = (times.iter().min(), times.iter().max()) else {
        return Vec::new();
    };
    let len = weeks as i64 * DAYS_PER_WEEK;
    let n = (last - first + 1) / len;
    let dropped = (last - first + 1) % len;
    if dropped > 0 {
        log::warn!("{weeks}-week intervals: last {dropped} days do not fill an interval and are skipped");
    }
    (0..n).map(|k| (first + k * len, first + (k + 1) * len)).collect()
}

fn run_interval(
    ds: &SpaceTimeDataset,
    cfg: &CaseStudyConfig,
    models: &Models,
    weeks: u32,
    k: usize,
    (start, end): (i64, i64),
) -> Result<Vec<IntervalRow>> {
    let sub = ds.subset(&ds.rows_in_time_window(start, end))?;
    let n_locations = sub.usable_rows_by_location().iter().filter(|r| !r.is_empty()).count();
    if n_locations < cfg.min_locations {
        log::warn!(
            "{weeks}-week interval {k} [{start}, {end}): {n_locations} locations with data, below the floor of {}; skipped",
            cfg.min_locations
        );
        return Ok(Vec::new());
    }
    let diameter = sub.spatial_diameter();
    let registry = PartitionRegistry::with_defaults();
    let mut rows = Vec::new();
    for (e, spec) in cfg.estimators.iter().enumerate() {
        let name = estimator_name(spec, diameter)?;
        let pseed = derive_seed(&[cfg.seed, weeks as u64, k as u64, 1, e as u64]);
        let fa = registry.build(spec, diameter).and_then(|p| p.partition(&sub, pseed));
        for (m, (model, learner)) in models.learners.iter().enumerate() {
            let seed = derive_seed(&[cfg.seed, weeks as u64, k as u64, 2, m as u64]);
            let res = fa
                .as_ref()
                .map_err(|err| err.to_string())
                .and_then(|fa| cv_estimate(&sub, fa, learner.as_ref(), mse_loss, seed).map_err(|err| err.to_string()));
            rows.push(IntervalRow {
                pollutant: cfg.pollutant.clone(),
                interval_weeks: weeks,
                interval: k,
                start_time: start,
                end_time: end,
                model: model.clone(),
                estimator: name.clone(),
                estimate: res.as_ref().ok().map(|o| o.report.estimate),
                n_locations,
                n_cells: sub.n_usable(),
                seed,
                error: res.err(),
            });
        }
    }
    Ok(rows)
}

fn run_length(ds: &SpaceTimeDataset, cfg: &CaseStudyConfig, models: &Models, weeks: u32) -> Result<Vec<IntervalRow>> {
    let bounds = interval_bounds(ds, weeks);
    let parts: Vec<Result<Vec<IntervalRow>>> = bounds
        .par_iter()
        .enumerate()
        .map(|(k, &b)| run_interval(ds, cfg, models, weeks, k, b))
        .collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    // model-major within each interval, matching the study outputs
    rows.sort_by(|a, b| a.interval.cmp(&b.interval).then(model_rank(models, &a.model).cmp(&model_rank(models, &b.model))));
    Ok(rows)
}

fn model_rank(models: &Models, name: &str) -> usize {
    models.learners.iter().position(|(m, _)| m == name).unwrap_or(usize::MAX)
}

/// Runs every configured interval length on `ds`, plus the weekly series.
pub fn run_case_study_on(ds: &SpaceTimeDataset, cfg: &CaseStudyConfig) -> Result<CaseStudyResults> {
    cfg.validate()?;
    let reg = ModelRegistry::with_defaults();
    let models = Models {
        learners: cfg
            .models
            .iter()
            .map(|m| Ok((m.display_name().to_string(), reg.build(m)?)))
            .collect::<Result<_>>()?,
    };
    let mut out = CaseStudyResults::default();
    let mut lengths = cfg.interval_weeks.clone();
    lengths.sort_unstable();
    lengths.dedup();
    for &w in &lengths {
        let rows = run_length(ds, cfg, &models, w)?;
        log::info!("{w}-week intervals: {} rows", rows.len());
        if w == 1 {
            out.weekly = rows.clone();
        }
        out.intervals.extend(rows);
    }
    if !lengths.contains(&1) {
        out.weekly = run_length(ds, cfg, &models, 1)?;
    }
    Ok(out)
}

/// Loads the configured input (or generates the fixture) and runs the
/// pipeline. Returns the dataset alongside the results.
pub fn run_case_study(cfg: &CaseStudyConfig) -> Result<(SpaceTimeDataset, CaseStudyResults)> {
    let ds = match &cfg.input_csv {
        Some(p) => SpaceTimeDataset::from_csv_path(p).map_err(|e| match e {
            stcv_core::Error::Parse { line, message } => HarnessError::Schema {
                path: p.display().to_string(),
                message: format!("line {line}: {message}"),
            },
            other => other.into(),
        })?,
        None => generate_fixture(&cfg.fixture)?,
    };
    let res = run_case_study_on(&ds, cfg)?;
    Ok((ds, res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_fixture(weeks: usize) -> SpaceTimeDataset {
        generate_fixture(&FixtureConfig {
            monitors: 14,
            weeks,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn fixture_shape_and_schema() {
        let ds = small_fixture(3);
        assert_eq!(ds.n_locations(), 14);
        assert_eq!(ds.times().len(), 21);
        assert_eq!(ds.n_cells(), 14 * 21);
        assert_eq!(ds.covariate_names(), MONITOR_COVARIATES.map(String::from).as_slice());
        assert!(ds.n_usable() < ds.n_cells());
        assert!(ds.n_usable() > ds.n_cells() * 9 / 10);
        assert_eq!(ds, small_fixture(3));
    }

    #[test]
    fn intervals_partition_the_period() {
        let ds = small_fixture(5);
        assert_eq!(interval_bounds(&ds, 1).len(), 5);
        assert_eq!(interval_bounds(&ds, 2), vec![(0, 14), (14, 28)]);
        assert!(interval_bounds(&ds, 8).is_empty());
    }

    #[test]
    fn location_floor_skips_intervals() {
        let ds = small_fixture(2);
        let cfg = CaseStudyConfig {
            min_locations: 15,
            interval_weeks: vec![1],
            models: vec![stcv_core::models::ModelSpec::new("ols")],
            ..CaseStudyConfig::default()
        };
        let res = run_case_study_on(&ds, &cfg).unwrap();
        assert!(res.intervals.is_empty() && res.weekly.is_empty());
    }

    #[test]
    fn tables_and_rankings() {
        let row = |m: &str, e: &str, v: f64| IntervalRow {
            pollutant: "ozone".into(),
            interval_weeks: 1,
            interval: 0,
            start_time: 0,
            end_time: 7,
            model: m.into(),
            estimator: e.into(),
            estimate: Some(v),
            n_locations: 30,
            n_cells: 210,
            seed: 0,
            error: None,
        };
        let rows = vec![
            row("a", "naive", 1.0),
            row("a", "naive", 3.0),
            row("b", "naive", 2.5),
            row("a", "lolo", 4.0),
            row("b", "lolo", 3.0),
        ];
        let t = mean_table(&rows);
        assert_eq!(t[&("a".to_string(), "naive".to_string())], 2.0);
        assert_eq!(best_model(&t, "naive").as_deref(), Some("a"));
        assert_eq!(best_model(&t, "lolo").as_deref(), Some("b"));
        assert_eq!(best_model(&t, "llo"), None);
    }
}
