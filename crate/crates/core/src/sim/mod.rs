//! Gaussian-process simulation on a square lattice.
//!
//! Six covariates share a sinusoidal mean and the separable covariance
//! `(Σ_s + εI) ⊗ (Σ_t + εI)`; the outcome adds a GP residual with the same
//! covariance to a nonlinear function of the first three covariates. A
//! random subset of interior lattice points is observed; the rest is the
//! holdout.

mod covariance;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBuilder, SpaceTimeDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, fisher_yates, open_unit, stream};

pub use covariance::{
    covariate_mean, outcome_mean, sample_gp, separable_spacetime_cov, sq_exp_covariance, temporal_covariance,
    KronSampler, DEFAULT_CELL_CAP,
};

pub const N_COVARIATES: usize = 6;
pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_GRID_SIDE: usize = 20;
pub const DEFAULT_EDGE_BUFFER: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    Low,
    Moderate,
}

impl Dependence {
    /// Distance at which the correlation falls to one half.
    pub fn half_distance_spatial(self) -> f64 {
        match self {
            Dependence::Low => 1.5,
            Dependence::Moderate => 5.0,
        }
    }

    pub fn half_lag_temporal(self) -> f64 {
        match self {
            Dependence::Low => 1.0,
            Dependence::Moderate => 2.0,
        }
    }
}

/// Range `v` with `exp(-d²/v²) = 1/2` at distance `d`.
pub fn range_for_half_correlation(d: f64) -> f64 {
    d / std::f64::consts::LN_2.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSimConfig {
    pub grid_side: usize,
    pub n_days: usize,
    pub v_s: f64,
    pub v_t: f64,
    pub eps: f64,
    pub n_observed: usize,
    /// Points within this many lattice units of the boundary frame are never
    /// observed.
    pub edge_buffer: f64,
}

impl GpSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_side < 2 || self.n_days < 1 {
            return Err(Error::invalid("grid_side must be >= 2 and n_days >= 1"));
        }
        if !(self.v_s > 0.0 && self.v_t > 0.0 && self.eps > 0.0 && self.edge_buffer >= 0.0) {
            return Err(Error::invalid(format!("invalid simulation scales: {self:?}")));
        }
        let eligible = eligible_points(self.grid_side, self.edge_buffer).len();
        if self.n_observed > eligible || self.n_observed < 2 {
            return Err(Error::invalid(format!(
                "n_observed = {} but {eligible} interior points are eligible",
                self.n_observed
            )));
        }
        Ok(())
    }

    pub fn n_locations(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        lattice(self.grid_side)
    }

    pub fn times(&self) -> Vec<i64> {
        (1..=self.n_days as i64).collect()
    }

    pub fn spatial_cov(&self) -> Result<DMatrix<f64>> {
        sq_exp_covariance(&self.coords(), self.v_s, self.eps)
    }

    pub fn temporal_cov(&self) -> Result<DMatrix<f64>> {
        temporal_covariance(&self.times(), self.v_t, self.eps)
    }
}

/// One row of the scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u32,
    pub replicates: usize,
    pub n_observed: usize,
    pub spatial: Dependence,
    pub temporal: Dependence,
    pub locations: usize,
    pub days: usize,
}

impl ScenarioConfig {
    pub fn table() -> [ScenarioConfig; 8] {
        let row = |id, n_observed, spatial, days| ScenarioConfig {
            id,
            replicates: 100,
            n_observed,
            spatial,
            temporal: Dependence::Moderate,
            locations: 400,
            days,
        };
        use Dependence::{Low, Moderate};
        [
            row(1, 50, Low, 10),
            row(2, 50, Low, 20),
            row(3, 50, Moderate, 10),
            row(4, 50, Moderate, 20),
            row(5, 150, Low, 10),
            row(6, 150, Low, 20),
            row(7, 150, Moderate, 10),
            row(8, 150, Moderate, 20),
        ]
    }

    pub fn get(id: u32) -> Result<ScenarioConfig> {
        Self::table()
            .into_iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {id}; expected 1..=8")))
    }

    pub fn gp_config(&self) -> GpSimConfig {
        let side = (self.locations as f64).sqrt().round() as usize;
        GpSimConfig {
            grid_side: side,
            n_days: self.days,
            v_s: range_for_half_correlation(self.spatial.half_distance_spatial()),
            v_t: range_for_half_correlation(self.temporal.half_lag_temporal()),
            eps: DEFAULT_EPS,
            n_observed: self.n_observed,
            edge_buffer: DEFAULT_EDGE_BUFFER,
        }
    }
}

/// Lattice points `(x, y)` with `x, y ∈ 1..=side`; index `(y - 1) · side + (x - 1)`.
pub fn lattice(side: usize) -> Vec<[f64; 2]> {
    (0..side * side)
        .map(|i| [(i % side + 1) as f64, (i / side + 1) as f64])
        .collect()
}

/// Lattice indices farther than `edge_buffer` from the frame at 0 and `side + 1`.
pub fn eligible_points(side: usize, edge_buffer: f64) -> Vec<usize> {
    let frame = (side + 1) as f64;
    lattice(side)
        .iter()
        .enumerate()
        .filter(|(_, p)| p[0].min(p[1]).min(frame - p[0]).min(frame - p[1]) > edge_buffer)
        .map(|(i, _)| i)
        .collect()
}

/// Uniform sample without replacement of `n` eligible lattice points, sorted.
pub fn select_observed<R: rand::Rng + ?Sized>(
    side: usize,
    n: usize,
    edge_buffer: f64,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut pool = eligible_points(side, edge_buffer);
    if pool.len() < n {
        return Err(Error::invalid(format!(
            "only {} eligible points for {n} observed locations",
            pool.len()
        )));
    }
    fisher_yates(&mut pool, rng);
    let mut picked = pool[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// A simulated field over the whole lattice. Cell `loc · n_days + (day - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedField {
    pub config: GpSimConfig,
    pub scenario: Option<u32>,
    pub replicate: u64,
    pub seed: u64,
    pub u: [f64; 4],
    /// Per cell, `X1..X6`.
    pub covariates: Vec<[f64; N_COVARIATES]>,
    pub y: Vec<f64>,
    /// Observed lattice indices, ascending.
    pub observed: Vec<usize>,
}

pub fn covariate_names() -> Vec<String> {
    (1..=N_COVARIATES).map(|j| format!("x{j}")).collect()
}

/// Draws a field with RNG stream `seed`: the four `u` values, then `X1..X6`,
/// then the outcome residual, then the observed locations.
pub fn simulate_field(cfg: &GpSimConfig, seed: u64) -> Result<SimulatedField> {
    cfg.validate()?;
    let mut rng = stream(&[seed]);
    let u = [
        open_unit(&mut rng),
        open_unit(&mut rng),
        open_unit(&mut rng),
        open_unit(&mut rng),
    ];
    let coords = cfg.coords();
    let m = cfg.n_days;
    let sampler = KronSampler::new(&cfg.spatial_cov()?, &cfg.temporal_cov()?)?;
    let n = sampler.n_cells();
    let mu_x: Vec<f64> = (0..n)
        .map(|c| covariate_mean(coords[c / m], (c % m + 1) as f64, u))
        .collect();
    let mut covariates = vec![[0.0; N_COVARIATES]; n];
    for j in 0..N_COVARIATES {
        let z = sampler.draw(&mut rng);
        for c in 0..n {
            covariates[c][j] = mu_x[c] + z[c];
        }
    }
    let resid = sampler.draw(&mut rng);
    let y = (0..n)
        .map(|c| {
            let x = &covariates[c];
            outcome_mean(x[0], x[1], x[2]) + resid[c]
        })
        .collect();
    let observed = select_observed(cfg.grid_side, cfg.n_observed, cfg.edge_buffer, &mut rng)?;
    Ok(SimulatedField {
        config: cfg.clone(),
        scenario: None,
        replicate: 0,
        seed,
        u,
        covariates,
        y,
        observed,
    })
}

/// Seed of replicate `replicate` of `scenario` under `master_seed`.
pub fn replicate_seed(master_seed: u64, scenario: u32, replicate: u64) -> u64 {
    derive_seed(&[master_seed, scenario as u64, replicate])
}

pub fn simulate_replicate(scenario: &ScenarioConfig, replicate: u64, master_seed: u64) -> Result<SimulatedField> {
    let seed = replicate_seed(master_seed, scenario.id, replicate);
    let mut f = simulate_field(&scenario.gp_config(), seed)?;
    f.scenario = Some(scenario.id);
    f.replicate = replicate;
    Ok(f)
}

impl SimulatedField {
    pub fn n_days(&self) -> usize {
        self.config.n_days
    }

    pub fn cell(&self, loc: usize, day: i64) -> usize {
        loc * self.config.n_days + (day as usize - 1)
    }

    pub fn is_observed(&self, loc: usize) -> bool {
        self.observed.binary_search(&loc).is_ok()
    }

    /// Lattice indices not observed, ascending.
    pub fn holdout(&self) -> Vec<usize> {
        (0..self.config.n_locations()).filter(|&l| !self.is_observed(l)).collect()
    }

    fn dataset(&self, locs: &[usize]) -> Result<SpaceTimeDataset> {
        let coords = self.config.coords();
        let mut b = DatasetBuilder::new(covariate_names());
        for &l in locs {
            let id = l.to_string();
            b.location(&id, coords[l])?;
            for day in 1..=self.n_days() as i64 {
                let c = self.cell(l, day);
                b.observe(&id, day, Some(self.y[c]), Some(self.covariates[c].to_vec()))?;
            }
        }
        b.build()
    }

    /// Observed locations over every day; location `k` is `observed[k]` and
    /// its id is the lattice index.
    pub fn observed_dataset(&self) -> Result<SpaceTimeDataset> {
        self.dataset(&self.observed)
    }

    /// Unobserved locations over every day.
    pub fn holdout_dataset(&self) -> Result<SpaceTimeDataset> {
        self.dataset(&self.holdout())
    }

    pub fn full_dataset(&self) -> Result<SpaceTimeDataset> {
        self.dataset(&(0..self.config.n_locations()).collect::<Vec<_>>())
    }

    /// Key-value description: scenario, seeds, `u` draws and scales.
    pub fn metadata(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        if let Some(id) = self.scenario {
            let _ = writeln!(s, "scenario = {id}");
        }
        let _ = writeln!(s, "replicate = {}", self.replicate);
        let _ = writeln!(s, "seed = {}", self.seed);
        for (i, u) in self.u.iter().enumerate() {
            let _ = writeln!(s, "u{} = {}", i + 1, crate::data::fmt_f64(*u));
        }
        let _ = writeln!(s, "grid_side = {}", c.grid_side);
        let _ = writeln!(s, "n_days = {}", c.n_days);
        let _ = writeln!(s, "v_s = {}", crate::data::fmt_f64(c.v_s));
        let _ = writeln!(s, "v_t = {}", crate::data::fmt_f64(c.v_t));
        let _ = writeln!(s, "eps = {}", crate::data::fmt_f64(c.eps));
        let _ = writeln!(s, "n_observed = {}", c.n_observed);
        let _ = writeln!(s, "edge_buffer = {}", c.edge_buffer);
        s
    }

    /// Writes `observed.csv`, `holdout.csv` and `metadata.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.observed_dataset()?.to_csv_path(dir.join("observed.csv"))?;
        self.holdout_dataset()?.to_csv_path(dir.join("holdout.csv"))?;
        std::fs::write(dir.join("metadata.txt"), self.metadata())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GpSimConfig {
        GpSimConfig {
            grid_side: 8,
            n_days: 4,
            v_s: 2.0,
            v_t: 1.5,
            eps: 1e-6,
            n_observed: 10,
            edge_buffer: 1.0,
        }
    }

    #[test]
    fn eligibility_counts() {
        assert_eq!(eligible_points(20, 2.0).len(), 256);
        assert_eq!(eligible_points(20, 0.0).len(), 400);
        let lat = lattice(20);
        for i in eligible_points(20, 2.0) {
            assert!(lat[i].iter().all(|&c| (3.0..=18.0).contains(&c)));
        }
    }

    #[test]
    fn selection_is_distinct_and_interior() {
        let mut rng = stream(&[4]);
        for n in [50, 150] {
            let s = select_observed(20, n, 2.0, &mut rng).unwrap();
            assert_eq!(s.len(), n);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            let ok = eligible_points(20, 2.0);
            assert!(s.iter().all(|i| ok.contains(i)));
        }
        assert!(select_observed(20, 257, 2.0, &mut rng).is_err());
    }

    #[test]
    fn scenario_table_rows() {
        let t = ScenarioConfig::table();
        assert_eq!(t.len(), 8);
        let s1 = ScenarioConfig::get(1).unwrap();
        assert_eq!((s1.n_observed, s1.days, s1.spatial), (50, 10, Dependence::Low));
        let s8 = ScenarioConfig::get(8).unwrap();
        assert_eq!((s8.n_observed, s8.days, s8.spatial), (150, 20, Dependence::Moderate));
        assert!(t.iter().all(|s| s.locations == 400 && s.replicates == 100 && s.temporal == Dependence::Moderate));
        let g = s8.gp_config();
        assert_eq!(g.grid_side, 20);
        assert!(((-25.0 / (g.v_s * g.v_s)).exp() - 0.5).abs() < 1e-12);
        assert!(((-4.0 / (g.v_t * g.v_t)).exp() - 0.5).abs() < 1e-12);
        assert!(ScenarioConfig::get(9).is_err());
    }

    #[test]
    fn field_shapes_and_determinism() {
        let f = simulate_field(&small(), 11).unwrap();
        assert_eq!(f.y.len(), 64 * 4);
        assert_eq!(f.observed.len(), 10);
        assert!(f.y.iter().all(|v| v.is_finite()));
        assert!(f.u.iter().all(|&u| u > 0.0 && u <= 1.0));
        assert_eq!(f, simulate_field(&small(), 11).unwrap());
        assert_ne!(f.y, simulate_field(&small(), 12).unwrap().y);
        let obs = f.observed_dataset().unwrap();
        assert_eq!(obs.n_cells(), 40);
        assert_eq!(obs.location(3).id, f.observed[3].to_string());
        let r = obs.usable_rows()[5];
        let c = obs.cell(r);
        assert_eq!(obs.y(r), f.y[f.cell(f.observed[c.location], c.time)]);
        assert_eq!(f.holdout_dataset().unwrap().n_locations(), 54);
    }

    #[test]
    fn scenario_replicate_sizes() {
        let f = simulate_replicate(&ScenarioConfig::get(1).unwrap(), 0, 7).unwrap();
        assert_eq!(f.y.len(), 4000);
        assert_eq!(f.observed.len(), 50);
        assert_eq!(f.scenario, Some(1));
        assert_eq!(f, simulate_replicate(&ScenarioConfig::get(1).unwrap(), 0, 7).unwrap());
    }

    #[test]
    fn write_emits_csv_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let f = simulate_field(&small(), 1).unwrap();
        f.write(dir.path()).unwrap();
        let back = SpaceTimeDataset::from_csv_path(dir.path().join("observed.csv")).unwrap();
        assert_eq!(back, f.observed_dataset().unwrap());
        let meta = std::fs::read_to_string(dir.path().join("metadata.txt")).unwrap();
        assert!(meta.contains("u1 = ") && meta.contains("v_s = "));
    }
}
