//! Universal kriging with a separable squared-exponential space-time
//! covariance.
//!
//! Between two observations,
//! `C = sigma2 · exp(-d_s²/v_s²) · exp(-d_t²/v_t²) + nugget · 1{same point}`,
//! and the mean is linear in an intercept plus all covariates. Unless fixed,
//! `(v_s, v_t, nugget share)` maximise the Gaussian profile likelihood with
//! `β` and the total variance in closed form.

mod layout;
mod optimize;
mod solver;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::rc::Rc;

use nalgebra::{DMatrix, DVector};

use crate::data::{euclidean, SpaceTimeDataset};
use crate::error::{Error, Result};

use super::ols::{check_rank, design};
use super::{check_rows, FittedRule, Learner, ModelKind, ModelSpec, Query};
use layout::Layout;
use optimize::{Axis, Search};
use solver::{gls, prefer_kron, profile_loglik, sq_exp, CorrSolver, DenseSolver, Eigen, KronSolver};

const LN_10: f64 = std::f64::consts::LN_10;
const MAX_SHARE: f64 = 1.0 - 1e-6;
const NEAR_SINGULAR: &str = "; near-singular covariance, raise `min_nugget_share`";

/// Covariance parameters and mean coefficients of a fitted kriging rule.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingParams {
    pub sigma2: f64,
    pub v_s: f64,
    pub v_t: f64,
    pub nugget: f64,
    /// Intercept first.
    pub beta: Vec<f64>,
}

/// Fixed covariance parameters, bypassing the likelihood search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCovariance {
    pub sigma2: f64,
    pub v_s: f64,
    pub v_t: f64,
    pub nugget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingConfig {
    pub fixed: Option<FixedCovariance>,
    /// Golden-section tolerance in log / logit parameters.
    pub tol: f64,
    /// Lower bound on `nugget / (sigma2 + nugget)` during the search.
    pub min_nugget_share: f64,
    pub max_sweeps: usize,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        KrigingConfig {
            fixed: None,
            tol: 1e-4,
            min_nugget_share: 1e-6,
            max_sweeps: 4,
        }
    }
}

impl KrigingConfig {
    pub fn fixed(sigma2: f64, v_s: f64, v_t: f64, nugget: f64) -> Self {
        KrigingConfig {
            fixed: Some(FixedCovariance {
                sigma2,
                v_s,
                v_t,
                nugget,
            }),
            ..Self::default()
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        spec.reject_unknown(&["sigma2", "v_s", "v_t", "nugget", "tol", "min_nugget_share", "max_sweeps"])?;
        let p = &spec.params;
        let mut cfg = KrigingConfig::default();
        let fixed: Vec<Option<&f64>> = ["sigma2", "v_s", "v_t", "nugget"].iter().map(|k| p.get(*k)).collect();
        match fixed.iter().filter(|v| v.is_some()).count() {
            0 => {}
            4 => {
                cfg.fixed = Some(FixedCovariance {
                    sigma2: *fixed[0].unwrap(),
                    v_s: *fixed[1].unwrap(),
                    v_t: *fixed[2].unwrap(),
                    nugget: *fixed[3].unwrap(),
                })
            }
            _ => {
                return Err(Error::invalid(
                    "fixed kriging parameters need all of sigma2, v_s, v_t and nugget",
                ))
            }
        }
        if let Some(&t) = p.get("tol") {
            cfg.tol = t;
        }
        if let Some(&s) = p.get("min_nugget_share") {
            cfg.min_nugget_share = s;
        }
        if let Some(n) = spec.count("max_sweeps")? {
            cfg.max_sweeps = n;
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(f) = &self.fixed {
            let ok = [f.sigma2, f.v_s, f.v_t].iter().all(|v| v.is_finite() && *v > 0.0)
                && f.nugget.is_finite()
                && f.nugget >= 0.0;
            if !ok {
                return Err(Error::invalid(format!(
                    "kriging needs finite sigma2, v_s, v_t > 0 and nugget >= 0, got {f:?}"
                )));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("kriging `tol` must be positive"));
        }
        if !(self.min_nugget_share > 0.0 && self.min_nugget_share < MAX_SHARE) {
            return Err(Error::invalid("`min_nugget_share` must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Kriging {
    config: KrigingConfig,
}

impl Kriging {
    pub fn new(config: KrigingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Kriging { config })
    }

    pub fn config(&self) -> &KrigingConfig {
        &self.config
    }

    /// Fits and returns the concrete rule.
    pub fn fit_kriging(&self, ds: &SpaceTimeDataset, rows: &[usize]) -> Result<KrigingFit> {
        let p = ds.p();
        check_rows(ds, rows, p + 2)?;
        let layout = Layout::new(ds, rows);
        if layout.ns() < 2 || layout.nt() < 2 {
            return Err(Error::invalid(format!(
                "kriging needs at least 2 distinct locations and 2 distinct times, got {} and {}",
                layout.ns(),
                layout.nt()
            )));
        }
        let xm = design(ds, rows);
        check_rank(ds, &xm)?;
        let x: Vec<Vec<f64>> = (0..xm.ncols()).map(|j| xm.column(j).iter().copied().collect()).collect();
        let y: Vec<f64> = rows.iter().map(|&r| ds.y(r)).collect();
        let (params, weights, loglik, backend) = match self.config.fixed {
            Some(f) => fit_fixed(&layout, &x, &y, f)?,
            None => match fit_ml(&layout, &x, &y, &self.config, false) {
                Ok(v) => v,
                Err(e) => {
                    log::debug!("kriging fit failed ({e}); retrying with a halved grid");
                    fit_ml(&layout, &x, &y, &self.config, true)?
                }
            },
        };
        Ok(KrigingFit::new(p, layout, params, &weights, loglik, backend))
    }
}

impl Learner for Kriging {
    fn kind(&self) -> ModelKind {
        ModelKind::Kriging
    }

    fn fit(&self, ds: &SpaceTimeDataset, rows: &[usize], _seed: u64) -> Result<Box<dyn FittedRule>> {
        Ok(Box::new(self.fit_kriging(ds, rows)?))
    }
}

type FitParts = (KrigingParams, Vec<f64>, f64, &'static str);

fn fit_fixed(layout: &Layout, x: &[Vec<f64>], y: &[f64], f: FixedCovariance) -> Result<FitParts> {
    let total = f.sigma2 + f.nugget;
    let share = f.nugget / total;
    let ks = solver::spatial_corr(layout, f.v_s);
    let kt = solver::temporal_corr(layout, f.v_t);
    let (g, logdet, backend) = {
        let mut done = None;
        if share > 0.0 && prefer_kron(layout) {
            let es = Eigen::of(ks.clone());
            let et = Eigen::of(kt.clone());
            if let Some(s) = KronSolver::new(layout, &es, &et, share) {
                done = gls(&s, x, y).map(|g| (g, s.logdet(), "kronecker"));
            }
        }
        match done {
            Some(d) => d,
            None => {
                let s = DenseSolver::new(layout, &ks, &kt, share, true).map_err(near_singular)?;
                let g = gls(&s, x, y).ok_or_else(|| near_singular(Error::NotPositiveDefinite { jitter: 0.0, hint: "" }))?;
                (g, s.logdet(), "dense")
            }
        }
    };
    let loglik = gaussian_loglik(logdet, g.quad, total, y.len());
    let weights = g.weights.iter().map(|w| w / total).collect();
    let params = KrigingParams {
        sigma2: f.sigma2,
        v_s: f.v_s,
        v_t: f.v_t,
        nugget: f.nugget,
        beta: g.beta,
    };
    Ok((params, weights, loglik, backend))
}

/// Log-likelihood at a fixed total variance.
fn gaussian_loglik(logdet_r: f64, quad: f64, total: f64, n: usize) -> f64 {
    let nf = n as f64;
    -0.5 * (nf * total.ln() + logdet_r + quad / total + nf * (2.0 * std::f64::consts::PI).ln())
}

fn near_singular(e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { jitter, .. } => Error::NotPositiveDefinite {
            jitter,
            hint: NEAR_SINGULAR,
        },
        other => other,
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Probe<'a> {
    layout: &'a Layout,
    use_kron: bool,
    es: HashMap<u64, Rc<Eigen>>,
    et: HashMap<u64, Rc<Eigen>>,
}

impl Probe<'_> {
    fn eigen(cache: &mut HashMap<u64, Rc<Eigen>>, v: f64, make: impl Fn(f64) -> DMatrix<f64>) -> Rc<Eigen> {
        cache.entry(v.to_bits()).or_insert_with(|| Rc::new(Eigen::of(make(v)))).clone()
    }

    /// GLS fit and profile log-likelihood at `(ln v_s, ln v_t, logit share)`.
    fn at(&mut self, theta: &[f64; 3], x: &[Vec<f64>], y: &[f64]) -> Option<(solver::Gls, f64, &'static str)> {
        let (v_s, v_t, share) = (theta[0].exp(), theta[1].exp(), expit(theta[2]));
        if !(v_s.is_finite() && v_t.is_finite() && share > 0.0) {
            return None;
        }
        if self.use_kron {
            let layout = self.layout;
            let es = Self::eigen(&mut self.es, v_s, |v| solver::spatial_corr(layout, v));
            let et = Self::eigen(&mut self.et, v_t, |v| solver::temporal_corr(layout, v));
            if let Some(s) = KronSolver::new(layout, &es, &et, share) {
                let g = gls(&s, x, y)?;
                let ll = profile_loglik(s.logdet(), g.quad, y.len());
                return ll.is_finite().then_some((g, ll, "kronecker"));
            }
        }
        let ks = solver::spatial_corr(self.layout, v_s);
        let kt = solver::temporal_corr(self.layout, v_t);
        let s = DenseSolver::new(self.layout, &ks, &kt, share, false).ok()?;
        let g = gls(&s, x, y)?;
        let ll = profile_loglik(s.logdet(), g.quad, y.len());
        ll.is_finite().then_some((g, ll, "dense"))
    }
}

fn fit_ml(layout: &Layout, x: &[Vec<f64>], y: &[f64], cfg: &KrigingConfig, halve: bool) -> Result<FitParts> {
    let (s_lo, s_hi) = layout.spatial_range();
    let (t_lo, t_hi) = layout.temporal_range();
    let floor = logit(cfg.min_nugget_share);
    let mut axes = [
        Axis::around(s_lo.ln(), s_hi.ln(), LN_10),
        Axis::around(t_lo.ln(), t_hi.ln(), LN_10),
        Axis {
            lo: floor,
            hi: logit(MAX_SHARE),
            grid: [logit(0.01).max(floor), logit(0.1).max(floor), logit(0.5).max(floor)],
        },
    ];
    if halve {
        for a in &mut axes {
            *a = a.halved();
        }
    }
    let mut probe = Probe {
        layout,
        use_kron: prefer_kron(layout),
        es: HashMap::new(),
        et: HashMap::new(),
    };
    let search = Search::new(&axes, cfg.tol, cfg.max_sweeps, |t: &[f64; 3]| {
        probe.at(t, x, y).map_or(f64::NAN, |(_, ll, _)| ll)
    });
    let (outcome, log) = search.run();
    let outcome = outcome.ok_or(Error::Optimizer { probes: log })?;
    log::debug!(
        "kriging search: {} evaluations, loglik {:.6}",
        outcome.evaluations,
        outcome.value
    );
    let theta = outcome.theta;
    let (g, ll, backend) = probe
        .at(&theta, x, y)
        .ok_or(Error::NotPositiveDefinite {
            jitter: 0.0,
            hint: NEAR_SINGULAR,
        })?;
    let total = g.quad / y.len() as f64;
    let share = expit(theta[2]);
    let params = KrigingParams {
        sigma2: total * (1.0 - share),
        v_s: theta[0].exp(),
        v_t: theta[1].exp(),
        nugget: total * share,
        beta: g.beta,
    };
    let weights = g.weights.iter().map(|w| w / total).collect();
    Ok((params, weights, ll, backend))
}

/// Fitted universal-kriging rule. Holds the training residual weights
/// `C⁻¹ (y - X β)` on the training location × time rectangle.
#[derive(Debug, Clone)]
pub struct KrigingFit {
    params: KrigingParams,
    p: usize,
    loglik: f64,
    backend: &'static str,
    loc_coords: Vec<[f64; 2]>,
    times: Vec<i64>,
    /// ns × nt, zero where there is no training row.
    alpha: DMatrix<f64>,
    /// Weight of the training row at an exact (coords, time), for the nugget.
    at_point: HashMap<([u64; 2], i64), f64>,
}

impl KrigingFit {
    fn new(p: usize, layout: Layout, params: KrigingParams, weights: &[f64], loglik: f64, backend: &'static str) -> Self {
        let nt = layout.nt();
        let mut alpha = DMatrix::zeros(layout.ns(), nt);
        let mut at_point = HashMap::new();
        for (&c, &w) in layout.cell.iter().zip(weights) {
            let (l, t) = (c / nt, c % nt);
            alpha[(l, t)] = w;
            let xy = layout.loc_coords[l];
            at_point.insert(([xy[0].to_bits(), xy[1].to_bits()], layout.times[t]), w);
        }
        KrigingFit {
            params,
            p,
            loglik,
            backend,
            loc_coords: layout.loc_coords,
            times: layout.times,
            alpha,
            at_point,
        }
    }

    pub fn params(&self) -> &KrigingParams {
        &self.params
    }

    /// Log-likelihood at the fitted parameters.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    /// Regression part `x₀ᵀ β` of the prediction.
    pub fn mean(&self, covariates: &[f64]) -> f64 {
        let b = &self.params.beta;
        b[0] + covariates.iter().zip(&b[1..]).map(|(x, c)| x * c).sum::<f64>()
    }
}

impl FittedRule for KrigingFit {
    fn kind(&self) -> ModelKind {
        ModelKind::Kriging
    }

    fn p(&self) -> usize {
        self.p
    }

    fn predict_one(&self, q: &Query<'_>) -> f64 {
        let par = &self.params;
        let ks = DVector::from_iterator(
            self.loc_coords.len(),
            self.loc_coords.iter().map(|&c| {
                let d = euclidean(c, q.coords);
                sq_exp(d * d, par.v_s)
            }),
        );
        let kt = DVector::from_iterator(
            self.times.len(),
            self.times.iter().map(|&t| {
                let d = (t - q.time) as f64;
                sq_exp(d * d, par.v_t)
            }),
        );
        let mut resid = par.sigma2 * (ks.transpose() * &self.alpha * kt)[(0, 0)];
        if par.nugget > 0.0 {
            let key = ([q.coords[0].to_bits(), q.coords[1].to_bits()], q.time);
            if let Some(w) = self.at_point.get(&key) {
                resid += par.nugget * w;
            }
        }
        self.mean(q.covariates) + resid
    }

    fn describe(&self) -> String {
        let par = &self.params;
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        kv.insert("sigma2".into(), format!("{:e}", par.sigma2));
        kv.insert("v_s".into(), format!("{:e}", par.v_s));
        kv.insert("v_t".into(), format!("{:e}", par.v_t));
        kv.insert("nugget".into(), format!("{:e}", par.nugget));
        let mut s = String::from("model = kriging\n");
        for (k, v) in &kv {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (j, b) in par.beta.iter().enumerate() {
            let _ = writeln!(s, "beta_{j} = {b:e}");
        }
        let _ = writeln!(s, "loglik = {:e}", self.loglik);
        let _ = writeln!(s, "solver = {}", self.backend);
        s
    }
}

#[cfg(test)]
mod tests;
