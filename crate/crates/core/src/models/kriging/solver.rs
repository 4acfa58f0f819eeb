//! Correlation-matrix solves for `R = (1 - share) * Ks ⊗ Kt + share * I`
//! restricted to the training cells.
//!
//! Two backends: a Kronecker eigen-decomposition of the full rectangle with a
//! principal-submatrix correction for rectangle cells that are not training
//! rows ("holes"), and a dense Cholesky factorisation.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::data::euclidean;
use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;

use super::layout::Layout;

pub(crate) fn sq_exp(d2: f64, v: f64) -> f64 {
    (-d2 / (v * v)).exp()
}

pub(crate) fn spatial_corr(layout: &Layout, v_s: f64) -> DMatrix<f64> {
    let ns = layout.ns();
    DMatrix::from_fn(ns, ns, |i, j| {
        let d = euclidean(layout.loc_coords[i], layout.loc_coords[j]);
        sq_exp(d * d, v_s)
    })
}

pub(crate) fn temporal_corr(layout: &Layout, v_t: f64) -> DMatrix<f64> {
    let nt = layout.nt();
    DMatrix::from_fn(nt, nt, |a, b| {
        let d = (layout.times[a] - layout.times[b]) as f64;
        sq_exp(d * d, v_t)
    })
}

#[derive(Debug, Clone)]
pub(crate) struct Eigen {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl Eigen {
    pub fn of(m: DMatrix<f64>) -> Eigen {
        let e = SymmetricEigen::new(m);
        Eigen {
            vectors: e.eigenvectors,
            values: e.eigenvalues.map(|v| v.max(0.0)),
        }
    }
}

pub(crate) trait CorrSolver {
    /// log det of the training correlation matrix.
    fn logdet(&self) -> f64;
    /// `R⁻¹ v` for a vector over training rows.
    fn solve(&self, v: &[f64]) -> Vec<f64>;
}

pub(crate) struct KronSolver<'a> {
    layout: &'a Layout,
    us: &'a DMatrix<f64>,
    ut: &'a DMatrix<f64>,
    // per rectangle eigenvalue (ns x nt)
    d: DMatrix<f64>,
    logdet: f64,
    holes: Option<Cholesky<f64, Dyn>>,
}

impl<'a> KronSolver<'a> {
    pub fn new(layout: &'a Layout, es: &'a Eigen, et: &'a Eigen, share: f64) -> Option<Self> {
        let (ns, nt) = (layout.ns(), layout.nt());
        let d = DMatrix::from_fn(ns, nt, |k, b| {
            (1.0 - share) * es.values[k] * et.values[b] + share
        });
        if d.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let mut logdet: f64 = d.iter().map(|v| v.ln()).sum();
        let holes = if layout.holes.is_empty() {
            None
        } else {
            // G[h, (k,b)] = Us[i,k] Ut[a,b] / sqrt(d[k,b]);  P_HH = G Gᵀ
            let h = layout.holes.len();
            let g = DMatrix::from_fn(h, ns * nt, |r, c| {
                let (i, a) = (layout.holes[r] / nt, layout.holes[r] % nt);
                let (k, b) = (c / nt, c % nt);
                es.vectors[(i, k)] * et.vectors[(a, b)] / d[(k, b)].sqrt()
            });
            let p_hh = &g * g.transpose();
            let chol = Cholesky::new(p_hh)?;
            logdet += 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Some(chol)
        };
        Some(KronSolver {
            layout,
            us: &es.vectors,
            ut: &et.vectors,
            d,
            logdet,
            holes,
        })
    }

    /// Full-rectangle inverse applied to a rectangle-shaped vector.
    fn apply_full(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = self.us.transpose() * v * self.ut;
        w.component_div_assign(&self.d);
        self.us * w * self.ut.transpose()
    }
}

impl CorrSolver for KronSolver<'_> {
    fn logdet(&self) -> f64 {
        self.logdet
    }

    fn solve(&self, v: &[f64]) -> Vec<f64> {
        let nt = self.layout.nt();
        let mut full = DMatrix::<f64>::zeros(self.layout.ns(), nt);
        for (&c, &x) in self.layout.cell.iter().zip(v) {
            full[(c / nt, c % nt)] = x;
        }
        let mut w = self.apply_full(&full);
        if let Some(chol) = &self.holes {
            let wh = DVector::from_iterator(
                self.layout.holes.len(),
                self.layout.holes.iter().map(|&c| w[(c / nt, c % nt)]),
            );
            let corr = chol.solve(&wh);
            let mut e = DMatrix::<f64>::zeros(self.layout.ns(), nt);
            for (&c, &x) in self.layout.holes.iter().zip(corr.iter()) {
                e[(c / nt, c % nt)] = x;
            }
            w -= self.apply_full(&e);
        }
        self.layout.cell.iter().map(|&c| w[(c / nt, c % nt)]).collect()
    }
}

pub(crate) struct DenseSolver {
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl DenseSolver {
    /// Builds the training correlation matrix directly. With `jitter`, a
    /// failed factorisation is retried with escalating diagonal jitter.
    pub fn new(
        layout: &Layout,
        ks: &DMatrix<f64>,
        kt: &DMatrix<f64>,
        share: f64,
        jitter: bool,
    ) -> Result<Self> {
        let nt = layout.nt();
        let n = layout.n();
        let r = DMatrix::from_fn(n, n, |i, j| {
            let (ci, cj) = (layout.cell[i], layout.cell[j]);
            let v = (1.0 - share) * ks[(ci / nt, cj / nt)] * kt[(ci % nt, cj % nt)];
            if i == j {
                v + share
            } else {
                v
            }
        });
        let chol = if jitter {
            cholesky_jittered(&r, 1.0)?.0
        } else {
            Cholesky::new(r).ok_or(Error::NotPositiveDefinite {
                jitter: 0.0,
                hint: "; consider a larger nugget floor",
            })?
        };
        let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(DenseSolver { chol, logdet })
    }
}

impl CorrSolver for DenseSolver {
    fn logdet(&self) -> f64 {
        self.logdet
    }

    fn solve(&self, v: &[f64]) -> Vec<f64> {
        self.chol
            .solve(&DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }
}

/// Whether the Kronecker backend is expected to beat a dense factorisation.
pub(crate) fn prefer_kron(layout: &Layout) -> bool {
    let (n, h) = (layout.n() as f64, layout.holes.len() as f64);
    let (ns, nt) = (layout.ns() as f64, layout.nt() as f64);
    let rect = ns * nt;
    let kron = h * h * rect + h * h * h / 3.0 + 10.0 * (ns.powi(3) + nt.powi(3)) + 40.0 * rect * (ns + nt);
    let dense = n * n * n / 3.0 + n * n * 8.0;
    kron < dense
}

/// Generalised least squares under `R`.
#[derive(Debug, Clone)]
pub(crate) struct Gls {
    pub beta: Vec<f64>,
    /// `R⁻¹ (y - X β)`.
    pub weights: Vec<f64>,
    /// `(y - X β)ᵀ R⁻¹ (y - X β)`.
    pub quad: f64,
}

/// `x` holds the design columns, `y` the outcome.
pub(crate) fn gls(solver: &dyn CorrSolver, x: &[Vec<f64>], y: &[f64]) -> Option<Gls> {
    let n = y.len();
    let q = x.len();
    let f: Vec<Vec<f64>> = x.iter().map(|c| solver.solve(c)).collect();
    let g = solver.solve(y);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut a = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        for j in 0..=i {
            let v = 0.5 * (dot(&x[i], &f[j]) + dot(&x[j], &f[i]));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let b = DVector::from_iterator(q, x.iter().map(|c| dot(c, &g)));
    let beta = Cholesky::new(a)?.solve(&b);
    let mut weights = g;
    for (j, fj) in f.iter().enumerate() {
        for (w, v) in weights.iter_mut().zip(fj) {
            *w -= beta[j] * v;
        }
    }
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..q).map(|j| x[j][i] * beta[j]).sum::<f64>())
        .collect();
    let quad = dot(&resid, &weights);
    (quad.is_finite() && weights.iter().all(|w| w.is_finite())).then(|| Gls {
        beta: beta.iter().copied().collect(),
        weights,
        quad,
    })
}

/// Profile log-likelihood with `β` and the total variance maximised out.
pub(crate) fn profile_loglik(logdet: f64, quad: f64, n: usize) -> f64 {
    if !(quad > 0.0) {
        return f64::NAN;
    }
    let nf = n as f64;
    let scale = quad / nf;
    -0.5 * (nf * scale.ln() + logdet + nf * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}
