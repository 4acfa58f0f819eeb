//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{linalg::Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub const JITTER_FLOOR: f64 = 1e-8;
const JITTER_STEPS: usize = 5;

/// Cholesky factorisation with diagonal jitter escalation.
///
/// Tries the matrix as given, then adds `JITTER_FLOOR * scale` to the diagonal
/// and grows it tenfold per attempt. Returns the factor and the jitter used.
pub fn cholesky_jittered(
    a: &DMatrix<f64>,
    scale: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_FLOOR * scale;
    for _ in 0..JITTER_STEPS {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            log::debug!("cholesky succeeded with jitter {jitter:e}");
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: jitter / 10.0,
        hint: "",
    })
}

/// Row-oriented Cholesky with a fixed summation order.
///
/// Entry `L[i][j]` depends only on the leading `(i+1) x (i+1)` block of `a`,
/// and every inner product is accumulated left to right. Returns `None` if a
/// pivot is not strictly positive.
pub fn ordered_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Row-oriented Cholesky factor that skips numerically redundant pivots.
///
/// A pivot whose residual is at most `tol` times its diagonal entry marks a
/// row that is (to working precision) a combination of earlier rows; it is
/// left out, so solves condition on the maximal well-conditioned prefix
/// subset. A residual below `-NEG_TOL` times the diagonal is an error.
#[derive(Debug, Clone)]
pub struct PrunedCholesky {
    n: usize,
    /// Row-major lower triangle; rows of skipped pivots are zero.
    l: Vec<f64>,
    kept: Vec<bool>,
}

const NEG_TOL: f64 = 1e-6;

impl PrunedCholesky {
    pub fn new(a: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        let mut kept = vec![false; n];
        for i in 0..n {
            for j in 0..i {
                if !kept[j] {
                    continue;
                }
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
                l[i * n + j] = (a[(i, j)] - dot) / l[j * n + j];
            }
            let ri = &l[i * n..i * n + i];
            let piv = a[(i, i)] - ri.iter().map(|x| x * x).sum::<f64>();
            if piv > tol * a[(i, i)] {
                l[i * n + i] = piv.sqrt();
                kept[i] = true;
            } else if piv < -NEG_TOL * a[(i, i)].abs() || !piv.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    jitter: 0.0,
                    hint: "; conditioning block is indefinite",
                });
            } else {
                l[i * n..i * n + i].iter_mut().for_each(|x| *x = 0.0);
            }
        }
        Ok(PrunedCholesky { n, l, kept })
    }

    pub fn n_skipped(&self) -> usize {
        self.kept.iter().filter(|k| !**k).count()
    }

    /// `L⁻¹ b` over kept pivots (zero at skipped ones).
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut w = vec![0.0; n];
        for j in 0..n {
            if !self.kept[j] {
                continue;
            }
            let rj = &self.l[j * n..j * n + j];
            let dot: f64 = rj.iter().zip(&w[..j]).map(|(x, y)| x * y).sum();
            w[j] = (b[j] - dot) / self.l[j * n + j];
        }
        w
    }
}

/// Dense Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    DMatrix::from_fn(ra * rb, ca * cb, |i, j| {
        a[(i / rb, j / cb)] * b[(i % rb, j % cb)]
    })
}

/// Symmetrises in place: `m <- (m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
