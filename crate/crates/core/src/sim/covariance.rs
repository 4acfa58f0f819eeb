//! Squared-exponential covariances, mean functions and Gaussian sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::euclidean;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered, kron};

/// Largest matrix side `separable_spacetime_cov` materialises by default.
pub const DEFAULT_CELL_CAP: usize = 4096;

/// `exp(-‖a - b‖² / v²) + eps · 1{i = j}` over `points`.
pub fn sq_exp_covariance(points: &[[f64; 2]], v: f64, eps: f64) -> Result<DMatrix<f64>> {
    if !(v > 0.0) || !(eps >= 0.0) {
        return Err(Error::invalid(format!("need v > 0 and eps >= 0, got v={v}, eps={eps}")));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFiniteCoords(format!("point {i}")));
    }
    let n = points.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d = euclidean(points[i], points[j]);
        let c = (-(d * d) / (v * v)).exp();
        if i == j {
            c + eps
        } else {
            c
        }
    }))
}

/// Temporal factor over integer times.
pub fn temporal_covariance(times: &[i64], v: f64, eps: f64) -> Result<DMatrix<f64>> {
    let pts: Vec<[f64; 2]> = times.iter().map(|&t| [t as f64, 0.0]).collect();
    sq_exp_covariance(&pts, v, eps)
}

/// Dense `Σ_s ⊗ Σ_t`; cell `(s_i, t_a)` sits at index `i · n_t + a`.
pub fn separable_spacetime_cov(
    points: &[[f64; 2]],
    times: &[i64],
    v_s: f64,
    v_t: f64,
    eps: f64,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let cells = points.len() * times.len();
    if cells > cap {
        return Err(Error::TooLarge { cells, cap });
    }
    let s = sq_exp_covariance(points, v_s, eps)?;
    let t = temporal_covariance(times, v_t, eps)?;
    Ok(kron(&s, &t))
}

/// Sinusoidal covariate mean at location `s` and time `t` (radians).
pub fn covariate_mean(s: [f64; 2], t: f64, u: [f64; 4]) -> f64 {
    t.sin() * (s[0].sin() / (250.0 * u[0])) * (s[1].cos() / (125.0 * u[1]))
        + t.cos() * (s[0].cos() / (125.0 * u[2]) + s[1].sin() / (250.0 * u[3]))
}

/// Outcome mean: linear in `x1`, a step in `x2`, logistic in `x3`.
pub fn outcome_mean(x1: f64, x2: f64, x3: f64) -> f64 {
    let step = if x2 > 0.1 { 1.0 } else { 0.0 };
    0.5 * x1 - 0.5 * step + 1.0 / (1.0 + (-x3).exp())
}

/// `mean + L z` with `L Lᵀ = cov` (jittered if needed) and `z` standard normal.
pub fn sample_gp<R: Rng + ?Sized>(mean: &[f64], cov: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::invalid("covariance shape does not match the mean"));
    }
    let scale = (cov.trace() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    let (chol, _) = cholesky_jittered(cov, scale)?;
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let x = chol.l() * z;
    Ok(mean.iter().zip(x.iter()).map(|(m, v)| m + v).collect())
}

/// Sampler for `Σ_s ⊗ Σ_t` through the factors: a draw is `L_s Z L_tᵀ`.
#[derive(Debug, Clone)]
pub struct KronSampler {
    ls: DMatrix<f64>,
    lt: DMatrix<f64>,
}

impl KronSampler {
    pub fn new(spatial: &DMatrix<f64>, temporal: &DMatrix<f64>) -> Result<Self> {
        Ok(KronSampler {
            ls: cholesky_jittered(spatial, 1.0)?.0.l(),
            lt: cholesky_jittered(temporal, 1.0)?.0.l(),
        })
    }

    pub fn n_cells(&self) -> usize {
        self.ls.nrows() * self.lt.nrows()
    }

    /// Zero-mean draw; `z` is filled in cell order `i · n_t + a`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (ns, nt) = (self.ls.nrows(), self.lt.nrows());
        let mut z = DMatrix::<f64>::zeros(ns, nt);
        for i in 0..ns {
            for a in 0..nt {
                z[(i, a)] = rng.sample(StandardNormal);
            }
        }
        let x = &self.ls * z * self.lt.transpose();
        let mut out = Vec::with_capacity(ns * nt);
        for i in 0..ns {
            for a in 0..nt {
                out.push(x[(i, a)]);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn diagonal_and_unit_distance() {
        let c = sq_exp_covariance(&[[0.0, 0.0], [3.0, 4.0]], 5.0, 1e-6).unwrap();
        assert_eq!(c[(0, 0)], 1.0 + 1e-6);
        assert!((c[(0, 1)] - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(c[(0, 1)], c[(1, 0)]);
        let far = sq_exp_covariance(&[[0.0, 0.0], [1e3, 0.0]], 1.0, 0.0).unwrap();
        assert_eq!(far[(0, 1)], 0.0);
        assert!(sq_exp_covariance(&[[f64::NAN, 0.0]], 1.0, 0.0).is_err());
    }

    #[test]
    fn separable_matches_explicit_kronecker() {
        let pts = [[0.0, 0.0], [1.0, 2.0]];
        let times = [1, 3];
        let m = separable_spacetime_cov(&pts, &times, 2.0, 1.5, 0.01, 100).unwrap();
        let s = |i: usize, j: usize| {
            let d2 = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
            (-d2 / 4.0).exp() + if i == j { 0.01 } else { 0.0 }
        };
        let t = |a: usize, b: usize| {
            let d2 = ((times[a] - times[b]) as f64).powi(2);
            (-d2 / 2.25).exp() + if a == b { 0.01 } else { 0.0 }
        };
        for r in 0..4 {
            for c in 0..4 {
                assert!((m[(r, c)] - s(r / 2, c / 2) * t(r % 2, c % 2)).abs() < 1e-15);
            }
        }
        assert!(m.clone().cholesky().is_some());
        assert!(matches!(
            separable_spacetime_cov(&pts, &times, 1.0, 1.0, 0.0, 3),
            Err(Error::TooLarge { cells: 4, cap: 3 })
        ));
    }

    #[test]
    fn infinite_temporal_range_is_spatial_only() {
        let m = separable_spacetime_cov(&[[0.0, 0.0], [1.0, 0.0]], &[1, 5, 9], 1.0, 1e12, 0.0, 100).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                let s = if r / 3 == c / 3 { 1.0 } else { (-1.0f64).exp() };
                assert!((m[(r, c)] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_functions() {
        let u = [0.3, 0.7, 0.2, 0.9];
        let s = [2.0, -1.0];
        assert_eq!(covariate_mean(s, 0.0, u), (2.0f64.cos() / (125.0 * 0.2) + (-1.0f64).sin() / (250.0 * 0.9)));
        assert!(covariate_mean([0.0, 0.0], std::f64::consts::FRAC_PI_2, u).abs() < 1e-15);
        let h = [0.5; 4];
        let expect = 1f64.sin() * 1f64.sin() / 125.0 * 2f64.cos() / 62.5 + 1f64.cos() * (1f64.cos() / 62.5 + 2f64.sin() / 125.0);
        assert!((covariate_mean([1.0, 2.0], 1.0, h) - expect).abs() < 1e-15);
        assert_eq!(outcome_mean(0.0, 0.0, 0.0), 0.5);
        assert_eq!(outcome_mean(1.0, 0.2, f64::INFINITY), 1.0);
        assert_eq!(outcome_mean(2.0, 0.1, 0.0), 1.5);
    }

    #[test]
    fn tiny_covariance_sample_is_mean() {
        let eps = 1e-12;
        let mean: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let cov = DMatrix::<f64>::identity(100, 100) * eps;
        let x = sample_gp(&mean, &cov, &mut stream(&[1])).unwrap();
        assert!(x.iter().zip(&mean).all(|(a, b)| (a - b).abs() < 5.0 * eps.sqrt()));
        assert_eq!(x, sample_gp(&mean, &cov, &mut stream(&[1])).unwrap());
    }

    #[test]
    fn empirical_covariance_matches_target() {
        let pts: Vec<[f64; 2]> = (0..6).map(|i| [i as f64 * 0.7, (i % 2) as f64]).collect();
        let cov = sq_exp_covariance(&pts, 1.5, 0.05).unwrap();
        let mut rng = stream(&[2]);
        let n = 5000;
        let mut acc = DMatrix::<f64>::zeros(6, 6);
        let mean = [0.0; 6];
        for _ in 0..n {
            let x = DVector::from_vec(sample_gp(&mean, &cov, &mut rng).unwrap());
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - cov).norm() < 0.1);
    }

    #[test]
    fn kron_sampler_matches_dense_law() {
        let s = sq_exp_covariance(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], 1.2, 1e-6).unwrap();
        let t = temporal_covariance(&[1, 2], 1.0, 1e-6).unwrap();
        let target = kron(&s, &t);
        let k = KronSampler::new(&s, &t).unwrap();
        let mut rng = stream(&[3]);
        let n = 5000;
        let mut acc = DMatrix::<f64>::zeros(6, 6);
        for _ in 0..n {
            let x = DVector::from_vec(k.draw(&mut rng));
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - target).norm() < 0.15);
    }

    proptest! {
        #[test]
        fn covariance_entries_bounded(
            pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..12),
            v in 0.1f64..10.0,
            eps in 0.0f64..0.1,
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let c = sq_exp_covariance(&pts, v, eps).unwrap();
            for i in 0..pts.len() {
                prop_assert_eq!(c[(i, i)], 1.0 + eps);
                for j in 0..pts.len() {
                    prop_assert_eq!(c[(i, j)], c[(j, i)]);
                    prop_assert!(c[(i, j)] >= 0.0 && c[(i, j)] <= 1.0 + eps);
                }
            }
        }
    }
}
