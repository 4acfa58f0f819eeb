//! Conditional variances of held-out cells given training cells under the
//! generating covariance of a simulated field.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{ordered_cholesky, symmetrize, PrunedCholesky};
use crate::partition::FoldAssignment;
use crate::sim::SimulatedField;

/// Relative pivot floor below which a conditioning cell is treated as
/// redundant given the cells before it.
pub const PIVOT_TOL: f64 = 1e-10;

/// Schur complement `Σ** − Σ*c Σcc⁻¹ Σc*` via a Cholesky factor of `Σcc`.
/// Conditioning cells that are numerically determined by earlier ones are
/// skipped.
pub fn conditional_covariance(full: &DMatrix<f64>, star: &[usize], c: &[usize]) -> Result<DMatrix<f64>> {
    check_disjoint(star, c)?;
    let s_ss = DMatrix::from_fn(star.len(), star.len(), |i, j| full[(star[i], star[j])]);
    if c.is_empty() {
        return Ok(s_ss);
    }
    let s_cc = DMatrix::from_fn(c.len(), c.len(), |i, j| full[(c[i], c[j])]);
    let chol = PrunedCholesky::new(&s_cc, PIVOT_TOL)?;
    let cols: Vec<Vec<f64>> = star
        .iter()
        .map(|&s| chol.forward(&c.iter().map(|&i| full[(i, s)]).collect::<Vec<_>>()))
        .collect();
    let mut out = DMatrix::from_fn(star.len(), star.len(), |i, j| {
        s_ss[(i, j)] - cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum::<f64>()
    });
    symmetrize(&mut out);
    Ok(out)
}

/// Diagonal of the conditional covariance with entries from `cov(i, j)`.
pub fn conditional_variances(
    cov: impl Fn(usize, usize) -> f64 + Sync,
    star: &[usize],
    c: &[usize],
) -> Result<Vec<f64>> {
    check_disjoint(star, c)?;
    if c.is_empty() {
        return Ok(star.iter().map(|&i| cov(i, i)).collect());
    }
    let s_cc = DMatrix::from_fn(c.len(), c.len(), |i, j| cov(c[i], c[j]));
    let chol = PrunedCholesky::new(&s_cc, PIVOT_TOL)?;
    if chol.n_skipped() > 0 {
        log::debug!("{} of {} conditioning cells skipped as redundant", chol.n_skipped(), c.len());
    }
    Ok(star
        .par_iter()
        .map(|&s| {
            let col: Vec<f64> = c.iter().map(|&i| cov(i, s)).collect();
            let w = chol.forward(&col);
            (cov(s, s) - w.iter().map(|x| x * x).sum::<f64>()).max(0.0)
        })
        .collect())
}

fn check_disjoint(star: &[usize], c: &[usize]) -> Result<()> {
    let set: std::collections::HashSet<usize> = c.iter().copied().collect();
    let shared: Vec<String> = star.iter().filter(|i| set.contains(i)).map(|i| i.to_string()).collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!("index sets overlap at {}", shared.join(", "))))
    }
}

/// Which split of the field to profile.
#[derive(Debug, Clone, Copy)]
pub enum ProfileScheme<'a> {
    /// Holdout locations given every observed cell.
    TrueGrid,
    /// Folds over the field's observed dataset.
    Folds(&'a FoldAssignment),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondVarCell {
    pub fold: usize,
    /// Lattice index.
    pub location: usize,
    pub time: i64,
    /// Row of the observed dataset, for fold schemes.
    pub row: Option<usize>,
    pub cond_var: f64,
}

/// Variance of a location's series component left after conditioning on
/// every time at `train` locations: `(1+ε)((1+ε) − q)` where `q` is the
/// spatial explained variance. Training locations enter the factorisation
/// farthest first, so nested training sets that differ by nearer locations
/// give monotone results in floating point.
fn location_variance(a: &DMatrix<f64>, coords: &[[f64; 2]], target: usize, train: &[usize], diag: f64) -> Result<f64> {
    let mut order = train.to_vec();
    let d = |l: usize| crate::data::euclidean(coords[l], coords[target]);
    order.sort_by(|&x, &y| d(y).total_cmp(&d(x)).then(x.cmp(&y)));
    order.push(target);
    let m = order.len();
    let sub = DMatrix::from_fn(m, m, |i, j| a[(order[i], order[j])]);
    let l = ordered_cholesky(&sub).ok_or(Error::NotPositiveDefinite {
        jitter: 0.0,
        hint: "; spatial covariance of the training locations",
    })?;
    let mut q = 0.0;
    for k in 0..m - 1 {
        q += l[(m - 1, k)] * l[(m - 1, k)];
    }
    Ok(diag * (a[(target, target)] - q).max(0.0))
}

/// Conditional variance of each test cell of `scheme` given that scheme's
/// training cells, under the field's generating covariance.
pub fn conditional_variance_profile(field: &SimulatedField, scheme: ProfileScheme<'_>) -> Result<Vec<CondVarCell>> {
    let cfg = &field.config;
    let a = cfg.spatial_cov()?;
    let b = cfg.temporal_cov()?;
    let coords = cfg.coords();
    let m = cfg.n_days;
    let times = cfg.times();
    let diag_t = b[(0, 0)];
    match scheme {
        ProfileScheme::TrueGrid => {
            let hold = field.holdout();
            let per: Vec<Result<f64>> = hold
                .par_iter()
                .map(|&l| location_variance(&a, &coords, l, &field.observed, diag_t))
                .collect();
            let mut out = Vec::with_capacity(hold.len() * m);
            for (&l, v) in hold.iter().zip(per) {
                let v = v?;
                out.extend(times.iter().map(|&t| CondVarCell {
                    fold: 0,
                    location: l,
                    time: t,
                    row: None,
                    cond_var: v,
                }));
            }
            Ok(out)
        }
        ProfileScheme::Folds(assign) => {
            let ds = field.observed_dataset()?;
            let lattice_of = |r: usize| field.observed[ds.cell(r).location];
            let cell_of = |r: usize| lattice_of(r) * m + (ds.cell(r).time as usize - 1);
            let mut out = Vec::new();
            for (k, fold) in assign.folds.iter().enumerate() {
                let mut per_loc = vec![0usize; ds.n_locations()];
                for &r in &fold.train {
                    per_loc[ds.cell(r).location] += 1;
                }
                let test_locs: Vec<usize> = fold.test.iter().map(|&r| ds.cell(r).location).collect();
                let whole_series = per_loc.iter().all(|&n| n == 0 || n == m)
                    && test_locs.iter().all(|&l| per_loc[l] == 0);
                if whole_series {
                    let train: Vec<usize> = (0..ds.n_locations())
                        .filter(|&l| per_loc[l] > 0)
                        .map(|l| field.observed[l])
                        .collect();
                    let mut cache: std::collections::HashMap<usize, f64> = Default::default();
                    for &r in &fold.test {
                        let l = lattice_of(r);
                        let v = match cache.get(&l) {
                            Some(&v) => v,
                            None => {
                                let v = location_variance(&a, &coords, l, &train, diag_t)?;
                                cache.insert(l, v);
                                v
                            }
                        };
                        out.push(CondVarCell {
                            fold: k,
                            location: l,
                            time: ds.cell(r).time,
                            row: Some(r),
                            cond_var: v,
                        });
                    }
                } else {
                    let star: Vec<usize> = fold.test.iter().map(|&r| cell_of(r)).collect();
                    let c: Vec<usize> = fold.train.iter().map(|&r| cell_of(r)).collect();
                    let cov = |i: usize, j: usize| a[(i / m, j / m)] * b[(i % m, j % m)];
                    let vars = conditional_variances(cov, &star, &c)?;
                    for (&r, v) in fold.test.iter().zip(vars) {
                        out.push(CondVarCell {
                            fold: k,
                            location: lattice_of(r),
                            time: ds.cell(r).time,
                            row: Some(r),
                            cond_var: v,
                        });
                    }
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::partition::{buffered_llo, lolo, naive_kfold};
    use crate::rng::stream;
    use crate::sim::{sample_gp, simulate_field, sq_exp_covariance, GpSimConfig};
    use proptest::prelude::*;

    #[test]
    fn scalar_schur() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let c = conditional_covariance(&m, &[0], &[1]).unwrap();
        assert!((c[(0, 0)] - 0.64).abs() < 1e-15);
    }

    #[test]
    fn zero_cross_block_leaves_marginal() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 3.0]);
        let c = conditional_covariance(&m, &[0, 1], &[2]).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]));
        assert!(conditional_covariance(&m, &[0, 1], &[1]).is_err());
    }

    #[test]
    fn duplicated_point_has_no_variance_left() {
        let pts = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        let m = sq_exp_covariance(&pts, 1.0, 1e-12).unwrap();
        let c = conditional_covariance(&m, &[0], &[1, 2]).unwrap();
        assert!(c[(0, 0)] < 1e-10);
    }

    #[test]
    fn monte_carlo_three_points() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.7, 0.4, 0.7, 1.0, 0.5, 0.4, 0.5, 1.0]);
        let exact = conditional_covariance(&m, &[0], &[1, 2]).unwrap()[(0, 0)];
        let mut rng = stream(&[9]);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_gp(&[0.0; 3], &m, &mut rng).unwrap()).collect();
        // least-squares regression of y0 on (1, y1, y2)
        let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { draws[i][j] });
        let y = DVector::from_iterator(n, draws.iter().map(|d| d[0]));
        let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
        let resid = &y - &x * beta;
        let var = resid.norm_squared() / (n - 3) as f64;
        assert!((var / exact - 1.0).abs() < 0.03, "{var} vs {exact}");
    }

    fn small_field(seed: u64) -> SimulatedField {
        let cfg = GpSimConfig {
            grid_side: 10,
            n_days: 4,
            v_s: 2.5,
            v_t: 2.0,
            eps: 1e-6,
            n_observed: 20,
            edge_buffer: 1.0,
        };
        simulate_field(&cfg, seed).unwrap()
    }

    #[test]
    fn naive_below_lolo_below_buffers() {
        let f = small_field(3);
        let ds = f.observed_dataset().unwrap();
        let n = ds.n_cells();
        let by_row = |v: &[CondVarCell]| {
            let mut out = vec![f64::NAN; n];
            for c in v {
                out[c.row.unwrap()] = c.cond_var;
            }
            out
        };
        let profile = |a: &FoldAssignment| by_row(&conditional_variance_profile(&f, ProfileScheme::Folds(a)).unwrap());
        let lv = profile(&lolo(&ds).unwrap());
        // Leave-one-cell-out trains on a superset of the LOLO training cells.
        let loo = profile(&naive_kfold(&ds, n, 1).unwrap());
        for r in 0..n {
            assert!(loo[r] < lv[r], "row {r}: {} vs {}", loo[r], lv[r]);
        }
        let naive = profile(&naive_kfold(&ds, 10, 1).unwrap());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&naive) < 0.5 * mean(&lv));
        let mut prev = lv;
        for d in [0.5, 1.5, 2.5, 3.5] {
            let cur = profile(&buffered_llo(&ds, d).unwrap());
            for r in 0..n {
                assert!(cur[r] >= prev[r] - 1e-10);
            }
            prev = cur;
        }
        let eps = f.config.eps;
        assert!(prev.iter().all(|&v| v <= (1.0 + eps) * (1.0 + eps)));
    }

    #[test]
    fn location_formula_agrees_with_dense() {
        let f = small_field(5);
        let ds = f.observed_dataset().unwrap();
        let part = lolo(&ds).unwrap();
        let fast = conditional_variance_profile(&f, ProfileScheme::Folds(&part)).unwrap();
        let cfg = &f.config;
        let a = cfg.spatial_cov().unwrap();
        let b = cfg.temporal_cov().unwrap();
        let m = cfg.n_days;
        let fold = &part.folds[2];
        let cell = |r: usize| f.observed[ds.cell(r).location] * m + ds.cell(r).time as usize - 1;
        let star: Vec<usize> = fold.test.iter().map(|&r| cell(r)).collect();
        let c: Vec<usize> = fold.train.iter().map(|&r| cell(r)).collect();
        let dense = conditional_variances(|i, j| a[(i / m, j / m)] * b[(i % m, j % m)], &star, &c).unwrap();
        let fast: Vec<f64> = fast.iter().filter(|c| c.fold == 2).map(|c| c.cond_var).collect();
        for (x, y) in fast.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        let truth = conditional_variance_profile(&f, ProfileScheme::TrueGrid).unwrap();
        assert_eq!(truth.len(), (100 - 20) * 4);
        assert!(truth.iter().all(|c| c.cond_var > 0.0 && c.cond_var.is_finite()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn conditional_covariance_is_psd_and_nested_monotone(
            pts in prop::collection::vec((0.0f64..6.0, 0.0f64..6.0), 4..14),
            v in 0.5f64..3.0,
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let n = pts.len();
            let m = sq_exp_covariance(&pts, v, 1e-3).unwrap();
            let star: Vec<usize> = (0..2).collect();
            let big: Vec<usize> = (2..n).collect();
            let small: Vec<usize> = (2..n - 1).collect();
            let cb = conditional_covariance(&m, &star, &big).unwrap();
            let cs = conditional_covariance(&m, &star, &small).unwrap();
            prop_assert!((cb.clone() - cb.transpose()).abs().max() < 1e-10);
            let ev = nalgebra::SymmetricEigen::new(cb.clone()).eigenvalues;
            prop_assert!(ev.min() > -1e-8);
            for i in 0..2 {
                prop_assert!(cb[(i, i)] <= cs[(i, i)] + 1e-10);
                prop_assert!(cs[(i, i)] <= m[(i, i)] + 1e-12);
            }
        }
    }
}
