//! Ordinary least squares with an intercept.

use nalgebra::{DMatrix, DVector};

use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};

use super::{check_rows, FittedRule, Learner, ModelKind, Query};

const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default)]
pub struct Ols;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Intercept first, then one coefficient per covariate.
    pub coefficients: Vec<f64>,
}

/// Design matrix `[1, x_1, ..., x_p]` for the given rows.
pub(crate) fn design(ds: &SpaceTimeDataset, rows: &[usize]) -> DMatrix<f64> {
    let q = ds.p() + 1;
    DMatrix::from_fn(rows.len(), q, |i, j| {
        if j == 0 {
            1.0
        } else {
            ds.covariates(rows[i])[j - 1]
        }
    })
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram–Schmidt in column order.
pub(crate) fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).into_owned();
        let norm0 = v.norm();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let norm = v.norm();
        if norm <= RANK_TOL * norm0.max(f64::MIN_POSITIVE) || norm0 == 0.0 {
            bad.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    bad
}

/// Errors with the names of collinear design columns, if any.
pub(crate) fn check_rank(ds: &SpaceTimeDataset, x: &DMatrix<f64>) -> Result<()> {
    let bad = collinear_columns(x);
    if bad.is_empty() {
        return Ok(());
    }
    let columns = bad
        .into_iter()
        .map(|j| {
            if j == 0 {
                "intercept".to_string()
            } else {
                ds.covariate_names()[j - 1].clone()
            }
        })
        .collect();
    Err(Error::RankDeficient { columns })
}

/// Least-squares solve of `x b = y` through a thin QR factorisation.
pub(crate) fn least_squares(x: DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = x.qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

impl Learner for Ols {
    fn kind(&self) -> ModelKind {
        ModelKind::Ols
    }

    fn fit(&self, ds: &SpaceTimeDataset, rows: &[usize], _seed: u64) -> Result<Box<dyn FittedRule>> {
        check_rows(ds, rows, ds.p() + 1)?;
        let x = design(ds, rows);
        check_rank(ds, &x)?;
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ds.y(r)));
        let beta = least_squares(x, &y)
            .ok_or_else(|| Error::RankDeficient { columns: vec!["<triangular solve>".into()] })?;
        Ok(Box::new(OlsFit {
            coefficients: beta.iter().copied().collect(),
        }))
    }
}

impl FittedRule for OlsFit {
    fn kind(&self) -> ModelKind {
        ModelKind::Ols
    }

    fn p(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn predict_one(&self, q: &Query<'_>) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(q.covariates)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    fn describe(&self) -> String {
        let mut s = String::from("model = ols\n");
        for (j, b) in self.coefficients.iter().enumerate() {
            s.push_str(&format!("beta_{j} = {b}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetBuilder;
    use crate::rng::stream;
    use rand::Rng;

    fn dataset(xs: &[Vec<f64>], ys: &[f64]) -> SpaceTimeDataset {
        let p = xs[0].len();
        let mut b = DatasetBuilder::new((1..=p).map(|j| format!("x{j}")).collect());
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let id = format!("s{i}");
            b.location(&id, [i as f64, 0.0]).unwrap();
            b.observe(&id, 0, Some(*y), Some(x.clone())).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn recovers_noiseless_line() {
        let xs: Vec<Vec<f64>> = [0.0, 1.5, -2.0, 4.0].iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x[0]).collect();
        let ds = dataset(&xs, &ys);
        let fit = Ols.fit(&ds, &ds.usable_rows(), 0).unwrap();
        let q = Query { coords: [0.0, 0.0], time: 0, covariates: &[4.0] };
        assert!((fit.predict(&q).unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn two_points_suffice() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ds = dataset(&xs, &[2.0, 5.0]);
        let fit = Ols.fit(&ds, &ds.usable_rows(), 0).unwrap();
        let q = Query { coords: [0.0, 0.0], time: 0, covariates: &[4.0] };
        assert!((fit.predict(&q).unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_only_predicts_mean() {
        let mut b = DatasetBuilder::new(vec![]);
        for (i, y) in [1.0, 2.0, 6.0].iter().enumerate() {
            b.location(&format!("s{i}"), [i as f64, 0.0]).unwrap();
            b.observe(&format!("s{i}"), 0, Some(*y), None).unwrap();
        }
        let ds = b.build().unwrap();
        let fit = Ols.fit(&ds, &ds.usable_rows(), 0).unwrap();
        let q = Query { coords: [9.0, 9.0], time: 3, covariates: &[] };
        assert!((fit.predict(&q).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_design_recovery_and_orthogonality() {
        let mut rng = stream(&[3]);
        let beta = [0.5, -1.0, 2.0, 0.25];
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let ds = dataset(&xs, &ys);
        let rows = ds.usable_rows();
        let fit = Ols.fit(&ds, &rows, 0).unwrap();
        let desc = fit.describe();
        assert!(desc.contains("beta_3"));
        let pred = fit.predict_rows(&ds, &rows).unwrap();
        let mse: f64 = pred.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 30.0;
        assert!(mse < 1e-24);

        // noisy outcome: residuals orthogonal to each design column
        let noisy: Vec<f64> = ys.iter().map(|y| y + rng.random::<f64>() - 0.5).collect();
        let ds = dataset(&xs, &noisy);
        let fit = Ols.fit(&ds, &rows, 0).unwrap();
        let pred = fit.predict_rows(&ds, &rows).unwrap();
        let x = design(&ds, &rows);
        for j in 0..x.ncols() {
            let dot: f64 = (0..rows.len()).map(|i| x[(i, j)] * (noisy[i] - pred[i])).sum();
            let scale: f64 = x.column(j).norm() * 30f64.sqrt();
            assert!(dot.abs() < 1e-8 * scale, "column {j}: {dot}");
        }
    }

    #[test]
    fn rank_deficiency_lists_columns() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        let ys: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ds = dataset(&xs, &ys);
        match Ols.fit(&ds, &ds.usable_rows(), 0) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["x2", "x3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_query_length_is_error() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let ds = dataset(&xs, &[1.0, 2.0, 3.0]);
        let fit = Ols.fit(&ds, &ds.usable_rows(), 0).unwrap();
        let q = Query { coords: [0.0, 0.0], time: 0, covariates: &[1.0, 2.0] };
        assert!(fit.predict(&q).is_err());
    }
}
