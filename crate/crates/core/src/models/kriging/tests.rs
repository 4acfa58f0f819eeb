use rand::Rng;

use super::*;
use crate::data::DatasetBuilder;
use crate::models::Ols;
use crate::rng::stream;

/// `ns` random locations on [0, 10]² observed at times `1..=nt`, with `y`
/// from `f(coords, time, covariates)`; cells listed in `skip` are left out.
fn grid_dataset(
    ns: usize,
    nt: usize,
    p: usize,
    seed: u64,
    skip: &[(usize, usize)],
    f: impl Fn([f64; 2], i64, &[f64], &mut crate::rng::StreamRng) -> f64,
) -> SpaceTimeDataset {
    let mut rng = stream(&[seed]);
    let names = (0..p).map(|j| format!("x{j}")).collect();
    let mut b = DatasetBuilder::new(names);
    for i in 0..ns {
        let c = [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0];
        b.location(&format!("s{i}"), c).unwrap();
        for t in 1..=nt {
            if skip.contains(&(i, t)) {
                continue;
            }
            let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let y = f(c, t as i64, &x, &mut rng);
            b.observe(&format!("s{i}"), t as i64, Some(y), Some(x)).unwrap();
        }
    }
    b.build().unwrap()
}

fn wavy(c: [f64; 2], t: i64, x: &[f64], _: &mut crate::rng::StreamRng) -> f64 {
    (0.6 * c[0]).sin() + (0.4 * c[1]).cos() + 0.3 * (t as f64).sin() + x.iter().sum::<f64>()
}

fn query(ds: &SpaceTimeDataset, r: usize) -> Query<'_> {
    Query::from_row(ds, r)
}

#[test]
fn nugget_zero_interpolates_training_points() {
    let ds = grid_dataset(6, 5, 2, 1, &[], wavy);
    let rows = ds.usable_rows();
    assert_eq!(rows.len(), 30);
    let fit = Kriging::new(KrigingConfig::fixed(1.0, 3.0, 2.0, 0.0))
        .unwrap()
        .fit_kriging(&ds, &rows)
        .unwrap();
    for &r in &rows {
        let pred = fit.predict(&query(&ds, r)).unwrap();
        let y = ds.y(r);
        assert!((pred - y).abs() <= 1e-8 * y.abs().max(1.0), "{pred} vs {y}");
    }
}

#[test]
fn two_observations_reproduce_the_first() {
    let mut b = DatasetBuilder::new(vec![]);
    b.location("a", [0.0, 0.0]).unwrap();
    b.location("b", [3.0, 1.0]).unwrap();
    b.observe("a", 1, Some(2.5), None).unwrap();
    b.observe("b", 2, Some(-1.0), None).unwrap();
    let ds = b.build().unwrap();
    let fit = Kriging::new(KrigingConfig::fixed(2.0, 2.0, 1.0, 0.0))
        .unwrap()
        .fit(&ds, &[0, 1], 0)
        .unwrap();
    assert!((fit.predict(&query(&ds, 0)).unwrap() - 2.5).abs() < 1e-10);
}

#[test]
fn far_query_returns_regression_mean() {
    let ds = grid_dataset(5, 4, 1, 2, &[], wavy);
    let fit = Kriging::new(KrigingConfig::fixed(1.0, 2.0, 1.0, 0.1))
        .unwrap()
        .fit_kriging(&ds, &ds.usable_rows())
        .unwrap();
    let x = [0.4];
    let q = Query {
        coords: [1e4, -1e4],
        time: 10_000,
        covariates: &x,
    };
    assert!((fit.predict(&q).unwrap() - fit.mean(&x)).abs() < 1e-12);
}

/// Same cells and covariates as `ds` with outcomes replaced.
fn with_outcomes(ds: &SpaceTimeDataset, y: impl Fn(usize) -> f64) -> SpaceTimeDataset {
    let mut b = DatasetBuilder::new(ds.covariate_names().to_vec());
    for l in ds.locations() {
        b.location(&l.id, l.coords).unwrap();
    }
    for r in 0..ds.n_cells() {
        let c = ds.cell(r);
        b.observe(&ds.location(c.location).id, c.time, Some(y(r)), Some(ds.covariates(r).to_vec()))
            .unwrap();
    }
    b.build().unwrap()
}

#[test]
fn predictor_is_linear_in_outcomes() {
    let d1 = grid_dataset(5, 4, 1, 3, &[(0, 2)], wavy);
    let mut rng = stream(&[33]);
    let other: Vec<f64> = (0..d1.n_cells()).map(|_| rng.random::<f64>() * 3.0).collect();
    let d2 = with_outcomes(&d1, |r| other[r]);
    let (a, b) = (1.7, -0.4);
    let d3 = with_outcomes(&d1, |r| a * d1.y(r) + b * d2.y(r));
    let k = Kriging::new(KrigingConfig::fixed(1.5, 2.5, 1.5, 0.2)).unwrap();
    let rows = d1.usable_rows();
    let f1 = k.fit_kriging(&d1, &rows).unwrap();
    let f2 = k.fit_kriging(&d2, &rows).unwrap();
    let f3 = k.fit_kriging(&d3, &rows).unwrap();
    let x = [0.3];
    for (coords, time) in [([1.0, 2.0], 2), ([5.0, 5.0], 3), (d1.coords(0), 1)] {
        let q = Query {
            coords,
            time,
            covariates: &x,
        };
        let lhs = f3.predict(&q).unwrap();
        let rhs = a * f1.predict(&q).unwrap() + b * f2.predict(&q).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn holed_kronecker_solver_matches_dense() {
    let skip = [(0, 1), (2, 3), (2, 4), (4, 6), (1, 6)];
    let ds = grid_dataset(5, 6, 0, 4, &skip, wavy);
    let rows = ds.usable_rows();
    let layout = Layout::new(&ds, &rows);
    assert_eq!(layout.holes.len(), skip.len());
    let ks = solver::spatial_corr(&layout, 3.0);
    let kt = solver::temporal_corr(&layout, 2.0);
    let (es, et) = (Eigen::of(ks.clone()), Eigen::of(kt.clone()));
    let share = 0.15;
    let kron = KronSolver::new(&layout, &es, &et, share).unwrap();
    let dense = DenseSolver::new(&layout, &ks, &kt, share, false).unwrap();
    assert!((kron.logdet() - dense.logdet()).abs() < 1e-8 * dense.logdet().abs().max(1.0));
    let v: Vec<f64> = rows.iter().map(|&r| ds.y(r)).collect();
    let (a, b) = (kron.solve(&v), dense.solve(&v));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-8 * y.abs().max(1.0));
    }
}

#[test]
fn vanishing_signal_variance_gives_gls_mean() {
    let ds = grid_dataset(6, 5, 1, 5, &[], wavy);
    let fit = Kriging::new(KrigingConfig::fixed(1e-14, 3.0, 2.0, 1.0))
        .unwrap()
        .fit_kriging(&ds, &ds.usable_rows())
        .unwrap();
    let ols = Ols.fit(&ds, &ds.usable_rows(), 0).unwrap();
    let x = [0.5];
    let q = Query {
        coords: [2.5, 2.5],
        time: 3,
        covariates: &x,
    };
    let pred = fit.predict(&q).unwrap();
    assert!((pred - fit.mean(&x)).abs() < 1e-12);
    // identity correlation: GLS coincides with OLS
    assert!((pred - ols.predict(&q).unwrap()).abs() < 1e-10);
}

#[test]
fn pure_nugget_data_collapses_to_gls_mean() {
    let ds = grid_dataset(15, 8, 1, 5, &[], |_, _, x, rng| {
        1.0 + 2.0 * x[0] + crate::rng::open_unit(rng) - 0.5
    });
    let rows = ds.usable_rows();
    let fit = Kriging::new(KrigingConfig::default())
        .unwrap()
        .fit_kriging(&ds, &rows)
        .unwrap();
    // noise sd is 1/sqrt(12) ≈ 0.29
    let x = [0.5];
    for coords in [[2.5, 2.5], [7.0, 1.0], [9.0, 8.0]] {
        for time in [2, 5] {
            let q = Query {
                coords,
                time,
                covariates: &x,
            };
            let pred = fit.predict(&q).unwrap();
            assert!((pred - fit.mean(&x)).abs() < 0.1, "{pred} vs {}", fit.mean(&x));
        }
    }
}

#[test]
fn likelihood_fit_is_finite_and_deterministic() {
    let ds = grid_dataset(7, 5, 1, 6, &[(3, 3)], wavy);
    let rows = ds.usable_rows();
    let k = Kriging::new(KrigingConfig::default()).unwrap();
    let a = k.fit_kriging(&ds, &rows).unwrap();
    let b = k.fit_kriging(&ds, &rows).unwrap();
    assert_eq!(a.params(), b.params());
    let p = a.params();
    assert!(p.sigma2 > 0.0 && p.v_s > 0.0 && p.v_t > 0.0 && p.nugget >= 0.0);
    assert!(a.loglik().is_finite());
    // Smooth signal: the fitted nugget is a small share of the variance.
    assert!(p.nugget < p.sigma2);
    let text = a.describe();
    for key in ["sigma2 = ", "v_s = ", "v_t = ", "nugget = ", "beta_0 = ", "beta_1 = "] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn kronecker_and_dense_fixed_fits_agree() {
    let ds = grid_dataset(12, 8, 1, 7, &[(1, 1), (5, 4)], wavy);
    let rows = ds.usable_rows();
    let layout = Layout::new(&ds, &rows);
    let xm = design(&ds, &rows);
    let x: Vec<Vec<f64>> = (0..xm.ncols()).map(|j| xm.column(j).iter().copied().collect()).collect();
    let y: Vec<f64> = rows.iter().map(|&r| ds.y(r)).collect();
    let (ks, kt) = (solver::spatial_corr(&layout, 2.0), solver::temporal_corr(&layout, 3.0));
    let (es, et) = (Eigen::of(ks.clone()), Eigen::of(kt.clone()));
    let g1 = gls(&KronSolver::new(&layout, &es, &et, 0.3).unwrap(), &x, &y).unwrap();
    let g2 = gls(&DenseSolver::new(&layout, &ks, &kt, 0.3, false).unwrap(), &x, &y).unwrap();
    for (a, b) in g1.beta.iter().zip(&g2.beta) {
        assert!((a - b).abs() < 1e-8);
    }
    assert!((g1.quad - g2.quad).abs() < 1e-8 * g2.quad);
}

#[test]
fn preconditions_are_checked() {
    let k = Kriging::new(KrigingConfig::default()).unwrap();
    let ds = grid_dataset(1 + 1, 1, 0, 8, &[], wavy);
    assert!(matches!(k.fit(&ds, &ds.usable_rows(), 0), Err(Error::InvalidInput(_))));
    let ds = grid_dataset(3, 3, 2, 9, &[], wavy);
    assert!(k.fit(&ds, &[0, 1, 2], 0).is_err());
    // duplicated covariate column
    let mut b = DatasetBuilder::new(vec!["a".into(), "b".into()]);
    for (i, c) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
        b.location(&i.to_string(), *c).unwrap();
        for t in 0..3 {
            let v = (i * 3 + t) as f64;
            b.observe(&i.to_string(), t as i64, Some(v.sin()), Some(vec![v, 2.0 * v])).unwrap();
        }
    }
    let ds = b.build().unwrap();
    match k.fit(&ds, &ds.usable_rows(), 0) {
        Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["b".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn config_from_spec() {
    let s = ModelSpec::new("kriging").with("v_s", 1.0);
    assert!(KrigingConfig::from_spec(&s).is_err());
    let s = ModelSpec::new("kriging")
        .with("sigma2", 1.0)
        .with("v_s", 2.0)
        .with("v_t", 3.0)
        .with("nugget", 0.0)
        .with("max_sweeps", 2.0);
    let c = KrigingConfig::from_spec(&s).unwrap();
    assert_eq!(c.fixed, Some(FixedCovariance { sigma2: 1.0, v_s: 2.0, v_t: 3.0, nugget: 0.0 }));
    assert_eq!(c.max_sweeps, 2);
    assert!(Kriging::new(KrigingConfig::fixed(-1.0, 1.0, 1.0, 0.0)).is_err());
    assert!(KrigingConfig::from_spec(&ModelSpec::new("kriging").with("range", 1.0)).is_err());
}
