use proptest::prelude::*;
use stcv_core::data::DatasetBuilder;
use stcv_core::estimate::cv_estimate;
use stcv_core::models::{ForestParams, RandomForest};
use stcv_core::partition::{buffered_llo, llo_k, lolo, naive_kfold};
use stcv_core::{mse_loss, SpaceTimeDataset};

/// Locations at the given coordinates observed at `m` times; cells whose
/// flag is set have a missing outcome.
fn dataset(coords: &[(f64, f64)], m: usize, missing: &[bool]) -> SpaceTimeDataset {
    let mut b = DatasetBuilder::new(vec!["x".into()]);
    for (i, &(x, y)) in coords.iter().enumerate() {
        let id = format!("L{i}");
        b.location(&id, [x, y]).unwrap();
        for t in 0..m {
            let k = i * m + t;
            let out = if missing.get(k).copied().unwrap_or(false) && t > 0 {
                None
            } else {
                Some((x * 0.3 + t as f64).sin() + y * 0.01)
            };
            b.observe(&id, t as i64, out, Some(vec![x + t as f64])).unwrap();
        }
    }
    b.build().unwrap()
}

fn coords() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..20.0, 0.0f64..20.0), 2..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_scheme_has_disjoint_covering_tests(
        pts in coords(),
        m in 1usize..5,
        missing in prop::collection::vec(prop::bool::weighted(0.1), 60),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let ds = dataset(&pts, m, &missing);
        let n_loc = ds.n_locations();
        let mut schemes = vec![lolo(&ds).unwrap()];
        if k <= ds.n_usable() {
            schemes.push(naive_kfold(&ds, k, seed).unwrap());
        }
        if k <= n_loc {
            schemes.push(llo_k(&ds, k, seed).unwrap());
        }
        for s in &schemes {
            s.validate(&ds).unwrap();
            prop_assert_eq!(s.folds.iter().map(|f| f.test.len()).sum::<usize>(), ds.n_usable());
        }
        if k <= ds.n_usable() {
            let sizes: Vec<usize> = schemes[1].folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn llo_with_k_equal_n_is_lolo(pts in coords(), m in 1usize..4, seed in any::<u64>()) {
        let ds = dataset(&pts, m, &[]);
        let a = llo_k(&ds, ds.n_locations(), seed).unwrap();
        let b = lolo(&ds).unwrap();
        prop_assert_eq!(a.canonical_folds(), b.canonical_folds());
    }

    #[test]
    fn buffered_training_shrinks_with_distance(pts in coords(), d1 in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let ds = dataset(&pts, 2, &[]);
        let d2 = d1 + extra;
        let (Ok(a), Ok(b)) = (buffered_llo(&ds, d1), buffered_llo(&ds, d2)) else {
            return Ok(());
        };
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            prop_assert_eq!(&fa.test, &fb.test);
            prop_assert!(fb.train.iter().all(|r| fa.train.contains(r)));
        }
    }
}

#[test]
fn llo_n_and_lolo_reports_are_identical() {
    let pts: Vec<(f64, f64)> = (0..9).map(|i| ((i * 7 % 9) as f64, (i * 4 % 5) as f64)).collect();
    let ds = dataset(&pts, 3, &[]);
    let rf = RandomForest::new(ForestParams {
        n_trees: 25,
        ..ForestParams::default()
    })
    .unwrap();
    for seed in [1, 77, 12345] {
        let a = cv_estimate(&ds, &llo_k(&ds, 9, seed).unwrap(), &rf, mse_loss, 5).unwrap();
        let b = cv_estimate(&ds, &lolo(&ds).unwrap(), &rf, mse_loss, 5).unwrap();
        assert_eq!(a.report.per_fold, b.report.per_fold);
        assert_eq!(a.report.estimate, b.report.estimate);
        assert_eq!(a.predictions, b.predictions);
    }
}
