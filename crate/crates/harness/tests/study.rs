use stcv_core::models::ModelSpec;
use stcv_core::partition::PartitionSpec;
use stcv_harness::config::{ScenarioEntry, StudyConfig};
use stcv_harness::study::{run_study, AggregateRow, AGGREGATE_COLUMNS, TRUE_GRID};

fn quick_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new("ols"),
        ModelSpec::new("random_forest").with("n_trees", 20.0),
        ModelSpec::new("kriging")
            .with("sigma2", 1.0)
            .with("v_s", 1.8)
            .with("v_t", 2.4)
            .with("nugget", 0.05),
    ]
}

fn quick_estimators() -> Vec<PartitionSpec> {
    vec![
        PartitionSpec::new("naive_kfold").with_k(10).with_label("naive_cv10"),
        PartitionSpec::new("llo_k").with_k(10).with_label("llo_10"),
        PartitionSpec::new("lolo"),
        PartitionSpec::new("buffered").with_buffer_fraction(0.15).with_label("buffered_medium"),
    ]
}

fn quick_config(reps: usize, seed: u64) -> StudyConfig {
    StudyConfig {
        master_seed: seed,
        replicates: reps,
        condvar_replicates: 1,
        scenarios: vec![ScenarioEntry::new(1)],
        models: quick_models(),
        estimators: quick_estimators(),
        ..StudyConfig::default()
    }
}

#[test]
fn five_replicates_give_a_row_per_model_estimator_and_replicate() {
    let res = run_study(&quick_config(5, 42)).unwrap();
    assert_eq!(res.n_failures(), 0, "{:?}", res.aggregate.iter().find(|r| r.error.is_some()));
    assert_eq!(res.aggregate.len(), 5 * 3 * (4 + 1));
    for rep in 0..5 {
        for m in ["ols", "random_forest", "kriging"] {
            let names: Vec<&str> = res
                .aggregate
                .iter()
                .filter(|r| r.replicate == rep && r.model == m)
                .map(|r| r.estimator.as_str())
                .collect();
            assert_eq!(names, [TRUE_GRID, "naive_cv10", "llo_10", "lolo", "buffered_medium"]);
        }
    }
    let lolo = res.aggregate.iter().find(|r| r.estimator == "lolo").unwrap();
    assert_eq!((lolo.n_folds, lolo.n_test), (50, 500));
    let truth = res.aggregate.iter().find(|r| r.estimator == TRUE_GRID).unwrap();
    assert_eq!(truth.n_test, 350 * 10);

    // fold losses carry every non-truth estimate
    let folds = |r: &AggregateRow| res.folds.iter().filter(|f| f.replicate == r.replicate && f.model == r.model && f.estimator == r.estimator).count();
    assert!(res.aggregate.iter().filter(|r| r.estimator != TRUE_GRID).all(|r| folds(r) == r.n_folds));

    // conditional variances only for the first replicate
    assert!(!res.condvar.is_empty());
    assert!(res.condvar.iter().all(|c| c.replicate == 0 && c.cond_var >= 0.0));
    assert!(res.condvar.iter().all(|c| c.sq_error.is_some()));
}

#[test]
fn same_seed_gives_byte_identical_tables() {
    let mut cfg = quick_config(2, 7);
    cfg.models.truncate(2);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_study(&cfg).unwrap().write(a.path()).unwrap();
    run_study(&cfg).unwrap().write(b.path()).unwrap();
    for f in ["aggregate.csv", "folds.csv", "condvar.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let header = std::fs::read_to_string(a.path().join("aggregate.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), AGGREGATE_COLUMNS.join(","));

    cfg.master_seed = 8;
    let c = tempfile::tempdir().unwrap();
    run_study(&cfg).unwrap().write(c.path()).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("aggregate.csv")).unwrap(),
        std::fs::read(c.path().join("aggregate.csv")).unwrap()
    );
}

#[test]
fn failing_model_becomes_error_rows() {
    // two observed locations cannot fill ten location folds
    let mut cfg = quick_config(1, 3);
    cfg.scenarios = vec![ScenarioEntry {
        n_observed: Some(5),
        ..ScenarioEntry::new(1)
    }];
    cfg.models.truncate(1);
    cfg.condvar_replicates = 0;
    let res = run_study(&cfg).unwrap();
    let llo = res.aggregate.iter().find(|r| r.estimator == "llo_10").unwrap();
    assert!(llo.estimate.is_none() && llo.error.is_some());
    assert!(res.aggregate.iter().any(|r| r.estimate.is_some()));
    assert_eq!(res.n_failures(), 1);
}
