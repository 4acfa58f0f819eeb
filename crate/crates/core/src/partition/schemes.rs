use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};
use crate::estimate::EstimatorLabel;
use crate::rng::{fisher_yates, stream};

use super::{Fold, FoldAssignment, FoldUnit, Partitioner};

/// Locations that carry at least one usable row, with those rows.
fn usable_locations(ds: &SpaceTimeDataset) -> Vec<(usize, Vec<usize>)> {
    ds.usable_rows_by_location()
        .into_iter()
        .enumerate()
        .filter(|(_, rows)| !rows.is_empty())
        .collect()
}

fn complement(ds: &SpaceTimeDataset, test: &[usize]) -> Vec<usize> {
    let mut in_test = vec![false; ds.n_cells()];
    for &r in test {
        in_test[r] = true;
    }
    ds.usable_rows().into_iter().filter(|&r| !in_test[r]).collect()
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("K must be at least 2, got {k}")));
    }
    Ok(())
}

/// Shuffles usable rows and deals them round-robin into `k` folds.
pub fn naive_kfold(ds: &SpaceTimeDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_k(k)?;
    let mut rows = ds.usable_rows();
    if k > rows.len() {
        return Err(Error::TooManyFolds { k, units: rows.len() });
    }
    fisher_yates(&mut rows, &mut stream(&[seed]));
    let mut tests = vec![Vec::new(); k];
    for (i, r) in rows.into_iter().enumerate() {
        tests[i % k].push(r);
    }
    let folds = tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = complement(ds, &test);
            Fold {
                test,
                train,
                test_locations: Vec::new(),
            }
        })
        .collect();
    Ok(FoldAssignment {
        folds,
        unit: FoldUnit::Observation,
        label: EstimatorLabel::NaiveCv(k),
        complementary: true,
    })
}

/// Shuffles locations and deals them round-robin into `k` spatial folds; the
/// fold tests every usable row at its locations. Folds are ordered by their
/// first location, so `k = n` reproduces `lolo` fold for fold.
pub fn llo_k(ds: &SpaceTimeDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_k(k)?;
    let mut locs = usable_locations(ds);
    if k > locs.len() {
        return Err(Error::TooManyFolds { k, units: locs.len() });
    }
    fisher_yates(&mut locs, &mut stream(&[seed]));
    let mut groups: Vec<Vec<(usize, Vec<usize>)>> = vec![Vec::new(); k];
    for (i, l) in locs.into_iter().enumerate() {
        groups[i % k].push(l);
    }
    let mut folds: Vec<Fold> = groups
        .into_iter()
        .map(|g| location_fold(ds, g))
        .collect();
    folds.sort_by_key(|f| f.test_locations[0]);
    Ok(FoldAssignment {
        folds,
        unit: FoldUnit::Location,
        label: EstimatorLabel::LloK(k),
        complementary: true,
    })
}

fn location_fold(ds: &SpaceTimeDataset, group: Vec<(usize, Vec<usize>)>) -> Fold {
    let mut test_locations: Vec<usize> = group.iter().map(|(l, _)| *l).collect();
    test_locations.sort_unstable();
    let mut test: Vec<usize> = group.into_iter().flat_map(|(_, rows)| rows).collect();
    test.sort_unstable();
    let train = complement(ds, &test);
    Fold {
        test,
        train,
        test_locations,
    }
}

/// One fold per location, in dataset order.
pub fn lolo(ds: &SpaceTimeDataset) -> Result<FoldAssignment> {
    let locs = usable_locations(ds);
    if locs.len() < 2 {
        return Err(Error::TooFewLocations {
            required: 2,
            found: locs.len(),
        });
    }
    let folds = locs.into_iter().map(|l| location_fold(ds, vec![l])).collect();
    Ok(FoldAssignment {
        folds,
        unit: FoldUnit::Location,
        label: EstimatorLabel::Lolo,
        complementary: true,
    })
}

/// One fold per location; training keeps only locations farther than
/// `buffer_distance` from the test location.
pub fn buffered_llo(ds: &SpaceTimeDataset, buffer_distance: f64) -> Result<FoldAssignment> {
    if !(buffer_distance >= 0.0) || !buffer_distance.is_finite() {
        return Err(Error::invalid(format!(
            "buffer distance must be finite and non-negative, got {buffer_distance}"
        )));
    }
    let locs = usable_locations(ds);
    if locs.len() < 2 {
        return Err(Error::TooFewLocations {
            required: 2,
            found: locs.len(),
        });
    }
    let mut folds = Vec::with_capacity(locs.len());
    for (l, rows) in &locs {
        let here = ds.location(*l);
        let train: Vec<usize> = locs
            .iter()
            .filter(|(m, _)| m != l && ds.location(*m).distance(here) > buffer_distance)
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        if train.is_empty() {
            return Err(Error::EmptyTrainingFold {
                location: here.id.clone(),
            });
        }
        folds.push(Fold {
            test: rows.clone(),
            train,
            test_locations: vec![*l],
        });
    }
    Ok(FoldAssignment {
        folds,
        unit: FoldUnit::Location,
        label: EstimatorLabel::Buffered(buffer_distance),
        complementary: false,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct NaiveKFold {
    pub k: usize,
}

impl NaiveKFold {
    pub fn new(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(NaiveKFold { k })
    }
}

impl Partitioner for NaiveKFold {
    fn name(&self) -> &'static str {
        "naive_kfold"
    }
    fn label(&self) -> EstimatorLabel {
        EstimatorLabel::NaiveCv(self.k)
    }
    fn partition(&self, ds: &SpaceTimeDataset, seed: u64) -> Result<FoldAssignment> {
        naive_kfold(ds, self.k, seed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LeaveLocationOut {
    pub k: usize,
}

impl LeaveLocationOut {
    pub fn new(k: usize) -> Result<Self> {
        check_k(k)?;
        Ok(LeaveLocationOut { k })
    }
}

impl Partitioner for LeaveLocationOut {
    fn name(&self) -> &'static str {
        "llo_k"
    }
    fn label(&self) -> EstimatorLabel {
        EstimatorLabel::LloK(self.k)
    }
    fn partition(&self, ds: &SpaceTimeDataset, seed: u64) -> Result<FoldAssignment> {
        llo_k(ds, self.k, seed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Lolo;

impl Partitioner for Lolo {
    fn name(&self) -> &'static str {
        "lolo"
    }
    fn label(&self) -> EstimatorLabel {
        EstimatorLabel::Lolo
    }
    fn partition(&self, ds: &SpaceTimeDataset, _seed: u64) -> Result<FoldAssignment> {
        lolo(ds)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Buffered {
    pub distance: f64,
}

impl Buffered {
    pub fn new(distance: f64) -> Result<Self> {
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(Error::invalid(format!("invalid buffer distance {distance}")));
        }
        Ok(Buffered { distance })
    }
}

impl Partitioner for Buffered {
    fn name(&self) -> &'static str {
        "buffered"
    }
    fn label(&self) -> EstimatorLabel {
        EstimatorLabel::Buffered(self.distance)
    }
    fn partition(&self, ds: &SpaceTimeDataset, _seed: u64) -> Result<FoldAssignment> {
        buffered_llo(ds, self.distance)
    }
}
