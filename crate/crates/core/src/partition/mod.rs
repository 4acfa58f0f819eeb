//! Fold assignments: which observations are tested in each fold and which
//! are available for training.
//!
//! Schemes implement [`Partitioner`] and are looked up by name through a
//! [`PartitionRegistry`]. The free functions [`naive_kfold`], [`llo_k`],
//! [`lolo`] and [`buffered_llo`] are the underlying constructions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SpaceTimeDataset;
use crate::error::{Error, Result};
use crate::estimate::EstimatorLabel;

mod schemes;

pub use schemes::{buffered_llo, llo_k, lolo, naive_kfold, Buffered, LeaveLocationOut, Lolo, NaiveKFold};

/// Small / medium / large buffer as a fraction of the spatial domain diameter.
pub const DEFAULT_BUFFER_FRACTIONS: [f64; 3] = [0.05, 0.15, 0.30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldUnit {
    Observation,
    Location,
}

/// One test fold. Rows index cells of the partitioned dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
    /// Location indices held out by this fold (empty for observation folds).
    pub test_locations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub folds: Vec<Fold>,
    pub unit: FoldUnit,
    pub label: EstimatorLabel,
    /// True when every fold trains on all usable rows outside its test set.
    pub complementary: bool,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Folds with sorted row sets, themselves sorted; equal for assignments
    /// that differ only in fold order.
    pub fn canonical_folds(&self) -> Vec<Fold> {
        let mut folds = self.folds.clone();
        for f in &mut folds {
            f.test.sort_unstable();
            f.train.sort_unstable();
            f.test_locations.sort_unstable();
        }
        folds.sort_by(|a, b| a.test.cmp(&b.test));
        folds
    }

    /// Checks disjointness of test sets and, for complementary schemes, that
    /// test and training sets together cover every usable row.
    pub fn validate(&self, ds: &SpaceTimeDataset) -> Result<()> {
        let n = ds.n_cells();
        let mut seen = vec![false; n];
        for (k, f) in self.folds.iter().enumerate() {
            let mut in_test = vec![false; n];
            for &r in &f.test {
                if r >= n || !ds.is_usable(r) {
                    return Err(Error::invalid(format!("fold {k}: row {r} is not usable")));
                }
                if seen[r] {
                    return Err(Error::invalid(format!("row {r} appears in two test sets")));
                }
                seen[r] = true;
                in_test[r] = true;
            }
            if f.train.iter().any(|&r| in_test[r]) {
                return Err(Error::invalid(format!("fold {k}: train and test overlap")));
            }
            if self.complementary && f.train.len() + f.test.len() != ds.n_usable() {
                return Err(Error::invalid(format!("fold {k}: train ∪ test is not every usable row")));
            }
        }
        Ok(())
    }
}

/// A data-partitioning scheme.
pub trait Partitioner: Send + Sync {
    fn name(&self) -> &'static str;
    fn label(&self) -> EstimatorLabel;
    /// `seed` drives any shuffling; deterministic schemes ignore it.
    fn partition(&self, ds: &SpaceTimeDataset, seed: u64) -> Result<FoldAssignment>;
}

/// Configuration-level description of a partition scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: String,
    #[serde(default)]
    pub k: Option<usize>,
    /// Absolute buffer distance (buffered scheme).
    #[serde(default)]
    pub buffer_distance: Option<f64>,
    /// Buffer as a fraction of the domain diameter (buffered scheme).
    #[serde(default)]
    pub buffer_fraction: Option<f64>,
    /// Display label overriding the scheme's default.
    #[serde(default)]
    pub label: Option<String>,
}

impl PartitionSpec {
    pub fn new(scheme: &str) -> Self {
        PartitionSpec {
            scheme: scheme.to_string(),
            k: None,
            buffer_distance: None,
            buffer_fraction: None,
            label: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_buffer_fraction(mut self, f: f64) -> Self {
        self.buffer_fraction = Some(f);
        self
    }

    pub fn with_buffer_distance(mut self, d: f64) -> Self {
        self.buffer_distance = Some(d);
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }
}

type PartitionFactory = fn(&PartitionSpec, f64) -> Result<Box<dyn Partitioner>>;

/// Name → constructor table for partition schemes.
pub struct PartitionRegistry {
    entries: BTreeMap<String, PartitionFactory>,
}

impl Default for PartitionRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl PartitionRegistry {
    pub fn empty() -> Self {
        PartitionRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("naive_kfold", |s, _| {
            Ok(Box::new(NaiveKFold::new(s.k.unwrap_or(10))?))
        });
        r.register("llo_k", |s, _| {
            Ok(Box::new(LeaveLocationOut::new(s.k.unwrap_or(10))?))
        });
        r.register("lolo", |_, _| Ok(Box::new(Lolo)));
        r.register("buffered", |s, diameter| {
            let d = match (s.buffer_distance, s.buffer_fraction) {
                (Some(d), None) => d,
                (None, Some(f)) => f * diameter,
                (None, None) => DEFAULT_BUFFER_FRACTIONS[1] * diameter,
                (Some(_), Some(_)) => {
                    return Err(Error::invalid(
                        "buffered scheme takes either buffer_distance or buffer_fraction, not both",
                    ))
                }
            };
            Ok(Box::new(Buffered::new(d)?))
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: PartitionFactory) {
        self.entries.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Builds the scheme named by `spec.scheme`. `domain_diameter` resolves
    /// fractional buffers.
    pub fn build(&self, spec: &PartitionSpec, domain_diameter: f64) -> Result<Box<dyn Partitioner>> {
        let f = self
            .entries
            .get(&spec.scheme)
            .ok_or_else(|| Error::UnknownStrategy {
                kind: "partition scheme",
                name: spec.scheme.clone(),
            })?;
        f(spec, domain_diameter)
    }
}
