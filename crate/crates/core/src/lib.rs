//! Cross-validation estimators of space-time prediction error.
//!
//! The crate is organised around two families of interchangeable strategies:
//! data partitioners ([`partition::Partitioner`]) and prediction rules
//! ([`models::Learner`]). Both are registered by name so that studies can be
//! assembled from configuration at runtime.
//!
//! - [`data`]: the marked point-pattern dataset and its CSV format.
//! - [`loss`]: squared-error loss.
//! - [`partition`]: naive K-fold, leave-location-out (K-fold and one-at-a-time)
//!   and spatially buffered fold assignments.
//! - [`models`]: linear regression, random forest and universal kriging with a
//!   separable space-time covariance.
//! - [`estimate`]: cross-validated, out-of-bag, validation and true-grid errors.
//! - [`sim`]: Gaussian-process simulation of covariates and outcome on a lattice.
//! - [`condvar`]: exact conditional variances of held-out cells.

pub mod condvar;
pub mod data;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod loss;
pub mod models;
pub mod partition;
pub mod rng;
pub mod sim;

pub use data::{DatasetBuilder, Location, Observation, SpaceTimeDataset};
pub use error::{Error, Result};
pub use estimate::{ErrorReport, EstimatorLabel};
pub use loss::{mse_loss, LossValue};
pub use models::{FittedRule, Learner, ModelRegistry};
pub use partition::{FoldAssignment, FoldUnit, PartitionRegistry, Partitioner};
