//! Orchestration for space-time cross-validation studies.
//!
//! - [`config`]: TOML study and case-study configuration.
//! - [`study`]: the simulation battery and its CSV tables.
//! - [`case_study`]: per-interval evaluation of a monitor network.
//! - [`bands`], [`lowess`], [`kde`]: summaries used by the figures.
//! - [`plot`]: SVG figures from the result tables.

pub mod bands;
pub mod case_study;
pub mod config;
pub mod error;
pub mod kde;
pub mod lowess;
pub mod plot;
pub mod study;

pub use config::{CaseStudyConfig, StudyConfig};
pub use error::{HarnessError, Result};
pub use study::{run_study, StudyResults};
