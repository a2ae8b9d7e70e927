//! Backward nested descriptors on spheres: principal nested (great) spheres,
//! the Ziezold metric between nested families, local charts, and bootstrap
//! two-sample tests on descriptor means.

pub mod descriptors;
pub mod error;
pub mod fitting;
pub mod inference;
pub mod io;
pub mod pipeline;
pub mod simulate;
pub mod sphere;

pub use descriptors::{Mode, NestedFamily, RelativeStep, Subsphere};
pub use error::{Error, Result};
pub use fitting::{fit_bnfd, FitConfig, FitReport};
pub use inference::{two_sample_test, TestLevel, TestReport, TestSpec};
pub use sphere::{Seed, UnitVector};
