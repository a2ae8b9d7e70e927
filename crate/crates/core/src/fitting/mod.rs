//! Backward fitting of nested families to data on a sphere.

mod bnfd;
mod circular;
mod subsphere;

pub use bnfd::{fit_bnfd, FitReport};
pub use circular::{circular_distance, circular_frechet_mean};
pub use subsphere::{fit_subsphere, fit_subsphere_detailed, SubsphereFit};

use serde::{Deserialize, Serialize};

use crate::descriptors::Mode;
use crate::error::{Error, Result};
use crate::sphere::Seed;

/// Settings for [`fit_subsphere`] and [`fit_bnfd`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub mode: Mode,
    /// Number of backward steps; `None` fits down to the nested mean.
    pub depth: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Initial Levenberg damping, relative to the mean curvature.
    pub damping: f64,
    pub seed: Seed,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mode: Mode::Pns,
            depth: None,
            restarts: 5,
            max_iter: 200,
            grad_tol: 1e-10,
            damping: 1e-3,
            seed: Seed::new(0),
        }
    }
}

impl FitConfig {
    pub fn new(mode: Mode) -> Self {
        FitConfig { mode, ..Default::default() }
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self, m: usize) -> Result<usize> {
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("at least one restart is required".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.grad_tol >= 0.0 && self.damping > 0.0) {
            return Err(Error::InvalidParameter("grad_tol and damping must be positive".into()));
        }
        let depth = self.depth.unwrap_or(m);
        if depth == 0 || depth > m {
            return Err(Error::InvalidParameter(format!(
                "depth {depth} is outside 1..={m} for data on S^{m}"
            )));
        }
        Ok(depth)
    }
}
