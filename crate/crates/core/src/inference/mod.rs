//! Bootstrap two-sample tests on nested descriptors and Monte Carlo studies
//! of the estimators' large-sample behaviour.

mod asymptotics;
mod covariance;

pub use asymptotics::{run_asymptotics_study, StudyReport, StudyRow};
pub use covariance::{bootstrap_covariance, bootstrap_covariance_with, covariance_of, CovarianceEstimate};
pub use test::{t_squared, two_sample_test, two_sample_tests, TestReport};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::descriptors::{BnfdChart, NestedFamily, PointChart, SubsphereChart};
use crate::error::{Error, Result};
use crate::sphere::{Seed, UnitVector};

/// Which part of a fitted family enters the test statistic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestLevel {
    /// The descriptor of dimension `j`; `0` is the nested mean.
    Descriptor(usize),
    /// The whole fitted family in one joint chart.
    Joint,
}

impl TestLevel {
    pub const MEAN: TestLevel = TestLevel::Descriptor(0);
    pub const CIRCLE: TestLevel = TestLevel::Descriptor(1);
}

impl fmt::Display for TestLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestLevel::Descriptor(j) => write!(f, "{j}d"),
            TestLevel::Joint => f.write_str("joint"),
        }
    }
}

impl FromStr for TestLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "mean" => Ok(TestLevel::MEAN),
            "circle" => Ok(TestLevel::CIRCLE),
            "joint" => Ok(TestLevel::Joint),
            other => other
                .strip_suffix('d')
                .and_then(|j| j.parse().ok())
                .map(TestLevel::Descriptor)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("unknown test level '{s}' (mean, circle, joint or <j>d)"))
                }),
        }
    }
}

impl Serialize for TestLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TestLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings of the bootstrap two-sample test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSpec {
    pub level: TestLevel,
    /// Resamples per group used to estimate the covariance.
    pub b_cov: usize,
    /// Pooled resamples used to simulate the null distribution.
    pub b_null: usize,
    pub alpha: f64,
    pub seed: Seed,
    /// Relative ridge added when the covariance is ill-conditioned.
    pub ridge: f64,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec { level: TestLevel::MEAN, b_cov: 200, b_null: 1000, alpha: 0.05, seed: Seed::new(0), ridge: 1e-8 }
    }
}

impl TestSpec {
    pub fn new(level: TestLevel, seed: Seed) -> Self {
        TestSpec { level, seed, ..Default::default() }
    }

    pub fn with_replicates(mut self, b_cov: usize, b_null: usize) -> Self {
        self.b_cov = b_cov;
        self.b_null = b_null;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.b_cov < 2 || self.b_null == 0 {
            return Err(Error::InvalidParameter(
                "need at least 2 covariance and 1 null replicate".into(),
            ));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        if self.b_cov < 100 || self.b_null < 100 {
            log::warn!("fewer than 100 bootstrap replicates; p-values will be coarse");
        }
        Ok(())
    }
}

/// Chart in which a test level is coordinatized, based at a reference family.
#[derive(Clone, Debug)]
pub(crate) enum LevelChart {
    Point(PointChart),
    Class(usize, SubsphereChart),
    Family(BnfdChart),
}

impl LevelChart {
    pub(crate) fn new(level: TestLevel, base: &NestedFamily) -> Result<Self> {
        match level {
            TestLevel::Descriptor(0) => {
                let mean = base.nested_mean().ok_or_else(|| {
                    Error::InvalidParameter("the fitted family does not reach the nested mean".into())
                })?;
                Ok(LevelChart::Point(PointChart::new(&mean)))
            }
            TestLevel::Descriptor(j) => {
                let p = base.level_of_dim(j).ok_or_else(|| {
                    Error::InvalidParameter(format!("the fitted family has no {j}-dimensional descriptor"))
                })?;
                Ok(LevelChart::Class(j, SubsphereChart::new(p)?))
            }
            TestLevel::Joint => Ok(LevelChart::Family(BnfdChart::new(base)?)),
        }
    }

    pub(crate) fn dim(&self) -> usize {
        match self {
            LevelChart::Point(c) => c.dim(),
            LevelChart::Class(_, c) => c.dim(),
            LevelChart::Family(c) => c.dim(),
        }
    }

    pub(crate) fn coords(&self, family: &NestedFamily) -> Result<DVector<f64>> {
        match self {
            LevelChart::Point(c) => {
                let q = family.nested_mean().ok_or_else(|| {
                    Error::InvalidParameter("the fitted family does not reach the nested mean".into())
                })?;
                c.coords(&q)
            }
            LevelChart::Class(j, c) => {
                let p = family.level_of_dim(*j).ok_or_else(|| {
                    Error::InvalidParameter(format!("the fitted family has no {j}-dimensional descriptor"))
                })?;
                c.coords(p)
            }
            LevelChart::Family(c) => Ok(c.coords(family)?.to_vector()),
        }
    }
}

/// Order-independent FNV-1a fingerprint of a sample.
pub(crate) fn sample_fingerprint(points: &[UnitVector]) -> u64 {
    let mut rows: Vec<&[f64]> = points.iter().map(UnitVector::as_slice).collect();
    rows.sort_by(|a, b| {
        a.iter().zip(*b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for row in rows {
        for x in row {
            for byte in x.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_names_round_trip() {
        for (s, level) in [
            ("mean", TestLevel::MEAN),
            ("circle", TestLevel::CIRCLE),
            ("joint", TestLevel::Joint),
            ("2d", TestLevel::Descriptor(2)),
        ] {
            let parsed: TestLevel = s.parse().unwrap();
            assert_eq!(parsed, level);
            assert_eq!(parsed.to_string().parse::<TestLevel>().unwrap(), level);
        }
        assert!("sideways".parse::<TestLevel>().is_err());
        let json = serde_json::to_string(&TestLevel::Descriptor(1)).unwrap();
        assert_eq!(json, "\"1d\"");
    }

    #[test]
    fn spec_validation() {
        assert!(TestSpec::default().validate().is_ok());
        let bad = TestSpec { alpha: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TestSpec { b_cov: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_order() {
        let a = UnitVector::from_slice(&[1.0, 0.0]).unwrap();
        let b = UnitVector::from_slice(&[0.0, 1.0]).unwrap();
        assert_eq!(sample_fingerprint(&[a.clone(), b.clone()]), sample_fingerprint(&[b.clone(), a.clone()]));
        assert_ne!(sample_fingerprint(std::slice::from_ref(&a)), sample_fingerprint(&[b]));
    }
}
