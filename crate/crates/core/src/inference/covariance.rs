use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::{sample_fingerprint, LevelChart, TestSpec};
use crate::descriptors::NestedFamily;
use crate::error::{Error, Result};
use crate::fitting::{fit_bnfd, FitConfig};
use crate::sphere::{Seed, UnitVector};

/// Tag mixed into covariance seeds so they never collide with null seeds.
pub(crate) const COV_TAG: u64 = 0x636f_7661_7269_616e;

/// Bootstrap covariance together with its replicate bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    /// Replicates that contributed.
    pub replicates: usize,
    /// Replicates whose fit or chart evaluation failed.
    pub skipped: usize,
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub(crate) fn resample_indices(n: usize, seed: Seed) -> Vec<usize> {
    let mut rng = seed.rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Runs `b` bootstrap replicates of size `n` in parallel; results come back
/// in replicate order.
pub(crate) fn bootstrap_replicates<T, F>(n: usize, b: usize, seed: Seed, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync,
{
    (0..b)
        .into_par_iter()
        .map(|r| f(&resample_indices(n, seed.child(r as u64))))
        .collect()
}

pub(crate) fn check_degenerate(skipped: usize, total: usize) -> Result<()> {
    if skipped * 10 > total {
        return Err(Error::TooManyDegenerate { skipped, total });
    }
    Ok(())
}

/// Sample covariance (divisor `len − 1`) of a list of equally sized vectors.
pub fn covariance_of(replicates: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let Some(first) = replicates.first() else {
        return Err(Error::InsufficientData { level: 0, needed: 2, found: 0 });
    };
    if replicates.len() < 2 {
        return Err(Error::InsufficientData { level: 0, needed: 2, found: replicates.len() });
    }
    let d = first.len();
    // shifting by the first replicate keeps constant inputs exactly zero
    let mut mean = DVector::zeros(d);
    for r in replicates {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: r.len() });
        }
        mean += r - first;
    }
    mean /= replicates.len() as f64;
    let mut cov = DMatrix::zeros(d, d);
    for r in replicates {
        let c = r - first - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov /= (replicates.len() - 1) as f64;
    cov.fill_upper_triangle_with_lower_triangle();
    Ok(cov)
}

/// Bootstrap covariance of an arbitrary vector statistic of resampled
/// indices. Failed replicates are skipped; more than 10% failures is an
/// error.
pub fn bootstrap_covariance_with<F>(n: usize, b: usize, seed: Seed, stat: F) -> Result<CovarianceEstimate>
where
    F: Fn(&[usize]) -> Result<DVector<f64>> + Sync,
{
    if n == 0 {
        return Err(Error::InsufficientData { level: 0, needed: 1, found: 0 });
    }
    let results = bootstrap_replicates(n, b, seed, stat);
    let ok: Vec<DVector<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let skipped = b - ok.len();
    check_degenerate(skipped, b)?;
    Ok(CovarianceEstimate { matrix: covariance_of(&ok)?, replicates: ok.len(), skipped })
}

/// Covariance of the chart coordinates of `spec.level` over families fitted
/// to `spec.b_cov` resamples of `sample`, in the chart based at `base`.
///
/// The resampling seed depends on `spec.seed` and on the sample's content,
/// not on its position in a two-sample call.
pub fn bootstrap_covariance(
    sample: &[UnitVector],
    spec: &TestSpec,
    base: &NestedFamily,
    cfg: &FitConfig,
) -> Result<CovarianceEstimate> {
    spec.validate()?;
    let chart = LevelChart::new(spec.level, base)?;
    let seed = covariance_seed(spec.seed, sample);
    bootstrap_covariance_with(sample.len(), spec.b_cov, seed, |idx| {
        let pts: Vec<UnitVector> = idx.iter().map(|&i| sample[i].clone()).collect();
        let fit = fit_bnfd(&pts, cfg)?;
        chart.coords(&fit.family)
    })
}

pub(crate) fn covariance_seed(seed: Seed, sample: &[UnitVector]) -> Seed {
    seed.child(COV_TAG ^ sample_fingerprint(sample))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_statistic_has_zero_covariance() {
        let c = DVector::from_vec(vec![0.3, -1.0]);
        let est = bootstrap_covariance_with(10, 50, Seed::new(1), |_| Ok(c.clone())).unwrap();
        assert_eq!(est.matrix, DMatrix::zeros(2, 2));
        assert_eq!(est.skipped, 0);
    }

    /// Exact covariance of the resample mean over all multinomial count
    /// vectors for `n = 4` points with values `a, a, b, b`.
    fn enumerated_covariance(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        let n = 4usize;
        let values = [a, a, b, b];
        let mut total = 0.0;
        let mut first = DVector::zeros(a.len());
        let mut second = DMatrix::zeros(a.len(), a.len());
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    for i3 in 0..n {
                        let mut s = DVector::zeros(a.len());
                        for &i in &[i0, i1, i2, i3] {
                            s += values[i];
                        }
                        s /= n as f64;
                        second += &s * s.transpose();
                        first += s;
                        total += 1.0;
                    }
                }
            }
        }
        first /= total;
        second / total - &first * first.transpose()
    }

    #[test]
    fn two_point_cloud_matches_enumeration() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![-1.0, 0.5]);
        let exact = enumerated_covariance(&a, &b);
        // closed form: outer((a − b)/2) scaled by the Bernoulli resample variance 1/n
        let half = (&a - &b) / 2.0;
        let closed = &half * half.transpose() / 4.0;
        assert!((&exact - &closed).amax() < 1e-12);

        let values = [a.clone(), a.clone(), b.clone(), b.clone()];
        let est = bootstrap_covariance_with(4, 40_000, Seed::new(11), |idx| {
            Ok(idx.iter().map(|&i| values[i].clone()).sum::<DVector<f64>>() / 4.0)
        })
        .unwrap();
        let rel = (&est.matrix - &exact).amax() / exact.amax();
        assert!(rel < 0.03, "relative error {rel}");
    }

    #[test]
    fn failures_are_counted_and_bounded() {
        let est = bootstrap_covariance_with(5, 100, Seed::new(3), |idx| {
            if idx[0] == 0 && idx[1] == 0 {
                Err(Error::DegenerateData { level: 0 })
            } else {
                Ok(DVector::from_element(1, idx[2] as f64))
            }
        })
        .unwrap();
        assert!(est.skipped > 0 && est.skipped + est.replicates == 100);
        let err = bootstrap_covariance_with(5, 100, Seed::new(3), |idx| {
            if idx[0] < 2 {
                Err(Error::DegenerateData { level: 0 })
            } else {
                Ok(DVector::from_element(1, 0.0))
            }
        });
        assert!(matches!(err, Err(Error::TooManyDegenerate { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn covariance_is_symmetric_psd(seed in any::<u64>(), n in 3usize..20, d in 1usize..5) {
            let mut rng = Seed::new(seed).rng();
            let data: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(d, |_, _| rand::Rng::random::<f64>(&mut rng) - 0.5))
                .collect();
            let est = bootstrap_covariance_with(n, 64, Seed::new(seed ^ 1), |idx| {
                Ok(idx.iter().map(|&i| data[i].clone()).sum::<DVector<f64>>() / n as f64)
            })
            .unwrap();
            let c = &est.matrix;
            prop_assert!((c - c.transpose()).amax() < 1e-10);
            let eig = c.clone().symmetric_eigen();
            prop_assert!(eig.eigenvalues.min() > -1e-10);
        }
    }
}
