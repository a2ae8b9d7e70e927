//! Elementary spherical geometry: unit vectors, geodesic distance,
//! von Mises–Fisher sampling and orthonormal complements.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs whose norm deviates from one by less than this are renormalized.
pub const UNIT_REPAIR_TOL: f64 = 1e-6;

const COMPLEMENT_SKIP_TOL: f64 = 1e-8;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// A point on the unit sphere `S^m` embedded in `R^{m+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitVector(DVector<f64>);

impl UnitVector {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "unit vectors need at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        let norm = coords.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_REPAIR_TOL {
            return Err(Error::NotUnitVector { norm });
        }
        Ok(UnitVector(coords / norm))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalize(coords: DVector<f64>) -> Result<Self> {
        let norm = coords.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotUnitVector { norm });
        }
        Self::new(coords / norm)
    }

    /// Wraps a vector that is already known to be of unit norm.
    pub(crate) fn new_unchecked(coords: DVector<f64>) -> Self {
        debug_assert!((coords.norm() - 1.0).abs() < 1e-8);
        UnitVector(coords)
    }

    /// Dimension `m` of the sphere `S^m`.
    pub fn sphere_dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0.dot(&other.0)
    }
}

impl AsRef<DVector<f64>> for UnitVector {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Reproducible random seed. Identical `(value, stream_id)` pairs yield
/// identical draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub value: u64,
    pub stream_id: u64,
}

impl Seed {
    pub const fn new(value: u64) -> Self {
        Seed { value, stream_id: 0 }
    }

    pub const fn with_stream(value: u64, stream_id: u64) -> Self {
        Seed { value, stream_id }
    }

    pub fn rng(&self) -> ChaCha12Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha12Rng::seed_from_u64(self.value);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derives an independent seed for a sub-task identified by `tag`.
    pub fn child(&self, tag: u64) -> Seed {
        let mixed = splitmix64(
            self.value
                ^ splitmix64(self.stream_id.wrapping_add(0x9E37_79B9_7F4A_7C15))
                ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03),
        );
        Seed { value: mixed, stream_id: tag }
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `arccos` with its argument clamped to `[-1, 1]`.
#[inline]
pub fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Great-circle distance on `S^m`, in `[0, π]`.
pub fn geodesic_dist(u: &UnitVector, w: &UnitVector) -> Result<f64> {
    if u.ambient_dim() != w.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: u.ambient_dim(),
            found: w.ambient_dim(),
        });
    }
    Ok(clamped_acos(u.dot(w)))
}

/// Uniformly distributed direction in `R^dim`.
pub fn uniform_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Haar-distributed orthogonal matrix of size `n`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Draws `n` independent von Mises–Fisher variates with mean direction `mu`
/// and concentration `kappa`, using Wood's rejection sampler for the cosine
/// component and a uniform tangential direction.
pub fn sample_vmf(mu: &UnitVector, kappa: f64, n: usize, seed: Seed) -> Result<Vec<UnitVector>> {
    let mut rng = seed.rng();
    sample_vmf_with(mu, kappa, n, &mut rng)
}

pub(crate) fn sample_vmf_with<R: Rng + ?Sized>(
    mu: &UnitVector,
    kappa: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<UnitVector>> {
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "vMF concentration must be finite and non-negative, got {kappa}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let p = mu.ambient_dim();
    let tangent = orthonormal_complement(&DMatrix::from_column_slice(p, 1, mu.as_slice()))?;
    let dm1 = (p - 1) as f64;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0)
        .map_err(|e| Error::InvalidParameter(format!("beta distribution: {e}")))?;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w = loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random::<f64>();
            if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        let dir = uniform_direction(p - 1, rng);
        let x = mu.coords() * w + &tangent * dir * (1.0 - w * w).max(0.0).sqrt();
        out.push(UnitVector::new_unchecked(x.normalize()));
    }
    Ok(out)
}

/// Deviation `‖vᵀv − I‖_max` of a frame from orthonormality.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let mut dev: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).abs());
        }
    }
    dev
}

/// Completes the orthonormal columns of `v` (size `n × k`) to a basis of
/// `R^n` by Gram–Schmidt on the canonical basis `e_1, …, e_n`, taken in order.
/// Candidates whose residual falls below `1e-8` are skipped.
pub fn orthonormal_complement(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dev = orthonormality_defect(v);
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal { deviation: dev });
    }
    Ok(complement_unchecked(v))
}

pub(crate) fn complement_unchecked(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let k = v.ncols();
    let need = n - k;
    let mut basis: Vec<DVector<f64>> = v.column_iter().map(|c| c.into_owned()).collect();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(need);
    for i in 0..n {
        if out.len() == need {
            break;
        }
        let mut cand = DVector::zeros(n);
        cand[i] = 1.0;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&cand);
                cand.axpy(-d, b, 1.0);
            }
        }
        let norm = cand.norm();
        if norm < COMPLEMENT_SKIP_TOL {
            continue;
        }
        cand /= norm;
        basis.push(cand.clone());
        out.push(cand);
    }
    debug_assert_eq!(out.len(), need);
    if need == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn uv(c: &[f64]) -> UnitVector {
        UnitVector::from_slice(c).unwrap()
    }

    #[test]
    fn geodesic_distance_examples() {
        let e1 = uv(&[1.0, 0.0, 0.0]);
        assert_eq!(geodesic_dist(&e1, &e1).unwrap(), 0.0);
        assert!((geodesic_dist(&e1, &uv(&[0.0, 1.0, 0.0])).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((geodesic_dist(&e1, &uv(&[-1.0, 0.0, 0.0])).unwrap() - PI).abs() < 1e-15);
        assert!(matches!(
            geodesic_dist(&e1, &uv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unit_vector_repair_and_reject() {
        let v = UnitVector::from_slice(&[1.0 + 5e-7, 0.0]).unwrap();
        assert!((v.coords().norm() - 1.0).abs() < 1e-15);
        assert!(matches!(
            UnitVector::from_slice(&[1.1, 0.0]),
            Err(Error::NotUnitVector { .. })
        ));
        assert!(UnitVector::from_slice(&[1.0]).is_err());
    }

    #[test]
    fn vmf_empty_and_deterministic() {
        let mu = uv(&[0.0, 0.0, 1.0]);
        assert!(sample_vmf(&mu, 5.0, 0, Seed::new(1)).unwrap().is_empty());
        let a = sample_vmf(&mu, 5.0, 50, Seed::with_stream(3, 4)).unwrap();
        let b = sample_vmf(&mu, 5.0, 50, Seed::with_stream(3, 4)).unwrap();
        assert_eq!(a, b);
        let c = sample_vmf(&mu, 5.0, 50, Seed::with_stream(3, 5)).unwrap();
        assert_ne!(a, c);
        assert!(sample_vmf(&mu, f64::INFINITY, 3, Seed::new(1)).is_err());
        assert!(sample_vmf(&mu, -1.0, 3, Seed::new(1)).is_err());
    }

    #[test]
    fn vmf_uniform_limit_has_small_resultant() {
        // kappa = 0 is the uniform distribution, whose mean resultant length
        // has standard deviation ~ 1/sqrt(3n) per coordinate.
        let mu = uv(&[0.0, 0.0, 1.0]);
        let xs = sample_vmf(&mu, 0.0, 10_000, Seed::new(17)).unwrap();
        let mut sum = DVector::zeros(3);
        for x in &xs {
            sum += x.coords();
        }
        assert!((sum / 10_000.0).norm() < 0.05);
    }

    #[test]
    fn vmf_concentrated_draws_stay_close() {
        let mu = uv(&[0.6, 0.0, 0.8]);
        let xs = sample_vmf(&mu, 1000.0, 1000, Seed::new(5)).unwrap();
        for x in &xs {
            assert!(geodesic_dist(x, &mu).unwrap() < 0.15);
        }
    }

    #[test]
    fn vmf_mean_cosine_matches_bessel_ratio_on_s2() {
        // On S², E[<x, mu>] = coth(kappa) - 1/kappa.
        let mu = uv(&[0.0, 1.0, 0.0]);
        let kappa: f64 = 4.0;
        let xs = sample_vmf(&mu, kappa, 40_000, Seed::new(9)).unwrap();
        let mean: f64 = xs.iter().map(|x| x.dot(&mu)).sum::<f64>() / xs.len() as f64;
        let expected = 1.0 / kappa.tanh() - 1.0 / kappa;
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
    }

    #[test]
    fn complement_examples() {
        let e4 = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        let c = orthonormal_complement(&e4).unwrap();
        assert_eq!(c.ncols(), 3);
        assert!(orthonormality_defect(&c) < 1e-15);
        assert!((e4.transpose() * &c).norm() < 1e-15);
        for i in 0..3 {
            assert!((c[(i, i)] - 1.0).abs() < 1e-15);
        }

        let e12 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let c = orthonormal_complement(&e12).unwrap();
        assert_eq!(c.ncols(), 1);
        assert!((c[(2, 0)].abs() - 1.0).abs() < 1e-15);

        let bad = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        assert!(matches!(orthonormal_complement(&bad), Err(Error::NotOrthonormal { .. })));
    }

    proptest! {
        #[test]
        fn complement_completes_random_frames(seed in any::<u64>(), n in 2usize..7, k in 0usize..6) {
            let k = k.min(n - 1);
            let q = random_orthogonal(n, &mut Seed::new(seed).rng());
            let v = q.columns(0, k).into_owned();
            let c = orthonormal_complement(&v).unwrap();
            let full = DMatrix::from_fn(n, n, |i, j| if j < k { v[(i, j)] } else { c[(i, j - k)] });
            prop_assert!(orthonormality_defect(&full) < 1e-10);
        }

        #[test]
        fn geodesic_triangle_inequality(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = Seed::new(seed).rng();
            let a = UnitVector::new_unchecked(uniform_direction(n, &mut rng));
            let b = UnitVector::new_unchecked(uniform_direction(n, &mut rng));
            let c = UnitVector::new_unchecked(uniform_direction(n, &mut rng));
            let ab = geodesic_dist(&a, &b).unwrap();
            let bc = geodesic_dist(&b, &c).unwrap();
            let ac = geodesic_dist(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab, geodesic_dist(&b, &a).unwrap());
        }
    }
}
