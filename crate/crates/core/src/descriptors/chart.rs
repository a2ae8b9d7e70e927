//! Local coordinates on manifolds cut out by smooth constraints, and the
//! concrete charts used for subsphere classes and points.

use nalgebra::{DMatrix, DVector};

use super::{optimal_position, Subsphere};
use crate::error::{Error, Result};
use crate::sphere::{clamped_acos, complement_unchecked, UnitVector};

const RANK_TOL: f64 = 1e-8;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;
const BASE_TOL: f64 = 1e-8;

/// Smooth map `Φ : R^r → R^s` whose zero set is the manifold of interest.
pub trait ConstraintMap {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Derivative `dΦ(x)` as an `s × r` matrix.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// Chart of `{Φ = 0}` near a base point `x′`: coordinates are the components
/// of `x − x′` along an orthonormal basis of `ker dΦ(x′)`.
#[derive(Clone, Debug)]
pub struct LocalChart {
    base: DVector<f64>,
    kernel: DMatrix<f64>,
    normal: DMatrix<f64>,
}

impl LocalChart {
    pub fn new<C: ConstraintMap + ?Sized>(phi: &C, base: DVector<f64>) -> Result<Self> {
        if base.len() != phi.input_dim() {
            return Err(Error::DimensionMismatch { expected: phi.input_dim(), found: base.len() });
        }
        let residual = phi.eval(&base).amax();
        if residual > BASE_TOL {
            return Err(Error::InvalidParameter(format!(
                "chart base violates the constraints by {residual:e}"
            )));
        }
        let jac = phi.jacobian(&base);
        let expected = phi.output_dim();
        let svd = jac.transpose().svd(true, false);
        let u = svd.u.expect("requested U");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > RANK_TOL)
            .collect();
        if keep.len() < expected {
            return Err(Error::RankDeficientConstraint { rank: keep.len(), expected });
        }
        let normal = if keep.is_empty() {
            DMatrix::zeros(base.len(), 0)
        } else {
            DMatrix::from_columns(&keep.iter().map(|&i| u.column(i)).collect::<Vec<_>>())
        };
        let kernel = complement_unchecked(&normal);
        Ok(LocalChart { base, kernel, normal })
    }

    /// Dimension of the manifold.
    pub fn dim(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn coords(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut d = x - &self.base;
        if self.normal.ncols() > 0 {
            let c = self.normal.transpose() * &d;
            d -= &self.normal * c;
        }
        self.kernel.transpose() * d
    }

    /// Point of the manifold with the given coordinates, found by Newton's
    /// method along the normal directions.
    pub fn inverse<C: ConstraintMap + ?Sized>(&self, phi: &C, coords: &DVector<f64>) -> Result<DVector<f64>> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: coords.len() });
        }
        let start = &self.base + &self.kernel * coords;
        let s = self.normal.ncols();
        if s == 0 {
            return Ok(start);
        }
        let mut lambda = DVector::zeros(s);
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let x = &start + &self.normal * &lambda;
            let f = phi.eval(&x);
            residual = f.amax();
            if residual < NEWTON_TOL {
                return Ok(x);
            }
            if !residual.is_finite() {
                break;
            }
            let j = phi.jacobian(&x) * &self.normal;
            match j.lu().solve(&(-f)) {
                Some(delta) => lambda += delta,
                None => break,
            }
        }
        Err(Error::RetractionDiverged { iterations: NEWTON_MAX_ITER, residual })
    }
}

/// The unit sphere `‖x‖² = 1`.
#[derive(Clone, Copy, Debug)]
pub struct SphereConstraint {
    pub ambient: usize,
}

impl ConstraintMap for SphereConstraint {
    fn input_dim(&self) -> usize {
        self.ambient
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x.norm_squared() - 1.0)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, x.len(), (x * 2.0).as_slice())
    }
}

/// Representatives `x = vec(z)` (column-major) with orthonormal normals,
/// optimally positioned with respect to a base `z′`:
/// `vᵀv = I` and `zᵀz′` symmetric. Optionally `‖α‖ = 1` for point classes.
///
/// When `rows = m + 1` only the normals are stored (great subspheres).
#[derive(Clone, Debug)]
pub struct HorizontalConstraint {
    rows: usize,
    normal_rows: usize,
    base: DMatrix<f64>,
    unit_alpha: bool,
}

impl HorizontalConstraint {
    pub fn new(base: DMatrix<f64>, normal_rows: usize, unit_alpha: bool) -> Self {
        HorizontalConstraint { rows: base.nrows(), normal_rows, base, unit_alpha }
    }

    fn k(&self) -> usize {
        self.base.ncols()
    }

    fn reshape(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.rows, self.k(), x.as_slice())
    }
}

impl ConstraintMap for HorizontalConstraint {
    fn input_dim(&self) -> usize {
        self.rows * self.k()
    }

    fn output_dim(&self) -> usize {
        let k = self.k();
        k * k + usize::from(self.unit_alpha)
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let z = self.reshape(x);
        let v = z.rows(0, self.normal_rows);
        let g = v.transpose() * v;
        let s = z.transpose() * &self.base;
        let mut out = Vec::with_capacity(self.output_dim());
        for a in 0..k {
            for b in a..k {
                out.push(g[(a, b)] - if a == b { 1.0 } else { 0.0 });
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                out.push(s[(a, b)] - s[(b, a)]);
            }
        }
        if self.unit_alpha {
            let alpha = z.row(self.rows - 1);
            out.push(alpha.norm_squared() - 1.0);
        }
        DVector::from_vec(out)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let rows = self.rows;
        let z = self.reshape(x);
        let idx = |i: usize, c: usize| c * rows + i;
        let mut jac = DMatrix::zeros(self.output_dim(), self.input_dim());
        let mut row = 0;
        for a in 0..k {
            for b in a..k {
                for i in 0..self.normal_rows {
                    jac[(row, idx(i, a))] += z[(i, b)];
                    jac[(row, idx(i, b))] += z[(i, a)];
                }
                row += 1;
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                for i in 0..rows {
                    jac[(row, idx(i, a))] += self.base[(i, b)];
                    jac[(row, idx(i, b))] -= self.base[(i, a)];
                }
                row += 1;
            }
        }
        if self.unit_alpha {
            for c in 0..k {
                jac[(row, idx(rows - 1, c))] = 2.0 * z[(rows - 1, c)];
            }
        }
        jac
    }
}

/// Chart of classes of `j`-subspheres near a base class `[z′]`.
///
/// Small subspheres use `vec(z)`, great subspheres `vec(v)`; point classes
/// use `vec(z)` with the constraint `‖α‖ = 1`. The dimensions are
/// `(j + 2)(m − j)`, `(j + 1)(m − j)` and `2m − 1` respectively.
#[derive(Clone, Debug)]
pub struct SubsphereChart {
    base: Subsphere,
    base_z: DMatrix<f64>,
    constraint: HorizontalConstraint,
    chart: LocalChart,
}

impl SubsphereChart {
    pub fn new(base: &Subsphere) -> Result<Self> {
        if base.codim() == 0 {
            return Err(Error::InvalidParameter("the whole sphere has no chart".into()));
        }
        let base_z = base.z();
        let great = base.is_great() && !base.is_point();
        let m1 = base.ambient_dim() + 1;
        let stored = if great { base.v().clone() } else { base_z.clone() };
        let constraint = HorizontalConstraint::new(stored.clone(), m1, base.is_point());
        let x = DVector::from_column_slice(stored.as_slice());
        let chart = LocalChart::new(&constraint, x)?;
        Ok(SubsphereChart { base: base.clone(), base_z, constraint, chart })
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn base(&self) -> &Subsphere {
        &self.base
    }

    fn great(&self) -> bool {
        self.constraint.rows == self.base.ambient_dim() + 1
    }

    fn check(&self, p: &Subsphere) -> Result<()> {
        if p.ambient_dim() != self.base.ambient_dim() || p.dim() != self.base.dim() {
            return Err(Error::DimensionMismatch { expected: self.base.dim(), found: p.dim() });
        }
        Ok(())
    }

    /// Representative of `[p]` optimally positioned towards the base.
    pub fn position(&self, p: &Subsphere) -> Result<DMatrix<f64>> {
        self.check(p)?;
        let z = p.z();
        let r = optimal_position(&z, &self.base_z)?;
        Ok(z * r)
    }

    pub fn coords(&self, p: &Subsphere) -> Result<DVector<f64>> {
        let z = self.position(p)?;
        let stored = if self.great() { z.rows(0, z.nrows() - 1).into_owned() } else { z };
        Ok(self.chart.coords(&DVector::from_column_slice(stored.as_slice())))
    }

    pub fn inverse(&self, coords: &DVector<f64>) -> Result<Subsphere> {
        let x = self.chart.inverse(&self.constraint, coords)?;
        let stored = DMatrix::from_column_slice(self.constraint.rows, self.constraint.k(), x.as_slice());
        if self.great() {
            Subsphere::great(stored)
        } else {
            Subsphere::from_z(&stored, false)
        }
    }

    /// Inverse returning the positioned stacked representative.
    pub(crate) fn inverse_z(&self, coords: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = self.inverse(coords)?;
        Ok(p.z())
    }
}

/// Normal coordinates `log_{q′}(q)` on the sphere around a base point.
///
/// Injective on the sphere minus the antipode of the base.
#[derive(Clone, Debug)]
pub struct PointChart {
    base: DVector<f64>,
    basis: DMatrix<f64>,
}

impl PointChart {
    const ANTIPODE_TOL: f64 = 1e-8;

    pub fn new(base: &UnitVector) -> Self {
        let b = base.coords().clone();
        let basis = complement_unchecked(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        PointChart { base: b, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn coords(&self, q: &UnitVector) -> Result<DVector<f64>> {
        if q.ambient_dim() != self.base.len() {
            return Err(Error::DimensionMismatch { expected: self.base.len(), found: q.ambient_dim() });
        }
        let c = q.coords().dot(&self.base);
        if c < -1.0 + Self::ANTIPODE_TOL {
            return Err(Error::OutOfChart { level: 0, reason: "point is antipodal to the chart base".into() });
        }
        let t = self.basis.transpose() * q.coords();
        let norm = t.norm();
        if norm < 1e-300 {
            return Ok(DVector::zeros(self.dim()));
        }
        let theta = clamped_acos(c);
        Ok(t * (theta / norm))
    }

    pub fn inverse(&self, coords: &DVector<f64>) -> Result<UnitVector> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: coords.len() });
        }
        let theta = coords.norm();
        let mut out = &self.base * theta.cos();
        if theta > 0.0 {
            out += &self.basis * coords * (theta.sin() / theta);
        }
        Ok(UnitVector::new_unchecked(out.normalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{ziezold_distance, Mode};
    use crate::sphere::{random_orthogonal, uniform_direction, Seed};
    use proptest::prelude::*;

    fn perturbed(base: &Subsphere, eps: f64, seed: u64) -> Subsphere {
        let mut rng = Seed::new(seed).rng();
        let m1 = base.ambient_dim() + 1;
        let small = DMatrix::from_fn(m1, m1, |_, _| eps * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng));
        let skew = &small - small.transpose();
        let rot = skew.exp();
        let v = &rot * base.v();
        let alpha = if base.is_great() && !base.is_point() {
            DVector::zeros(base.codim())
        } else if base.is_point() {
            (base.alpha() + DVector::from_fn(base.codim(), |_, _| eps * (rand::Rng::random::<f64>(&mut rng) - 0.5))).normalize()
        } else {
            base.alpha() + DVector::from_fn(base.codim(), |_, _| eps * (rand::Rng::random::<f64>(&mut rng) - 0.5))
        };
        let p = Subsphere::new(v, alpha, base.is_great()).unwrap();
        p.right_act(&random_orthogonal(base.codim(), &mut rng))
    }

    fn base_subsphere(m: usize, j: usize, mode: Mode, seed: u64) -> Subsphere {
        let f = crate::descriptors::tests::random_family(m, mode, seed);
        f.level_of_dim(j).unwrap().clone()
    }

    #[test]
    fn chart_dimensions() {
        for (m, j, mode, dim) in [
            (2, 1, Mode::Pns, 3),
            (2, 1, Mode::Pngs, 2),
            (2, 0, Mode::Pns, 3),
            (2, 0, Mode::Pngs, 3),
            (3, 1, Mode::Pns, 6),
            (3, 2, Mode::Pngs, 3),
            (4, 0, Mode::Pns, 7),
        ] {
            let chart = SubsphereChart::new(&base_subsphere(m, j, mode, 1)).unwrap();
            assert_eq!(chart.dim(), dim, "m={m} j={j} {mode}");
        }
    }

    #[test]
    fn sphere_chart_kernel() {
        let base = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let chart = LocalChart::new(&SphereConstraint { ambient: 3 }, base).unwrap();
        assert_eq!(chart.dim(), 2);
        let c = DVector::from_vec(vec![0.3, -0.2]);
        let x = chart.inverse(&SphereConstraint { ambient: 3 }, &c).unwrap();
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert!((chart.coords(&x) - c).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_constraint_is_reported() {
        struct Doubled;
        impl ConstraintMap for Doubled {
            fn input_dim(&self) -> usize {
                2
            }
            fn output_dim(&self) -> usize {
                2
            }
            fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
                let f = x.norm_squared() - 1.0;
                DVector::from_vec(vec![f, 2.0 * f])
            }
            fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 2.0 * x[1], 4.0 * x[0], 4.0 * x[1]])
            }
        }
        let r = LocalChart::new(&Doubled, DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(r, Err(Error::RankDeficientConstraint { rank: 1, expected: 2 })));
    }

    #[test]
    fn base_has_zero_coordinates() {
        let base = base_subsphere(3, 1, Mode::Pns, 4);
        let chart = SubsphereChart::new(&base).unwrap();
        let c = chart.coords(&base).unwrap();
        assert!(c.amax() < 1e-12);
    }

    #[test]
    fn point_chart_round_trip() {
        let base = UnitVector::from_slice(&[0.0, 0.6, 0.8]).unwrap();
        let chart = PointChart::new(&base);
        let q = UnitVector::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let c = chart.coords(&q).unwrap();
        assert!((c.norm() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((chart.inverse(&c).unwrap().coords() - q.coords()).amax() < 1e-12);
        let anti = UnitVector::from_slice(&[0.0, -0.6, -0.8]).unwrap();
        assert!(matches!(chart.coords(&anti), Err(Error::OutOfChart { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn subsphere_chart_round_trip(seed in any::<u64>(), m in 2usize..5, jj in 0usize..4, pns in any::<bool>()) {
            let j = jj % m;
            let mode = if pns { Mode::Pns } else { Mode::Pngs };
            let base = base_subsphere(m, j, mode, seed);
            let chart = SubsphereChart::new(&base).unwrap();
            let p = perturbed(&base, 0.05, seed ^ 3);
            let c = chart.coords(&p).unwrap();
            let back = chart.inverse(&c).unwrap();
            prop_assert!(ziezold_distance(&back, &p).unwrap() < 1e-10);
            let c2 = chart.coords(&back).unwrap();
            prop_assert!((c2 - &c).amax() < 1e-10);
        }

        #[test]
        fn point_chart_inverts(seed in any::<u64>(), m in 1usize..6) {
            let mut rng = Seed::new(seed).rng();
            let b = UnitVector::new(uniform_direction(m + 1, &mut rng)).unwrap();
            let q = UnitVector::new(uniform_direction(m + 1, &mut rng)).unwrap();
            let chart = PointChart::new(&b);
            let c = chart.coords(&q).unwrap();
            prop_assert!((chart.inverse(&c).unwrap().coords() - q.coords()).amax() < 1e-10);
        }
    }
}
