//! Backward nested families of subspheres and the closed-form maps between them.
//!
//! A `j`-dimensional subsphere of `S^m ⊂ R^{m+1}` is the intersection of the
//! sphere with the affine subspace `{x : vᵀx = α}`, where `v` holds `m − j`
//! orthonormal normals and `α` the signed offsets. The pair `z = (v; αᵀ)` is
//! one representative of the class `[z] = {zR : R ∈ O(m − j)}`; all
//! comparisons between classes go through optimal positioning.
//!
//! Points (`j = 0`) follow the convention `‖α‖ = 1`, so the subsphere
//! degenerates to the single point `vα`.

mod bnfd_chart;
mod chart;
mod descriptor_projection;
mod metric;
mod projection;

pub use bnfd_chart::{BnfdChart, ChartCoords};
pub use chart::{
    ConstraintMap, HorizontalConstraint, LocalChart, PointChart, SphereConstraint, SubsphereChart,
};
pub use descriptor_projection::project_descriptor;
pub use metric::{optimal_position, ziezold_distance, ALIGNMENT_TOL};
pub use projection::{blow_down_inverse, blow_up, nested_project, project_to_subsphere, residual_distance};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{complement_unchecked, orthonormality_defect, UnitVector};

/// Tolerance on orthonormality and nesting of stored representatives.
pub const REPRESENTATIVE_TOL: f64 = 1e-10;
/// Tolerance used when re-expressing externally supplied classes.
pub const NESTING_TOL: f64 = 1e-8;

/// Principal nested spheres (small subspheres allowed) or principal nested
/// great spheres.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pns,
    Pngs,
}

impl Mode {
    pub fn is_great(self) -> bool {
        matches!(self, Mode::Pngs)
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Pns => "pns",
            Mode::Pngs => "pngs",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pns" => Ok(Mode::Pns),
            "pngs" => Ok(Mode::Pngs),
            other => Err(Error::InvalidParameter(format!("unknown mode '{other}'"))),
        }
    }
}

/// Representative `(v, α)` of a class of `j`-dimensional subspheres of `S^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Subsphere {
    v: DMatrix<f64>,
    alpha: DVector<f64>,
    great: bool,
}

impl Subsphere {
    pub fn new(v: DMatrix<f64>, alpha: DVector<f64>, great: bool) -> Result<Self> {
        if v.nrows() < 2 {
            return Err(Error::InvalidParameter("ambient dimension must be at least 1".into()));
        }
        if v.ncols() >= v.nrows() {
            return Err(Error::InvalidParameter(format!(
                "{} normals in R^{} leave no subsphere",
                v.ncols(),
                v.nrows()
            )));
        }
        if alpha.len() != v.ncols() {
            return Err(Error::DimensionMismatch { expected: v.ncols(), found: alpha.len() });
        }
        let dev = orthonormality_defect(&v);
        if dev > REPRESENTATIVE_TOL {
            return Err(Error::NotOrthonormal { deviation: dev });
        }
        let j = v.nrows() - 1 - v.ncols();
        let mut alpha = alpha;
        let norm = alpha.norm();
        if j == 0 {
            if (norm - 1.0).abs() > NESTING_TOL {
                return Err(Error::InvalidParameter(format!(
                    "a point descriptor needs ‖α‖ = 1, got {norm}"
                )));
            }
            alpha /= norm;
            return Ok(Subsphere { v, alpha, great: false });
        }
        if great {
            if norm != 0.0 {
                return Err(Error::InvalidParameter("great subspheres need α = 0".into()));
            }
        } else if norm >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "offsets with ‖α‖ = {norm} do not cut the sphere"
            )));
        }
        Ok(Subsphere { v, alpha, great })
    }

    /// Great subsphere with the given normals.
    pub fn great(v: DMatrix<f64>) -> Result<Self> {
        let k = v.ncols();
        Self::new(v, DVector::zeros(k), true)
    }

    /// Codimension-one subsphere `{x : ⟨x, normal⟩ = offset}`.
    pub fn codim_one(normal: &UnitVector, offset: f64) -> Result<Self> {
        let v = DMatrix::from_column_slice(normal.ambient_dim(), 1, normal.as_slice());
        Self::new(v, DVector::from_element(1, offset), offset == 0.0 && normal.sphere_dim() > 1)
    }

    /// The whole sphere `S^m`, a subsphere with no normals.
    pub fn whole(m: usize) -> Self {
        Subsphere { v: DMatrix::zeros(m + 1, 0), alpha: DVector::zeros(0), great: true }
    }

    /// Builds a representative from the stacked matrix `z = (v; αᵀ)`.
    pub fn from_z(z: &DMatrix<f64>, great: bool) -> Result<Self> {
        let rows = z.nrows() - 1;
        let v = z.rows(0, rows).into_owned();
        let alpha = if great && rows - z.ncols() > 1 {
            DVector::zeros(z.ncols())
        } else {
            z.row(rows).transpose()
        };
        Self::new(v, alpha, great)
    }

    /// Dimension `m` of the ambient sphere.
    pub fn ambient_dim(&self) -> usize {
        self.v.nrows() - 1
    }

    /// Dimension `j` of the subsphere.
    pub fn dim(&self) -> usize {
        self.v.nrows() - 1 - self.v.ncols()
    }

    pub fn codim(&self) -> usize {
        self.v.ncols()
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn is_great(&self) -> bool {
        self.great
    }

    pub fn is_point(&self) -> bool {
        self.dim() == 0
    }

    /// Radius scale `√(1 − ‖α‖²)` of the subsphere.
    pub fn scale(&self) -> f64 {
        (1.0 - self.alpha.norm_squared()).max(0.0).sqrt()
    }

    /// Stacked representative `z = (v; αᵀ)` of size `(m + 2) × (m − j)`.
    pub fn z(&self) -> DMatrix<f64> {
        let (r, k) = self.v.shape();
        DMatrix::from_fn(r + 1, k, |i, c| if i < r { self.v[(i, c)] } else { self.alpha[c] })
    }

    /// Center `vα` of the subsphere; for a point descriptor this is the point.
    pub fn center(&self) -> DVector<f64> {
        &self.v * &self.alpha
    }

    /// The point represented by a zero-dimensional descriptor.
    pub fn point(&self) -> Option<UnitVector> {
        self.is_point().then(|| UnitVector::new_unchecked(self.center().normalize()))
    }

    /// Representative `(vR, Rᵀα)` of the same class.
    pub fn right_act(&self, r: &DMatrix<f64>) -> Subsphere {
        Subsphere {
            v: &self.v * r,
            alpha: r.transpose() * &self.alpha,
            great: self.great,
        }
    }

    /// Largest deviation of `q` from the defining equations `vᵀq = α`, `‖q‖ = 1`.
    pub fn deviation(&self, q: &DVector<f64>) -> f64 {
        let lin = (self.v.transpose() * q - &self.alpha).amax();
        lin.max((q.norm() - 1.0).abs())
    }

    pub fn contains(&self, q: &DVector<f64>, tol: f64) -> bool {
        self.deviation(q) <= tol
    }

    /// Flips a codimension-one representative so that the first non-zero
    /// entry of its normal is positive. Classes are unaffected.
    pub fn canonicalize_sign(&mut self) {
        if self.codim() != 1 {
            return;
        }
        let first = self.v.column(0).iter().copied().find(|x| x.abs() > 1e-14);
        if matches!(first, Some(x) if x < 0.0) {
            self.v.neg_mut();
            self.alpha.neg_mut();
        }
    }
}

/// Backward nested family `{p^{m−1}, …, p^{j}}` of subspheres of `S^m`.
///
/// Level `i` holds the accumulated representative of `p^{m−1−i}`: its first
/// `i` columns (and offsets) coincide with those of level `i − 1`. Each level
/// also caches an orthonormal complement `ṽ` of its normals, chained as
/// `ṽ' = ṽ w̃`, which fixes the blow-up embedding into `S^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedFamily {
    mode: Mode,
    levels: Vec<Subsphere>,
    frames: Vec<DMatrix<f64>>,
}

/// One backward step expressed in the blown-up coordinates of its parent:
/// the codimension-one subsphere `{z ∈ S^j : ⟨z, w⟩ = β}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeStep {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl NestedFamily {
    /// Builds a family from relative steps, starting at `S^m`.
    pub fn from_steps(m: usize, mode: Mode, steps: &[RelativeStep]) -> Result<Self> {
        if steps.is_empty() || steps.len() > m {
            return Err(Error::InvalidParameter(format!(
                "a family on S^{m} needs between 1 and {m} levels, got {}",
                steps.len()
            )));
        }
        let mut v = DMatrix::<f64>::zeros(m + 1, 0);
        let mut alpha: Vec<f64> = Vec::new();
        let mut frame = DMatrix::<f64>::identity(m + 1, m + 1);
        let mut levels = Vec::with_capacity(steps.len());
        let mut frames = Vec::with_capacity(steps.len());
        for (i, step) in steps.iter().enumerate() {
            let j = m - i;
            if step.normal.len() != j + 1 {
                return Err(Error::DimensionMismatch { expected: j + 1, found: step.normal.len() });
            }
            if mode.is_great() && j > 1 && step.offset != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "great sphere steps need zero offset, got {} at level {i}",
                    step.offset
                )));
            }
            let w = step.normal.normalize();
            let scale = (1.0 - alpha.iter().map(|a| a * a).sum::<f64>()).max(0.0).sqrt();
            let x = &frame * &w;
            v = v.insert_column(i, 0.0);
            v.set_column(i, &x);
            alpha.push(step.offset * scale);
            let wmat = DMatrix::from_column_slice(j + 1, 1, w.as_slice());
            frame = &frame * complement_unchecked(&wmat);
            let great = mode.is_great() && j > 1;
            let a = if great { DVector::zeros(i + 1) } else { DVector::from_vec(alpha.clone()) };
            levels.push(Subsphere::new(v.clone(), a, great)?);
            frames.push(frame.clone());
        }
        Self::from_accumulated(mode, levels, frames)
    }

    /// Builds a family from arbitrary representatives of nested classes,
    /// re-expressing them in accumulated form.
    pub fn from_levels(mode: Mode, levels: &[Subsphere]) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty family".into()))?;
        let m = first.ambient_dim();
        let mut acc_v = DMatrix::<f64>::zeros(m + 1, 0);
        let mut acc_a = DVector::<f64>::zeros(0);
        let mut steps = Vec::with_capacity(levels.len());
        let mut frame = DMatrix::<f64>::identity(m + 1, m + 1);
        for (i, level) in levels.iter().enumerate() {
            if level.ambient_dim() != m {
                return Err(Error::DimensionMismatch { expected: m, found: level.ambient_dim() });
            }
            if level.codim() != i + 1 {
                return Err(Error::InvalidParameter(format!(
                    "level {i} should have codimension {}, got {}",
                    i + 1,
                    level.codim()
                )));
            }
            let c = level.v().transpose() * &acc_v;
            let dev_v = (level.v() * &c - &acc_v).amax();
            let dev_a = if i > 0 { (c.transpose() * level.alpha() - &acc_a).amax() } else { 0.0 };
            let dev = dev_v.max(dev_a);
            if dev > NESTING_TOL {
                return Err(Error::NotNested { level: i, deviation: dev });
            }
            let c_perp = complement_unchecked(&c);
            let c_perp = c_perp.column(c_perp.ncols() - 1).into_owned();
            let mut x = level.v() * &c_perp;
            let proj = acc_v.transpose() * &x;
            x -= &acc_v * proj;
            let norm = x.norm();
            x /= norm;
            let mut y = level.alpha().dot(&c_perp);
            let j = m - 1 - i;
            if mode.is_great() && j > 0 {
                if y.abs() > NESTING_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "level {i} is not a great subsphere (offset {y:e})"
                    )));
                }
                y = 0.0;
            }
            if y < 0.0 {
                x.neg_mut();
                y = -y;
            }
            let scale = (1.0 - acc_a.norm_squared()).max(0.0).sqrt();
            let w = frame.transpose() * &x;
            let offset = if j == 0 {
                1.0
            } else if scale > 0.0 {
                y / scale
            } else {
                0.0
            };
            steps.push(RelativeStep { normal: w.normalize(), offset });
            let wmat = DMatrix::from_column_slice(w.len(), 1, w.normalize().as_slice());
            frame = &frame * complement_unchecked(&wmat);
            acc_v = acc_v.insert_column(i, 0.0);
            acc_v.set_column(i, &x);
            acc_a = acc_a.insert_row(i, y);
        }
        Self::from_steps(m, mode, &steps)
    }

    fn from_accumulated(mode: Mode, levels: Vec<Subsphere>, frames: Vec<DMatrix<f64>>) -> Result<Self> {
        let family = NestedFamily { mode, levels, frames };
        family.validate()?;
        Ok(family)
    }

    /// Checks prefix containment, orthonormality of `(v, ṽ)` and the mode.
    pub fn validate(&self) -> Result<()> {
        let m = self.ambient_dim();
        for (i, (level, frame)) in self.levels.iter().zip(&self.frames).enumerate() {
            if level.codim() != i + 1 || level.ambient_dim() != m {
                return Err(Error::NotNested { level: i, deviation: f64::INFINITY });
            }
            let full = DMatrix::from_fn(m + 1, m + 1, |r, c| {
                if c <= i {
                    level.v()[(r, c)]
                } else {
                    frame[(r, c - i - 1)]
                }
            });
            let dev = orthonormality_defect(&full);
            if dev > REPRESENTATIVE_TOL {
                return Err(Error::NotNested { level: i, deviation: dev });
            }
            if i > 0 {
                let prev = &self.levels[i - 1];
                let dv = (level.v().columns(0, i) - prev.v()).amax();
                let da = (level.alpha().rows(0, i) - prev.alpha()).amax();
                if dv.max(da) > REPRESENTATIVE_TOL {
                    return Err(Error::NotNested { level: i, deviation: dv.max(da) });
                }
            }
            if self.mode.is_great() && level.dim() > 0 && level.alpha().amax() != 0.0 {
                return Err(Error::InvalidParameter(format!("level {i} is not great")));
            }
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Dimension `m` of the data sphere.
    pub fn ambient_dim(&self) -> usize {
        self.levels[0].ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Subsphere] {
        &self.levels
    }

    /// Level `i` (the subsphere of dimension `m − 1 − i`).
    pub fn level(&self, i: usize) -> &Subsphere {
        &self.levels[i]
    }

    /// The level of the given subsphere dimension, if present.
    pub fn level_of_dim(&self, j: usize) -> Option<&Subsphere> {
        let m = self.ambient_dim();
        if j >= m {
            return None;
        }
        self.levels.get(m - 1 - j)
    }

    pub fn terminal(&self) -> &Subsphere {
        self.levels.last().expect("families are non-empty")
    }

    /// The nested mean when the family reaches a point.
    pub fn nested_mean(&self) -> Option<UnitVector> {
        self.terminal().point()
    }

    /// Cached complement `ṽ` of level `i`.
    pub fn frame(&self, i: usize) -> &DMatrix<f64> {
        &self.frames[i]
    }

    /// Relative step `(w, β)` of level `i` in the blown-up coordinates of its parent.
    pub fn step(&self, i: usize) -> RelativeStep {
        let level = &self.levels[i];
        let x = level.v().column(i);
        let (w, parent_scale) = if i == 0 {
            (x.into_owned(), 1.0)
        } else {
            let parent = &self.levels[i - 1];
            (self.frames[i - 1].transpose() * x, parent.scale())
        };
        let a = level.alpha()[i];
        let offset = if level.is_point() {
            a.signum()
        } else if parent_scale > 0.0 {
            a / parent_scale
        } else {
            0.0
        };
        RelativeStep { normal: w, offset }
    }

    /// The family truncated after `len` levels.
    pub fn truncated(&self, len: usize) -> NestedFamily {
        NestedFamily {
            mode: self.mode,
            levels: self.levels[..len].to_vec(),
            frames: self.frames[..len].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{random_orthogonal, uniform_direction, Seed};
    use proptest::prelude::*;

    pub(crate) fn random_family(m: usize, mode: Mode, seed: u64) -> NestedFamily {
        let mut rng = Seed::new(seed).rng();
        let mut steps = Vec::new();
        for i in 0..m {
            let j = m - i;
            let w = uniform_direction(j + 1, &mut rng);
            let offset = if j == 1 {
                1.0
            } else if mode.is_great() {
                0.0
            } else {
                rand::Rng::random_range(&mut rng, -0.7..0.7)
            };
            steps.push(RelativeStep { normal: w, offset });
        }
        NestedFamily::from_steps(m, mode, &steps).unwrap()
    }

    #[test]
    fn subsphere_invariants() {
        let e3 = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert!(Subsphere::new(e3.clone(), DVector::from_element(1, 1.2), false).is_err());
        assert!(Subsphere::new(e3.clone(), DVector::from_element(1, 0.2), true).is_err());
        let p = Subsphere::new(e3.clone(), DVector::from_element(1, 0.5), false).unwrap();
        assert_eq!(p.dim(), 1);
        assert!((p.scale() - 0.75f64.sqrt()).abs() < 1e-15);
        let skew = DMatrix::from_column_slice(3, 1, &[0.0, 0.1, 1.0]);
        assert!(matches!(
            Subsphere::great(skew),
            Err(Error::NotOrthonormal { .. })
        ));
        let pt = Subsphere::new(
            DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.6, 0.8]),
            false,
        )
        .unwrap();
        assert_eq!(pt.point().unwrap().as_slice(), &[0.6, 0.8, 0.0]);
    }

    #[test]
    fn sign_canonicalization() {
        let mut p = Subsphere::new(
            DMatrix::from_column_slice(3, 1, &[-0.6, 0.8, 0.0]),
            DVector::from_element(1, -0.3),
            false,
        )
        .unwrap();
        p.canonicalize_sign();
        assert_eq!(p.v()[(0, 0)], 0.6);
        assert_eq!(p.alpha()[0], 0.3);
    }

    #[test]
    fn from_levels_reproduces_family() {
        for mode in [Mode::Pns, Mode::Pngs] {
            let f = random_family(4, mode, 11);
            let mut rng = Seed::new(5).rng();
            let scrambled: Vec<Subsphere> = f
                .levels()
                .iter()
                .map(|l| l.right_act(&random_orthogonal(l.codim(), &mut rng)))
                .collect();
            let g = NestedFamily::from_levels(mode, &scrambled).unwrap();
            for (a, b) in f.levels().iter().zip(g.levels()) {
                assert!(ziezold_distance(a, b).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn from_levels_rejects_non_nested() {
        let f = random_family(3, Mode::Pns, 2);
        let g = random_family(3, Mode::Pns, 3);
        let levels = vec![f.level(0).clone(), g.level(1).clone()];
        assert!(matches!(
            NestedFamily::from_levels(Mode::Pns, &levels),
            Err(Error::NotNested { .. })
        ));
    }

    proptest! {
        #[test]
        fn accumulation_identity(seed in any::<u64>(), m in 2usize..6, pns in any::<bool>()) {
            // v' = (v, ṽw), α' = (α, β √(1 − ‖α‖²)), ṽ' = ṽ w̃
            let mode = if pns { Mode::Pns } else { Mode::Pngs };
            let f = random_family(m, mode, seed);
            for i in 1..f.len() {
                let parent = f.level(i - 1);
                let step = f.step(i);
                let col = f.frame(i - 1) * &step.normal;
                let child = f.level(i);
                prop_assert!((child.v().column(i) - &col).amax() < 1e-10);
                prop_assert!((child.alpha()[i] - step.offset * parent.scale()).abs() < 1e-10);
            }
            let steps: Vec<RelativeStep> = (0..f.len()).map(|i| f.step(i)).collect();
            let g = NestedFamily::from_steps(m, mode, &steps).unwrap();
            for (a, b) in f.levels().iter().zip(g.levels()) {
                prop_assert!((a.z() - b.z()).amax() < 1e-10);
            }
        }
    }
}
