use nalgebra::{DMatrix, DVector};

use super::{NestedFamily, Subsphere, NESTING_TOL};
use crate::error::{Error, Result};
use crate::sphere::{clamped_acos, UnitVector};

const SINGULAR_TOL: f64 = 1e-12;

fn check_dim(q: &DVector<f64>, p: &Subsphere) -> Result<()> {
    let n = p.ambient_dim() + 1;
    if q.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: q.len() });
    }
    Ok(())
}

/// Closest point of `p` to `q`:
/// `π(q) = vα + √(1 − ‖α‖²) (I − vvᵀ)q / ‖(I − vvᵀ)q‖`.
pub fn project_to_subsphere(q: &UnitVector, p: &Subsphere) -> Result<UnitVector> {
    project_raw(q.coords(), p, None).map(UnitVector::new_unchecked)
}

pub(crate) fn project_raw(q: &DVector<f64>, p: &Subsphere, stage: Option<usize>) -> Result<DVector<f64>> {
    check_dim(q, p)?;
    if p.is_point() {
        return Ok(p.center().normalize());
    }
    let v = p.v();
    let mut r = q.clone();
    if v.ncols() > 0 {
        let c = v.transpose() * q;
        r -= v * c;
    }
    let norm = r.norm();
    if norm < SINGULAR_TOL {
        return Err(Error::SingularProjection { stage });
    }
    let mut out = p.center();
    out.axpy(p.scale() / norm, &r, 1.0);
    Ok(out)
}

/// Blow-up `g(y) = ṽᵀy / ‖ṽᵀy‖` identifying the subsphere `p` with `S^j`.
///
/// `frame` is an orthonormal complement `ṽ` of the normals of `p`.
pub fn blow_up(y: &UnitVector, p: &Subsphere, frame: &DMatrix<f64>) -> Result<UnitVector> {
    check_dim(y.coords(), p)?;
    check_frame(p, frame)?;
    let dev = p.deviation(y.coords());
    if dev > NESTING_TOL {
        return Err(Error::NotOnSubsphere { deviation: dev });
    }
    let z = frame.transpose() * y.coords();
    let norm = z.norm();
    if norm < SINGULAR_TOL {
        return Err(Error::SingularProjection { stage: None });
    }
    Ok(UnitVector::new_unchecked(z / norm))
}

/// Inverse of the blow-up: `z ↦ vα + √(1 − ‖α‖²) ṽz`.
pub fn blow_down_inverse(z: &UnitVector, p: &Subsphere, frame: &DMatrix<f64>) -> Result<UnitVector> {
    check_frame(p, frame)?;
    if z.ambient_dim() != frame.ncols() {
        return Err(Error::DimensionMismatch { expected: frame.ncols(), found: z.ambient_dim() });
    }
    let mut out = p.center();
    out.axpy(p.scale(), &(frame * z.coords()), 1.0);
    Ok(UnitVector::new_unchecked(out))
}

fn check_frame(p: &Subsphere, frame: &DMatrix<f64>) -> Result<()> {
    let (r, c) = frame.shape();
    if r != p.ambient_dim() + 1 || c != p.dim() + 1 {
        return Err(Error::DimensionMismatch { expected: p.dim() + 1, found: c });
    }
    Ok(())
}

/// Projects `q` through levels `0..=to_level` of the family, composing the
/// codimension-one projections in blown-up coordinates.
pub fn nested_project(q: &UnitVector, family: &NestedFamily, to_level: usize) -> Result<UnitVector> {
    if to_level >= family.len() {
        return Err(Error::InvalidParameter(format!(
            "level {to_level} out of range for a family with {} levels",
            family.len()
        )));
    }
    check_dim(q.coords(), family.level(0))?;
    let mut z = q.coords().clone();
    let mut ambient = z.clone();
    for i in 0..=to_level {
        let step = family.step(i);
        let w = &step.normal;
        let beta = step.offset;
        let projected = if family.level(i).is_point() {
            w * beta.signum()
        } else {
            let mut r = z.clone();
            r.axpy(-w.dot(&z), w, 1.0);
            let norm = r.norm();
            if norm < SINGULAR_TOL {
                return Err(Error::SingularProjection { stage: Some(i) });
            }
            let mut out = w * beta;
            out.axpy((1.0 - beta * beta).max(0.0).sqrt() / norm, &r, 1.0);
            out
        };
        let (center, scale, frame) = if i == 0 {
            (DVector::zeros(z.len()), 1.0, None)
        } else {
            let parent = family.level(i - 1);
            (parent.center(), parent.scale(), Some(family.frame(i - 1)))
        };
        ambient = match frame {
            Some(f) => center + f * &projected * scale,
            None => projected.clone(),
        };
        if i < to_level {
            let rel = match frame {
                Some(f) => f.transpose() * family.frame(i),
                None => family.frame(i).clone(),
            };
            let next = rel.transpose() * &projected;
            let norm = next.norm();
            if norm < SINGULAR_TOL {
                return Err(Error::SingularProjection { stage: Some(i + 1) });
            }
            z = next / norm;
        }
    }
    debug_assert!({
        let mut y = q.coords().clone();
        let mut ok = true;
        for i in 0..=to_level {
            match project_raw(&y, family.level(i), Some(i)) {
                Ok(next) => y = next,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        !ok || (y - &ambient).amax() < 1e-9
    });
    Ok(UnitVector::new_unchecked(ambient.normalize()))
}

/// Geodesic distance inside `p` from `y ∈ p` to its projection onto the
/// codimension-one subsphere `s ⊂ p`, measured with the intrinsic radius of `p`.
pub fn residual_distance(y: &UnitVector, p: &Subsphere, s: &Subsphere) -> Result<f64> {
    check_dim(y.coords(), p)?;
    check_dim(y.coords(), s)?;
    if s.dim() + 1 != p.dim() {
        return Err(Error::InvalidParameter(format!(
            "expected a subsphere of dimension {}, got {}",
            p.dim().saturating_sub(1),
            s.dim()
        )));
    }
    let dev = p.deviation(y.coords());
    if dev > NESTING_TOL {
        return Err(Error::NotOnSubsphere { deviation: dev });
    }
    let ys = project_raw(y.coords(), s, None)?;
    let nest = p.deviation(&ys);
    if nest > NESTING_TOL {
        return Err(Error::NotNested { level: 0, deviation: nest });
    }
    let tangent = |x: &DVector<f64>| -> DVector<f64> {
        let v = p.v();
        if v.ncols() == 0 {
            x.clone()
        } else {
            x - v * (v.transpose() * x)
        }
    };
    let a = tangent(y.coords());
    let b = tangent(&ys);
    let (na, nb) = (a.norm(), b.norm());
    if na < SINGULAR_TOL || nb < SINGULAR_TOL {
        return Err(Error::SingularProjection { stage: None });
    }
    Ok(p.scale() * clamped_acos(a.dot(&b) / (na * nb)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{Mode, RelativeStep};
    use crate::sphere::{uniform_direction, Seed};
    use proptest::prelude::*;

    fn uv(x: &[f64]) -> UnitVector {
        UnitVector::normalize(DVector::from_column_slice(x)).unwrap()
    }

    fn circle(normal: &[f64], offset: f64) -> Subsphere {
        Subsphere::codim_one(&uv(normal), offset).unwrap()
    }

    #[test]
    fn projection_onto_small_circle() {
        let p = circle(&[0.0, 0.0, 1.0], 0.5);
        let q = uv(&[1.0, 0.0, 1.0]);
        let y = project_to_subsphere(&q, &p).unwrap();
        let expect = [0.75f64.sqrt(), 0.0, 0.5];
        for (a, b) in y.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_pole_is_singular() {
        let p = circle(&[0.0, 0.0, 1.0], 0.5);
        assert!(matches!(
            project_to_subsphere(&uv(&[0.0, 0.0, 1.0]), &p),
            Err(Error::SingularProjection { .. })
        ));
    }

    #[test]
    fn residual_on_whole_sphere() {
        let p = Subsphere::whole(2);
        let s = circle(&[0.0, 0.0, 1.0], 0.0);
        let d = residual_distance(&uv(&[1.0, 0.0, 1.0]), &p, &s).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn residual_inside_small_sphere_scales_with_radius() {
        // p: small 2-sphere of S^3 at height 0.6, s: its equator-like circle
        let p = Subsphere::codim_one(&uv(&[0.0, 0.0, 0.0, 1.0]), 0.6).unwrap();
        let v = DMatrix::from_column_slice(4, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let s = Subsphere::new(v, DVector::from_vec(vec![0.6, 0.0]), false).unwrap();
        let y = uv(&[0.8 / 2f64.sqrt(), 0.0, 0.8 / 2f64.sqrt(), 0.6]);
        let d = residual_distance(&y, &p, &s).unwrap();
        assert!((d - 0.8 * std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn blow_up_round_trip() {
        let f = crate::descriptors::tests::random_family(4, Mode::Pns, 9);
        let mut rng = Seed::new(1).rng();
        for i in 0..f.len() - 1 {
            let p = f.level(i);
            let q = UnitVector::new(uniform_direction(5, &mut rng)).unwrap();
            let y = project_to_subsphere(&q, p).unwrap();
            let z = blow_up(&y, p, f.frame(i)).unwrap();
            assert_eq!(z.ambient_dim(), p.dim() + 1);
            let back = blow_down_inverse(&z, p, f.frame(i)).unwrap();
            assert!((back.coords() - y.coords()).amax() < 1e-12);
        }
    }

    #[test]
    fn nested_family_on_s2_reaches_point() {
        let steps = vec![
            RelativeStep { normal: DVector::from_vec(vec![0.0, 0.0, 1.0]), offset: 0.0 },
            RelativeStep { normal: DVector::from_vec(vec![1.0, 0.0]), offset: 1.0 },
        ];
        let f = NestedFamily::from_steps(2, Mode::Pngs, &steps).unwrap();
        let y = nested_project(&uv(&[0.3, 0.4, 0.5]), &f, 1).unwrap();
        assert!((y.coords() - f.nested_mean().unwrap().coords()).amax() < 1e-14);
        assert!((y.as_slice()[0] - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_closest(seed in any::<u64>(), m in 2usize..6, off in -0.9f64..0.9) {
            let mut rng = Seed::new(seed).rng();
            let n = uv(uniform_direction(m + 1, &mut rng).as_slice());
            let p = Subsphere::codim_one(&n, off).unwrap();
            let q = UnitVector::new(uniform_direction(m + 1, &mut rng)).unwrap();
            let y = project_to_subsphere(&q, &p).unwrap();
            prop_assert!(p.deviation(y.coords()) < 1e-12);
            let yy = project_to_subsphere(&y, &p).unwrap();
            prop_assert!((yy.coords() - y.coords()).amax() < 1e-12);
            // no other point of p is closer
            let d = q.dot(&y);
            for _ in 0..20 {
                let r = UnitVector::new(uniform_direction(m + 1, &mut rng)).unwrap();
                let other = project_to_subsphere(&r, &p).unwrap();
                prop_assert!(q.dot(&other) <= d + 1e-12);
            }
        }

        #[test]
        fn nested_projection_matches_direct(seed in any::<u64>(), m in 2usize..6, pns in any::<bool>()) {
            let mode = if pns { Mode::Pns } else { Mode::Pngs };
            let f = crate::descriptors::tests::random_family(m, mode, seed);
            let mut rng = Seed::new(seed ^ 1).rng();
            let q = UnitVector::new(uniform_direction(m + 1, &mut rng)).unwrap();
            let mut y = q.clone();
            for i in 0..f.len() {
                y = project_to_subsphere(&y, f.level(i)).unwrap();
                let nested = nested_project(&q, &f, i).unwrap();
                prop_assert!((nested.coords() - y.coords()).amax() < 1e-9);
            }
        }
    }
}
