use std::cmp::Ordering;

use nalgebra::DMatrix;

use super::Subsphere;
use crate::error::{Error, Result};

/// Smallest singular value of the cross-Gram matrix below which the optimal
/// position is considered undefined.
pub const ALIGNMENT_TOL: f64 = 1e-10;

/// Orthogonal `R` minimizing `‖zR − z_ref‖` (Frobenius).
///
/// With `z_refᵀ z = UΣVᵀ` the minimizer is `R = VUᵀ`; it is unique when the
/// cross-Gram matrix has full rank.
pub fn optimal_position(z: &DMatrix<f64>, z_ref: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.shape() != z_ref.shape() {
        return Err(Error::DimensionMismatch { expected: z_ref.ncols(), found: z.ncols() });
    }
    let k = z.ncols();
    if k == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let a = z_ref.transpose() * z;
    let sigma_min = a.singular_values().min();
    if sigma_min <= ALIGNMENT_TOL {
        return Err(Error::DegenerateAlignment { sigma_min });
    }
    Ok(polar_factor(a.transpose()))
}

/// Orthogonal polar factor by the scaled Newton iteration `X ← (γX + X⁻ᵀ/γ)/2`.
///
/// For nearly aligned arguments the cross-Gram matrix is close to the
/// identity with clustered singular values, where assembling `VUᵀ` from a
/// computed SVD loses about half the digits; the iteration does not.
fn polar_factor(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for _ in 0..100 {
        let Some(inv) = x.clone().try_inverse() else {
            break;
        };
        let inv_t = inv.transpose();
        let gamma = (inv.norm() / x.norm()).sqrt();
        let next = (&x * gamma + inv_t / gamma) * 0.5;
        let change = (&next - &x).norm();
        x = next;
        // quadratic convergence: the update just taken is already exact to rounding
        if change < 1e-9 {
            break;
        }
    }
    x
}

fn rotation_unchecked(z: &DMatrix<f64>, z_ref: &DMatrix<f64>) -> DMatrix<f64> {
    polar_factor(z.transpose() * z_ref)
}

fn lexicographic(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Ziezold distance `min_R ‖z − z′R‖` between two classes of equal dimension.
pub fn ziezold_distance(p: &Subsphere, q: &Subsphere) -> Result<f64> {
    if p.ambient_dim() != q.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: p.ambient_dim(), found: q.ambient_dim() });
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), found: q.dim() });
    }
    if p.codim() == 0 {
        return Ok(0.0);
    }
    let (z1, z2) = (p.z(), q.z());
    // fixed argument order keeps the result bitwise symmetric
    let (a, b) = match lexicographic(&z1, &z2) {
        Ordering::Greater => (z2, z1),
        _ => (z1, z2),
    };
    let r = rotation_unchecked(&b, &a);
    Ok((b * r - a).norm())
}
