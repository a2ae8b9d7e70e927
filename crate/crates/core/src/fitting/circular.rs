use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Arc length between two angles on the unit circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Global minimizer in `[0, 2π)` of `scale² Σ d(θ, θᵢ)²`.
///
/// Every minimizer is the linear mean of the angles unwrapped at one of the
/// `n` cut points, so the candidates are enumerated exactly. Ties go to the
/// smallest angle.
pub fn circular_frechet_mean(angles: &[f64], scale: f64) -> Result<f64> {
    if angles.is_empty() {
        return Err(Error::InsufficientData { level: 0, needed: 1, found: 0 });
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let mut sorted: Vec<f64> = angles.iter().map(|&a| wrap(a)).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let total: f64 = sorted.iter().sum();
    let objective = |mu: f64| sorted.iter().map(|&t| circular_distance(mu, t).powi(2)).sum::<f64>();

    let mut best: Option<(f64, f64)> = None;
    let mut shifted = 0.0;
    for i in 0..sorted.len() {
        // angles before index i are moved up by 2π
        if i > 0 {
            shifted += TAU;
        }
        let mu = wrap((total + shifted) / n);
        let f = objective(mu);
        best = match best {
            None => Some((mu, f)),
            Some((bm, bf)) => {
                let tol = 1e-12 * (1.0 + bf.abs());
                if f < bf - tol || ((f - bf).abs() <= tol && mu < bm) {
                    Some((mu, f))
                } else {
                    Some((bm, bf))
                }
            }
        };
    }
    Ok(best.expect("non-empty").0)
}
