use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::circular::{circular_distance, circular_frechet_mean};
use super::subsphere::{fit_cloud, Cloud};
use super::FitConfig;
use crate::descriptors::{NestedFamily, RelativeStep};
use crate::error::{Error, Result};
use crate::sphere::{complement_unchecked, Seed, UnitVector};

/// Points whose blown-up image is shorter than this are dropped.
const DROP_TOL: f64 = 1e-12;

/// Outcome of a backward nested fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    #[serde(skip)]
    pub family: NestedFamily,
    /// Root mean squared residual distance at each level, measured in the
    /// intrinsic metric of the parent subsphere.
    pub residuals_per_level: Vec<f64>,
    /// Accepted objective values of the selected restart, per level.
    pub objective_trace: Vec<Vec<f64>>,
    /// Seed used at each level; random restarts derive from it.
    pub seeds_used: Vec<Seed>,
    /// Index of the restart selected at each level.
    pub chosen_restart: Vec<usize>,
    /// Number of points dropped while blowing up to each level.
    pub dropped: Vec<usize>,
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fits a backward nested family (PNS or PNGS according to `cfg.mode`).
///
/// The input is sorted before fitting, so the result does not depend on the
/// order of the points.
pub fn fit_bnfd(points: &[UnitVector], cfg: &FitConfig) -> Result<FitReport> {
    let Some(first) = points.first() else {
        return Err(Error::InsufficientData { level: 0, needed: 3, found: 0 });
    };
    let d0 = first.ambient_dim();
    let m = d0 - 1;
    let depth = cfg.validate(m)?;
    let mut rows: Vec<&[f64]> = Vec::with_capacity(points.len());
    for p in points {
        if p.ambient_dim() != d0 {
            return Err(Error::DimensionMismatch { expected: d0, found: p.ambient_dim() });
        }
        rows.push(p.as_slice());
    }
    rows.sort_by(|a, b| lexicographic(a, b));
    let mut data: Vec<f64> = rows.concat();

    let great = cfg.mode.is_great();
    let mut steps = Vec::with_capacity(depth);
    let mut residuals = Vec::with_capacity(depth);
    let mut traces = Vec::with_capacity(depth);
    let mut seeds = Vec::with_capacity(depth);
    let mut chosen = Vec::with_capacity(depth);
    let mut dropped = Vec::with_capacity(depth);
    let mut scale = 1.0;
    let mut dim = d0;
    for level in 0..depth {
        let seed = cfg.seed.child(level as u64);
        seeds.push(seed);
        let n = data.len() / dim;
        if dim == 2 {
            let angles: Vec<f64> = data.chunks_exact(2).map(|x| x[1].atan2(x[0])).collect();
            if angles.is_empty() {
                return Err(Error::InsufficientData { level, needed: 1, found: 0 });
            }
            let mu = circular_frechet_mean(&angles, scale)?;
            let ss: f64 = angles.iter().map(|&t| circular_distance(mu, t).powi(2)).sum();
            residuals.push(scale * (ss / n as f64).sqrt());
            traces.push(vec![scale * scale * ss]);
            chosen.push(0);
            steps.push(RelativeStep { normal: DVector::from_vec(vec![mu.cos(), mu.sin()]), offset: 1.0 });
            break;
        }
        let fit = fit_cloud(&Cloud::new(dim, &data), great, cfg, seed, level)?;
        residuals.push(scale * (fit.objective / n as f64).sqrt());
        traces.push(fit.trace.iter().map(|f| f * scale * scale).collect());
        chosen.push(fit.restart);
        let offset = fit.offset();
        let w = fit.normal.clone();
        steps.push(RelativeStep { normal: w.clone(), offset });
        scale *= (1.0 - offset * offset).max(0.0).sqrt();
        if level + 1 == depth {
            break;
        }
        // blow up the projections onto the fitted subsphere: normalize(w̃ᵀx)
        let basis = complement_unchecked(&DMatrix::from_column_slice(dim, 1, w.as_slice()));
        let next_dim = dim - 1;
        let mut next = Vec::with_capacity(n * next_dim);
        let mut lost = 0;
        for x in data.chunks_exact(dim) {
            let y: Vec<f64> = (0..next_dim)
                .map(|c| basis.column(c).iter().zip(x).map(|(a, b)| a * b).sum())
                .collect();
            let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < DROP_TOL {
                lost += 1;
                continue;
            }
            next.extend(y.iter().map(|a| a / norm));
        }
        if lost > 0 {
            log::warn!("dropped {lost} points lying on the normal axis at level {level}");
        }
        dropped.push(lost);
        data = next;
        dim = next_dim;
    }
    let family = NestedFamily::from_steps(m, cfg.mode, &steps)?;
    Ok(FitReport {
        family,
        residuals_per_level: residuals,
        objective_trace: traces,
        seeds_used: seeds,
        chosen_restart: chosen,
        dropped,
    })
}
