//! Least-squares fitting of a codimension-one subsphere `{x : ⟨x, v⟩ = cos r}`.
//!
//! The radius is eliminated in closed form (mean colatitude for small
//! spheres, `π/2` for great spheres) and the normal is found by damped
//! Newton steps in tangent coordinates at the current `v`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::FitConfig;
use crate::descriptors::Subsphere;
use crate::error::{Error, Result};
use crate::sphere::{complement_unchecked, uniform_direction, Seed, UnitVector};

const DEGENERATE_TOL: f64 = 1e-10;
const MIN_SIN: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e12;
const REL_DECREASE_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-13;
const FINAL_STEP_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-13;

/// Result of a single subsphere fit.
#[derive(Clone, Debug)]
pub struct SubsphereFit {
    pub normal: DVector<f64>,
    /// Angular radius in `(0, π/2]`.
    pub radius: f64,
    pub objective: f64,
    /// Objective after every accepted step of the selected restart.
    pub trace: Vec<f64>,
    pub restart: usize,
    pub iterations: usize,
}

impl SubsphereFit {
    pub fn offset(&self) -> f64 {
        if self.radius == FRAC_PI_2 {
            0.0
        } else {
            self.radius.cos()
        }
    }

    pub fn subsphere(&self, great: bool) -> Result<Subsphere> {
        let v = DMatrix::from_column_slice(self.normal.len(), 1, self.normal.as_slice());
        let sphere_dim = self.normal.len() - 1;
        Subsphere::new(v, DVector::from_element(1, self.offset()), great && sphere_dim > 1)
    }
}

/// Points stored contiguously, one row per point.
pub(crate) struct Cloud<'a> {
    dim: usize,
    data: &'a [f64],
}

impl<'a> Cloud<'a> {
    pub(crate) fn new(dim: usize, data: &'a [f64]) -> Self {
        debug_assert_eq!(data.len() % dim, 0);
        Cloud { dim, data }
    }

    fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

#[inline]
fn colatitude(v: &[f64], x: &[f64]) -> (f64, f64) {
    let c: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
    let s2: f64 = v.iter().zip(x).map(|(a, b)| (b - c * a).powi(2)).sum();
    let s = s2.sqrt();
    (s.atan2(c), s)
}

fn objective(cloud: &Cloud, v: &[f64], great: bool, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(cloud.rows().map(|x| colatitude(v, x).0));
    let center = if great {
        FRAC_PI_2
    } else {
        scratch.iter().sum::<f64>() / scratch.len() as f64
    };
    scratch.iter().map(|t| (t - center).powi(2)).sum()
}

struct Run {
    v: DVector<f64>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

struct Derivatives {
    basis: DMatrix<f64>,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    /// Mean diagonal of the Gauss–Newton term, used to scale the damping.
    scale: f64,
}

/// Gradient and Hessian of the objective in tangent coordinates at `v`.
fn derivatives(cloud: &Cloud, v: &DVector<f64>, great: bool) -> Derivatives {
    let d = cloud.dim;
    let t = d - 1;
    let n = cloud.len() as f64;
    let basis = complement_unchecked(&DMatrix::from_column_slice(d, 1, v.as_slice()));
    let angles: Vec<(f64, f64)> = cloud.rows().map(|x| colatitude(v.as_slice(), x)).collect();
    let center = if great { FRAC_PI_2 } else { angles.iter().map(|a| a.0).sum::<f64>() / n };
    // with g = ∇θ = −Uᵀx / sin θ, the Hessian of θ is cot θ (I − ggᵀ)
    let mut proj = vec![0.0; t];
    let mut sg = DVector::<f64>::zeros(t);
    let mut sgg = DMatrix::<f64>::zeros(t, t);
    let mut grad = DVector::<f64>::zeros(t);
    let mut curv = DMatrix::<f64>::zeros(t, t);
    let mut curv_diag = 0.0;
    for (x, &(theta, s)) in cloud.rows().zip(&angles) {
        let s = s.max(MIN_SIN);
        let inv = -1.0 / s;
        for (a, p) in proj.iter_mut().enumerate() {
            let col = basis.column(a);
            *p = inv * col.iter().zip(x).map(|(u, xx)| u * xx).sum::<f64>();
        }
        let e = theta - center;
        let ec = e * (theta.cos() / s);
        curv_diag += ec;
        for a in 0..t {
            sg[a] += proj[a];
            grad[a] += e * proj[a];
            for b in 0..=a {
                let pp = proj[a] * proj[b];
                sgg[(a, b)] += pp;
                curv[(a, b)] += ec * pp;
            }
        }
    }
    for a in 0..t {
        for b in 0..a {
            sgg[(b, a)] = sgg[(a, b)];
            curv[(b, a)] = curv[(a, b)];
        }
    }
    let scale = (sgg.trace() / t as f64).max(f64::MIN_POSITIVE);
    let mut hess = if great { sgg } else { &sgg - &sg * sg.transpose() / n };
    hess -= curv;
    for a in 0..t {
        hess[(a, a)] += curv_diag;
    }
    Derivatives { basis, grad, hess, scale }
}

fn run_lm(cloud: &Cloud, v0: &DVector<f64>, great: bool, cfg: &FitConfig) -> Run {
    let t = cloud.dim - 1;
    let mut scratch = Vec::with_capacity(cloud.len());
    let mut v = v0.normalize();
    let mut f = objective(cloud, v.as_slice(), great, &mut scratch);
    let mut trace = vec![f];
    let mut lambda = cfg.damping;
    for iter in 0..cfg.max_iter {
        let Derivatives { basis, grad, hess, scale } = derivatives(cloud, &v, great);
        let gnorm = grad.norm();
        if gnorm <= cfg.grad_tol {
            return Run { v, objective: f, trace, iterations: iter, converged: true };
        }
        loop {
            let mut damped = hess.clone();
            for a in 0..t {
                damped[(a, a)] += lambda * scale;
            }
            let step = damped.cholesky().map(|c| -c.solve(&grad));
            let Some(delta) = step else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    return Run { v, objective: f, trace, iterations: iter, converged: true };
                }
                continue;
            };
            let len = delta.norm();
            let dir = &basis * &delta;
            let candidate = if len > 0.0 { (&v * len.cos() + dir * (len.sin() / len)).normalize() } else { v.clone() };
            let f_new = objective(cloud, candidate.as_slice(), great, &mut scratch);
            // in flat directions the objective stops resolving progress before the
            // normal does; a tie within rounding is then settled by the gradient
            let tie = f_new <= f + TIE_TOL * f && derivatives(cloud, &candidate, great).grad.norm() < 0.5 * gnorm;
            if f_new < f || tie {
                let rel = (f - f_new) / f.max(f64::MIN_POSITIVE);
                v = candidate;
                f = f_new.min(f);
                trace.push(f);
                lambda = (lambda / 10.0).max(1e-15);
                if len < STEP_TOL || (!tie && rel <= REL_DECREASE_TOL && len < FINAL_STEP_TOL) {
                    return Run { v, objective: f, trace, iterations: iter + 1, converged: true };
                }
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_DAMPING || len < STEP_TOL {
                return Run { v, objective: f, trace, iterations: iter + 1, converged: true };
            }
        }
    }
    Run { v, objective: f, trace, iterations: cfg.max_iter, converged: false }
}

fn smallest_eigenvector(m: DMatrix<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let idx = eig.eigenvalues.imin();
    eig.eigenvectors.column(idx).into_owned()
}

fn initial_normals(cloud: &Cloud, cfg: &FitConfig, seed: Seed) -> Vec<DVector<f64>> {
    let d = cloud.dim;
    let n = cloud.len() as f64;
    let mut second = DMatrix::<f64>::zeros(d, d);
    let mut mean = DVector::<f64>::zeros(d);
    for x in cloud.rows() {
        let x = DVector::from_column_slice(x);
        second += &x * x.transpose();
        mean += x;
    }
    let centered = &second / n - (&mean / n) * (&mean / n).transpose();
    let mut inits = vec![smallest_eigenvector(second)];
    if mean.norm() > 1e-12 {
        inits.push(mean.normalize());
    }
    inits.push(smallest_eigenvector(centered));
    inits.truncate(cfg.restarts);
    let mut rng = seed.rng();
    while inits.len() < cfg.restarts {
        inits.push(uniform_direction(d, &mut rng));
    }
    inits
}

/// Closed-form radius for a normal, reflected into `(0, π/2]`.
fn finish(cloud: &Cloud, v: DVector<f64>, great: bool) -> (DVector<f64>, f64) {
    if great {
        let mut v = v;
        if let Some(&first) = v.iter().find(|x| x.abs() > 1e-14) {
            if first < 0.0 {
                v.neg_mut();
            }
        }
        return (v, FRAC_PI_2);
    }
    let r = cloud.rows().map(|x| colatitude(v.as_slice(), x).0).sum::<f64>() / cloud.len() as f64;
    if r > FRAC_PI_2 {
        (-v, std::f64::consts::PI - r)
    } else {
        (v, r)
    }
}

pub(crate) fn fit_cloud(cloud: &Cloud, great: bool, cfg: &FitConfig, seed: Seed, level: usize) -> Result<SubsphereFit> {
    let n = cloud.len();
    if n < 3 {
        return Err(Error::InsufficientData { level, needed: 3, found: n });
    }
    let first = &cloud.data[..cloud.dim];
    let spread = cloud.rows().map(|x| colatitude(first, x).0).fold(0.0, f64::max);
    if spread <= DEGENERATE_TOL {
        return Err(Error::DegenerateData { level });
    }
    let mut best: Option<(usize, Run)> = None;
    let mut any_converged = false;
    for (i, v0) in initial_normals(cloud, cfg, seed).iter().enumerate() {
        let run = run_lm(cloud, v0, great, cfg);
        any_converged |= run.converged;
        let better = match &best {
            None => true,
            Some((_, b)) => run.objective < b.objective,
        };
        if better {
            best = Some((i, run));
        }
    }
    if !any_converged {
        return Err(Error::NoConvergence { level, iterations: cfg.max_iter });
    }
    let (restart, run) = best.expect("at least one restart");
    let (normal, radius) = finish(cloud, run.v, great);
    Ok(SubsphereFit { normal, radius, objective: run.objective, trace: run.trace, restart, iterations: run.iterations })
}

/// Best-fitting codimension-one subsphere of `S^j` for the given points.
pub fn fit_subsphere_detailed(points: &[UnitVector], great: bool, cfg: &FitConfig) -> Result<SubsphereFit> {
    let Some(first) = points.first() else {
        return Err(Error::InsufficientData { level: 0, needed: 3, found: 0 });
    };
    let d = first.ambient_dim();
    let mut data = Vec::with_capacity(points.len() * d);
    for p in points {
        if p.ambient_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.ambient_dim() });
        }
        data.extend_from_slice(p.as_slice());
    }
    fit_cloud(&Cloud::new(d, &data), great, cfg, cfg.seed, 0)
}

/// Codimension-one subsphere minimizing the summed squared arc residuals.
pub fn fit_subsphere(points: &[UnitVector], great: bool, cfg: &FitConfig) -> Result<Subsphere> {
    fit_subsphere_detailed(points, great, cfg)?.subsphere(great)
}
