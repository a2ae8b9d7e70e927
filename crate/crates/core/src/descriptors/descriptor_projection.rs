use nalgebra::{DMatrix, DVector};

use super::{optimal_position, ziezold_distance, Subsphere, NESTING_TOL};
use crate::error::{Error, Result};
use crate::sphere::complement_unchecked;

const TIE_TOL: f64 = 1e-9;
const DISTINCT_TOL: f64 = 1e-6;

struct Problem {
    /// `ŝ = (w; βᵀ)`, whose first `k` columns are `p` positioned towards `p′`.
    s_hat: DMatrix<f64>,
    z_ref: DMatrix<f64>,
    v_ref: DMatrix<f64>,
    alpha_ref: DVector<f64>,
    target_point: bool,
    great: bool,
}

struct Candidate {
    x: DVector<f64>,
    y: f64,
    boundary: bool,
}

impl Problem {
    fn m1(&self) -> usize {
        self.v_ref.nrows()
    }

    fn candidate(&self, b: &DVector<f64>) -> Candidate {
        let m1 = self.m1();
        let wb = self.s_hat.rows(0, m1) * b;
        let mut px = wb.clone();
        px -= &self.v_ref * (self.v_ref.transpose() * &wb);
        let norm = px.norm();
        let x = if norm > 0.0 { px / norm } else { px };
        let beta_b = self.s_hat.row(m1).transpose().dot(b);
        let room = (1.0 - self.alpha_ref.norm_squared()).max(0.0).sqrt();
        let (y, boundary) = if self.target_point {
            (if beta_b >= 0.0 { room } else { -room }, false)
        } else if self.great {
            (0.0, false)
        } else if beta_b.abs() >= room {
            (beta_b.signum() * room, true)
        } else {
            (beta_b, false)
        };
        Candidate { x, y, boundary }
    }

    /// Squared distance of the best candidate for a fixed dropped direction `b`.
    fn objective(&self, b: &DVector<f64>) -> f64 {
        let m1 = self.m1();
        let c_b = complement_unchecked(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        let sb = &self.s_hat * &c_b;
        let cross = self.z_ref.transpose() * &sb;
        let sigma: f64 = cross.singular_values().iter().sum();
        let first = sb.norm_squared() + self.z_ref.norm_squared() - 2.0 * sigma;
        let cand = self.candidate(b);
        let wb = self.s_hat.rows(0, m1) * b;
        let beta_b = self.s_hat.row(m1).transpose().dot(b);
        let second = (&wb - &cand.x).norm_squared() + (beta_b - cand.y).powi(2);
        first + second
    }

    fn result(&self, b: &DVector<f64>) -> Result<(Subsphere, bool)> {
        let cand = self.candidate(b);
        let k = self.v_ref.ncols();
        let m1 = self.m1();
        let mut v = DMatrix::zeros(m1, k + 1);
        v.columns_mut(0, k).copy_from(&self.v_ref);
        v.set_column(k, &cand.x);
        let mut alpha = DVector::zeros(k + 1);
        alpha.rows_mut(0, k).copy_from(&self.alpha_ref);
        alpha[k] = cand.y;
        let great = self.great && !self.target_point;
        Ok((Subsphere::new(v, alpha, great)?, cand.boundary))
    }
}

fn exp_map(base: &DVector<f64>, frame: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let t = u.norm();
    if t == 0.0 {
        return base.clone();
    }
    (base * t.cos() + frame * u * (t.sin() / t)).normalize()
}

/// Nelder–Mead in normal coordinates around `start`.
fn minimize_on_sphere(problem: &Problem, start: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = start.len() - 1;
    let frame = complement_unchecked(&DMatrix::from_column_slice(n + 1, 1, start.as_slice()));
    let f = |u: &DVector<f64>| problem.objective(&exp_map(start, &frame, u));
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let origin = DVector::zeros(n);
    simplex.push((origin.clone(), f(&origin)));
    for i in 0..n {
        let mut u = DVector::zeros(n);
        u[i] = 0.1;
        let val = f(&u);
        simplex.push((u, val));
    }
    for _ in 0..4000 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex.iter().map(|(u, _)| (u - &simplex[0].0).amax()).fold(0.0, f64::max);
        if spread <= 1e-16 && size < 1e-10 {
            break;
        }
        let centroid = simplex[..n].iter().fold(DVector::zeros(n), |acc, (u, _)| acc + u) / n as f64;
        let worst = simplex[n].clone();
        let reflect = &centroid * 2.0 - &worst.0;
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand = &centroid * 3.0 - &worst.0 * 2.0;
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract = (&centroid + &worst.0) * 0.5;
            let fc = f(&contract);
            if fc < worst.1 {
                simplex[n] = (contract, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let u = (&entry.0 + &best) * 0.5;
                    let val = f(&u);
                    *entry = (u, val);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (exp_map(start, &frame, &simplex[0].0), simplex[0].1)
}

/// Orthogonal projection of `s ∈ S_p` onto `S_{p′}`: the `(j − 1)`-subsphere
/// of `p′` closest to `s` in the Ziezold metric.
///
/// For `p` and `p′` close the minimizer is unique and determined by the
/// dropped direction `b` of the optimal rotation:
/// `x = (I − v′v′ᵀ)wb / ‖(I − v′v′ᵀ)wb‖` and `y = βᵀb`.
pub fn project_descriptor(s: &Subsphere, p: &Subsphere, p_ref: &Subsphere) -> Result<Subsphere> {
    if p.ambient_dim() != p_ref.ambient_dim() || p.dim() != p_ref.dim() {
        return Err(Error::DimensionMismatch { expected: p_ref.dim(), found: p.dim() });
    }
    if s.ambient_dim() != p.ambient_dim() || s.dim() + 1 != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim().saturating_sub(1), found: s.dim() });
    }
    let k = p.codim();
    let m1 = p.ambient_dim() + 1;
    let z_ref = p_ref.z();
    let z_p = if k == 0 {
        p.z()
    } else {
        let r = optimal_position(&p.z(), &z_ref)?;
        p.z() * r
    };
    // express s in the positioned frame of p: s = [z_p, (x_s; y_s)]
    let v_p = z_p.rows(0, m1).into_owned();
    let c = s.v().transpose() * &v_p;
    let dev = (s.v() * &c - &v_p).amax().max(if k > 0 {
        (c.transpose() * s.alpha() - z_p.row(m1).transpose()).amax()
    } else {
        0.0
    });
    if dev > NESTING_TOL {
        return Err(Error::NotNested { level: 0, deviation: dev });
    }
    let c_perp = complement_unchecked(&c);
    let c_perp = c_perp.column(c_perp.ncols() - 1).into_owned();
    let mut x_s = s.v() * &c_perp;
    if k > 0 {
        x_s -= &v_p * (v_p.transpose() * &x_s);
    }
    x_s.normalize_mut();
    let y_s = s.alpha().dot(&c_perp);
    let mut s_hat = DMatrix::zeros(m1 + 1, k + 1);
    s_hat.columns_mut(0, k).copy_from(&z_p);
    for i in 0..m1 {
        s_hat[(i, k)] = x_s[i];
    }
    s_hat[(m1, k)] = y_s;

    let problem = Problem {
        s_hat,
        z_ref,
        v_ref: p_ref.v().clone(),
        alpha_ref: p_ref.alpha().clone(),
        target_point: s.is_point(),
        great: s.is_great(),
    };

    let mut starts = vec![DVector::from_fn(k + 1, |i, _| if i == k { 1.0 } else { 0.0 })];
    for i in 0..k {
        starts.push(DVector::from_fn(k + 1, |r, _| if r == i { 1.0 } else { 0.0 }));
        starts.push(DVector::from_fn(k + 1, |r, _| if r == i || r == k { 0.5f64.sqrt() } else { 0.0 }));
    }
    let mut minima: Vec<(f64, Subsphere, bool)> = Vec::new();
    for start in &starts {
        let (b, val) = minimize_on_sphere(&problem, start);
        if let Ok((cand, boundary)) = problem.result(&b) {
            minima.push((val, cand, boundary));
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best_val, best, boundary) = minima
        .first()
        .cloned()
        .ok_or(Error::SingularProjection { stage: None })?;
    for (val, cand, _) in &minima[1..] {
        let gap = val - best_val;
        if gap <= TIE_TOL && ziezold_distance(cand, &best)? > DISTINCT_TOL {
            return Err(Error::NonUniqueProjection { gap });
        }
    }
    if boundary {
        return Err(Error::InvalidParameter(
            "closest descriptor degenerates to the boundary of the parent".into(),
        ));
    }
    Ok(best)
}
