//! Synthetic two-group designs with known population descriptors.
//!
//! * Design I: both groups on the small 2-sphere `x₄ = α₀` of `S³`, each on
//!   an arc of a different great circle of it, with antipodal nested means.
//! * Design II: as I, but the arcs are centred at the same point.
//! * Design III: on `S²`, two arcs of distinct small circles placed so that
//!   their great-circle fits and great-circle nested means coincide.
//! * Planted chain: samples whose backward nested means are a known family.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::descriptors::{Mode, NestedFamily, RelativeStep};
use crate::error::{Error, Result};
use crate::sphere::{complement_unchecked, sample_vmf_with, uniform_direction, Seed, UnitVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DesignId {
    I,
    II,
    III,
    PlantedChain,
}

impl std::str::FromStr for DesignId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(DesignId::I),
            "ii" | "2" => Ok(DesignId::II),
            "iii" | "3" => Ok(DesignId::III),
            "chain" | "planted-chain" | "plantedchain" => Ok(DesignId::PlantedChain),
            other => Err(Error::InvalidParameter(format!("unknown design '{other}'"))),
        }
    }
}

/// Parameters of the planted-chain design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Dimension `m` of the data sphere.
    pub dim: usize,
    pub mode: Mode,
    /// Relative offset `β` of every small-sphere step (ignored for great spheres).
    pub offset: f64,
    /// Standard deviation of the angular offsets from the innermost small
    /// sphere; outer levels use `spread · spread_decay^k`, `k` levels out.
    pub spread: f64,
    pub spread_decay: f64,
    /// Half-width in degrees of the arc carrying the final-circle angles.
    pub arc_half_width_deg: f64,
    /// Place points in exactly mirrored pairs at every level, so that the
    /// planted family is an exact sample minimizer.
    pub symmetric: bool,
}

impl ChainParams {
    /// Offset scale at level `i` of a family with `levels` levels.
    pub fn level_spread(&self, i: usize, levels: usize) -> f64 {
        let out = (levels - 2 - i) as i32;
        self.spread * self.spread_decay.powi(out)
    }
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            dim: 2,
            mode: Mode::Pns,
            offset: 0.7,
            spread: 0.02,
            spread_decay: 0.5,
            arc_half_width_deg: 60.0,
            symmetric: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub id: DesignId,
    pub n_per_group: usize,
    /// vMF concentration of the jitter; `f64::INFINITY` disables it.
    pub noise_kappa: f64,
    /// Offset of the shared small 2-sphere (designs I and II).
    pub alpha0: f64,
    /// Half-width in degrees of the arcs (designs I–III).
    pub arc_half_width_deg: f64,
    /// Half-width in degrees of the second group's arc (designs I and II).
    pub y_arc_half_width_deg: f64,
    /// Standard deviation in degrees of the offsets across each arc inside
    /// the shared small 2-sphere (designs I and II).
    pub band_deg: f64,
    /// Latitude in degrees of the first group's circle (design III).
    pub latitude_deg: f64,
    pub chain: ChainParams,
    pub seed: Seed,
}

impl SimDesign {
    pub fn new(id: DesignId, n_per_group: usize, seed: Seed) -> Self {
        SimDesign {
            id,
            n_per_group,
            noise_kappa: 200.0,
            alpha0: 0.3,
            arc_half_width_deg: 60.0,
            y_arc_half_width_deg: 60.0,
            band_deg: 0.0,
            latitude_deg: 20.0,
            chain: ChainParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_per_group == 0 {
            return bad("n_per_group must be positive".into());
        }
        if !(self.noise_kappa >= 0.0) {
            return bad(format!("noise_kappa must be non-negative, got {}", self.noise_kappa));
        }
        if !(self.alpha0.abs() < 1.0) {
            return bad(format!("alpha0 must lie in (-1, 1), got {}", self.alpha0));
        }
        if !(self.arc_half_width_deg > 0.0 && self.arc_half_width_deg <= 90.0) {
            return bad(format!("arc width must lie in (0, 90], got {}", self.arc_half_width_deg));
        }
        if !(self.y_arc_half_width_deg > 0.0 && self.y_arc_half_width_deg <= 90.0) {
            return bad(format!("arc width must lie in (0, 90], got {}", self.y_arc_half_width_deg));
        }
        if !(self.band_deg >= 0.0 && self.band_deg < 45.0) {
            return bad(format!("band width must lie in [0, 45), got {}", self.band_deg));
        }
        if !(self.latitude_deg > 0.0 && self.latitude_deg < 90.0) {
            return bad(format!("latitude must lie in (0, 90), got {}", self.latitude_deg));
        }
        let c = &self.chain;
        if c.dim < 2 {
            return bad("planted chains need a sphere of dimension at least 2".into());
        }
        if !(c.offset.abs() < 1.0) || !(c.spread >= 0.0) || !(c.spread_decay > 0.0) {
            return bad("chain offset must lie in (-1, 1) and spread be non-negative".into());
        }
        if !(c.arc_half_width_deg > 0.0 && c.arc_half_width_deg <= 180.0) {
            return bad("chain arc width must lie in (0, 180]".into());
        }
        Ok(())
    }
}

/// A population descriptor used to generate one group.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthEntry {
    pub label: String,
    pub family: NestedFamily,
}

#[derive(Clone, Debug)]
pub struct SimSample {
    pub x: Vec<UnitVector>,
    pub y: Vec<UnitVector>,
    pub truth: Vec<TruthEntry>,
}

fn jitter<R: Rng + ?Sized>(p: DVector<f64>, kappa: f64, rng: &mut R) -> Result<UnitVector> {
    let p = UnitVector::normalize(p)?;
    if kappa.is_infinite() {
        return Ok(p);
    }
    Ok(sample_vmf_with(&p, kappa, 1, rng)?.remove(0))
}

fn arc_angles<R: Rng + ?Sized>(n: usize, half_width: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half_width..=half_width)).collect()
}

pub fn generate(design: &SimDesign) -> Result<SimSample> {
    design.validate()?;
    match design.id {
        DesignId::I | DesignId::II => small_sphere_design(design),
        DesignId::III => circles_design(design),
        DesignId::PlantedChain => chain_design(design),
    }
}

fn small_sphere_design(d: &SimDesign) -> Result<SimSample> {
    let a0 = d.alpha0;
    let rad = (1.0 - a0 * a0).sqrt();
    let w = d.arc_half_width_deg.to_radians();
    let antipodal = d.id == DesignId::I;
    let point = |u: [f64; 3]| DVector::from_vec(vec![rad * u[0], rad * u[1], rad * u[2], a0]);

    let band = Normal::new(0.0, d.band_deg.to_radians()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rx = d.seed.child(1).rng();
    let x = arc_angles(d.n_per_group, w, &mut rx)
        .into_iter()
        .map(|t| {
            let b: f64 = band.sample(&mut rx);
            jitter(point([t.cos() * b.cos(), t.sin() * b.cos(), b.sin()]), d.noise_kappa, &mut rx)
        })
        .collect::<Result<Vec<_>>>()?;
    let sign = if antipodal { -1.0 } else { 1.0 };
    let mut ry = d.seed.child(2).rng();
    let y = arc_angles(d.n_per_group, d.y_arc_half_width_deg.to_radians(), &mut ry)
        .into_iter()
        .map(|t| {
            let b: f64 = band.sample(&mut ry);
            jitter(point([sign * t.cos() * b.cos(), b.sin(), t.sin() * b.cos()]), d.noise_kappa, &mut ry)
        })
        .collect::<Result<Vec<_>>>()?;

    let e = |i: usize, n: usize| DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 });
    let top = RelativeStep { normal: e(3, 4), offset: a0 };
    let fx = NestedFamily::from_steps(
        3,
        Mode::Pns,
        &[top.clone(), RelativeStep { normal: e(2, 3), offset: 0.0 }, RelativeStep { normal: e(0, 2), offset: 1.0 }],
    )?;
    let fy = NestedFamily::from_steps(
        3,
        Mode::Pns,
        &[
            top,
            RelativeStep { normal: e(1, 3), offset: 0.0 },
            RelativeStep { normal: e(0, 2) * sign, offset: 1.0 },
        ],
    )?;
    Ok(SimSample {
        x,
        y,
        truth: vec![
            TruthEntry { label: "x_pns".into(), family: fx },
            TruthEntry { label: "y_pns".into(), family: fy },
        ],
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Tilt `τ` of the great circle `{⟨x, (−sin τ, 0, cos τ)⟩ = 0}` best fitting
/// the arc `(cos λ cos φ, cos λ sin φ, sin λ)`, `φ` uniform on `[−w, w]`.
fn great_circle_tilt(lat: f64, w: f64) -> f64 {
    let quad = gauss_legendre(64);
    let objective = |tau: f64| {
        quad.iter()
            .map(|&(s, wt)| {
                let phi = w * s;
                let c = -tau.sin() * lat.cos() * phi.cos() + tau.cos() * lat.sin();
                wt * c.clamp(-1.0, 1.0).asin().powi(2)
            })
            .sum::<f64>()
    };
    let (mut a, mut b) = (0.0, FRAC_PI_2);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-14 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d);
        }
    }
    (a + b) / 2.0
}

fn circles_design(d: &SimDesign) -> Result<SimSample> {
    let lat = d.latitude_deg.to_radians();
    let w = d.arc_half_width_deg.to_radians();
    let tau = great_circle_tilt(lat, w);
    let axis = DVector::from_vec(vec![tau.cos(), 0.0, tau.sin()]);
    let on_arc = |phi: f64| DVector::from_vec(vec![lat.cos() * phi.cos(), lat.cos() * phi.sin(), lat.sin()]);
    // half-turn about an axis inside the fitted great circle
    let turn = |x: DVector<f64>| &axis * (2.0 * axis.dot(&x)) - x;

    let mut rx = d.seed.child(1).rng();
    let x = arc_angles(d.n_per_group, w, &mut rx)
        .into_iter()
        .map(|phi| jitter(on_arc(phi), d.noise_kappa, &mut rx))
        .collect::<Result<Vec<_>>>()?;
    let mut ry = d.seed.child(2).rng();
    let y = arc_angles(d.n_per_group, w, &mut ry)
        .into_iter()
        .map(|phi| jitter(turn(on_arc(phi)), d.noise_kappa, &mut ry))
        .collect::<Result<Vec<_>>>()?;

    let e3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let pns_family = |normal: DVector<f64>, center: DVector<f64>| -> Result<NestedFamily> {
        let frame = complement_unchecked(&DMatrix::from_column_slice(3, 1, normal.as_slice()));
        let rel = (frame.transpose() * center).normalize();
        NestedFamily::from_steps(
            2,
            Mode::Pns,
            &[RelativeStep { normal, offset: lat.sin() }, RelativeStep { normal: rel, offset: 1.0 }],
        )
    };
    let center_x = on_arc(0.0);
    let fx = pns_family(e3.clone(), center_x.clone())?;
    let fy = pns_family(turn(e3.clone()), turn(center_x))?;
    let great_normal = DVector::from_vec(vec![-tau.sin(), 0.0, tau.cos()]);
    let frame = complement_unchecked(&DMatrix::from_column_slice(3, 1, great_normal.as_slice()));
    let rel = (frame.transpose() * &axis).normalize();
    let fg = NestedFamily::from_steps(
        2,
        Mode::Pngs,
        &[RelativeStep { normal: great_normal, offset: 0.0 }, RelativeStep { normal: rel, offset: 1.0 }],
    )?;
    Ok(SimSample {
        x,
        y,
        truth: vec![
            TruthEntry { label: "x_pns".into(), family: fx },
            TruthEntry { label: "y_pns".into(), family: fy },
            TruthEntry { label: "pngs".into(), family: fg },
        ],
    })
}

/// Random planted family for the chain design; the same for every group.
pub fn planted_chain_family(params: &ChainParams, seed: Seed) -> Result<NestedFamily> {
    let mut rng = seed.child(0).rng();
    let m = params.dim;
    let steps: Vec<RelativeStep> = (0..m)
        .map(|i| {
            let j = m - i;
            let normal = uniform_direction(j + 1, &mut rng);
            let offset = if j == 1 {
                1.0
            } else if params.mode.is_great() {
                0.0
            } else {
                params.offset
            };
            RelativeStep { normal, offset }
        })
        .collect();
    NestedFamily::from_steps(m, params.mode, &steps)
}

/// Points in blown-up coordinates of level `i`, recursively lifted from the
/// final circle. `offsets(level, k)` supplies the angular offset of point `k`.
fn lift_chain(family: &NestedFamily, angles: &[f64], offsets: &mut dyn FnMut(usize) -> f64) -> Vec<DVector<f64>> {
    let m = family.ambient_dim();
    let last = family.len() - 1;
    let mu_step = family.step(last);
    let mu = mu_step.normal[1].atan2(mu_step.normal[0]);
    let mut pts: Vec<DVector<f64>> =
        angles.iter().map(|t| DVector::from_vec(vec![(mu + t).cos(), (mu + t).sin()])).collect();
    for i in (0..last).rev() {
        let step = family.step(i);
        let w = &step.normal;
        let r0 = step.offset.clamp(-1.0, 1.0).acos();
        let basis = complement_unchecked(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()));
        pts = pts
            .into_iter()
            .map(|u| {
                let r = r0 + offsets(i);
                w * r.cos() + &basis * u * r.sin()
            })
            .collect();
    }
    debug_assert!(pts.iter().all(|p| p.len() == m + 1));
    pts
}

fn chain_design(d: &SimDesign) -> Result<SimSample> {
    let family = planted_chain_family(&d.chain, d.seed)?;
    let x = chain_points(d, &family, d.seed.child(1))?;
    let y = chain_points(d, &family, d.seed.child(2))?;
    Ok(SimSample { x, y, truth: vec![TruthEntry { label: "planted".into(), family }] })
}

/// One group of `d.n_per_group` points around a planted chain, drawn from
/// `seed` alone so that a fixed family can be resampled repeatedly.
pub(crate) fn chain_points(d: &SimDesign, family: &NestedFamily, seed: Seed) -> Result<Vec<UnitVector>> {
    let c = &d.chain;
    let half = c.arc_half_width_deg.to_radians();
    let mut rng = seed.rng();
    let levels = family.len();
    let pts = if c.symmetric {
        // mirrored angles on the circle, mirrored offsets at every level
        let copies = 1usize << (levels - 1);
        let base = d.n_per_group.div_ceil(copies).max(2);
        let mu_step = family.step(levels - 1);
        let mu = mu_step.normal[1].atan2(mu_step.normal[0]);
        let mut pts: Vec<DVector<f64>> = (0..base)
            .map(|k| {
                let t = -half + 2.0 * half * k as f64 / (base - 1) as f64;
                DVector::from_vec(vec![(mu + t).cos(), (mu + t).sin()])
            })
            .collect();
        for i in (0..levels - 1).rev() {
            let step = family.step(i);
            let w = &step.normal;
            let r0 = step.offset.clamp(-1.0, 1.0).acos();
            let basis = complement_unchecked(&DMatrix::from_column_slice(w.len(), 1, w.as_slice()));
            let delta = c.level_spread(i, levels);
            let mut next = Vec::with_capacity(pts.len() * 2);
            for u in &pts {
                let tangent = &basis * u;
                for sign in [1.0, -1.0] {
                    let r = r0 + sign * delta;
                    next.push(w * r.cos() + &tangent * r.sin());
                }
            }
            pts = next;
        }
        pts
    } else {
        let angles = arc_angles(d.n_per_group, half, &mut rng);
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut draw = |i: usize| c.level_spread(i, levels) * normal.sample(&mut rng);
        lift_chain(family, &angles, &mut draw)
    };
    let mut jit = seed.child(100).rng();
    pts.into_iter().map(|p| jitter(p, d.noise_kappa, &mut jit)).collect()
}
