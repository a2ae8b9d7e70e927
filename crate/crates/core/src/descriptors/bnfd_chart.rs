//! Joint chart of whole nested families near a base family.
//!
//! The terminal class is charted by a [`SubsphereChart`]; each parent level
//! is then encoded by the unit vector `b` that selects, within the normals
//! of its child, the one direction the parent drops. With the base family in
//! accumulated form every base `b` is the last basis vector, so the free
//! coordinates of `b` are its leading components.

use nalgebra::{DMatrix, DVector};

use super::{Mode, NestedFamily, Subsphere, SubsphereChart};
use crate::error::{Error, Result};

/// Smallest admissible last component of a step vector `b`.
const STEP_VALIDITY: f64 = 0.1;

/// Coordinates of a family: the terminal class (`theta`) and the steps back
/// up the family (`xi`).
#[derive(Clone, Debug, PartialEq)]
pub struct ChartCoords {
    pub theta: DVector<f64>,
    pub xi: DVector<f64>,
}

impl ChartCoords {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.theta.len() + self.xi.len());
        out.rows_mut(0, self.theta.len()).copy_from(&self.theta);
        out.rows_mut(self.theta.len(), self.xi.len()).copy_from(&self.xi);
        out
    }
}

#[derive(Clone, Debug)]
pub struct BnfdChart {
    mode: Mode,
    len: usize,
    terminal: SubsphereChart,
    step_dims: Vec<usize>,
}

/// First `n − 1` columns of the minimal rotation taking `e_n` to `b`.
fn step_basis(b: &DVector<f64>) -> DMatrix<f64> {
    let n = b.len();
    let c = b[n - 1];
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, n - 1)] += b[i];
        k[(n - 1, i)] -= b[i];
    }
    let r = DMatrix::identity(n, n) + &k + &k * &k / (1.0 + c);
    r.columns(0, n - 1).into_owned()
}

impl BnfdChart {
    pub fn new(base: &NestedFamily) -> Result<Self> {
        let terminal = SubsphereChart::new(base.terminal())?;
        let len = base.len();
        let mut step_dims = Vec::with_capacity(len - 1);
        for i in (0..len - 1).rev() {
            let k = i + 2;
            let forced = base.mode().is_great() && base.level(i + 1).is_point();
            step_dims.push(if forced { 0 } else { k - 1 });
        }
        Ok(BnfdChart { mode: base.mode(), len, terminal, step_dims })
    }

    pub fn dim(&self) -> usize {
        self.terminal.dim() + self.step_dims.iter().sum::<usize>()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn coords(&self, family: &NestedFamily) -> Result<ChartCoords> {
        if family.len() != self.len || family.mode() != self.mode {
            return Err(Error::InvalidParameter("family does not match the chart".into()));
        }
        let mut w = self.terminal.position(family.terminal())?;
        let theta = self.terminal.coords(family.terminal())?;
        let m1 = family.ambient_dim() + 1;
        let mut xi = Vec::with_capacity(self.dim() - theta.len());
        for (s, i) in (0..self.len - 1).rev().enumerate() {
            let child = family.level(i + 1);
            let x = child.v().column(i + 1);
            let wv = w.rows(0, m1);
            let mut b = wv.transpose() * x;
            let n = b.len();
            if b[n - 1] < 0.0 {
                b.neg_mut();
            }
            if b[n - 1] <= STEP_VALIDITY {
                return Err(Error::OutOfChart {
                    level: i,
                    reason: format!("step direction has last component {:.3}", b[n - 1]),
                });
            }
            if self.step_dims[s] > 0 {
                xi.extend(b.rows(0, n - 1).iter());
            }
            w = w * step_basis(&b);
        }
        Ok(ChartCoords { theta, xi: DVector::from_vec(xi) })
    }

    pub fn inverse(&self, coords: &ChartCoords) -> Result<NestedFamily> {
        let expected = self.dim() - self.terminal.dim();
        if coords.xi.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: coords.xi.len() });
        }
        let mut w = self.terminal.inverse_z(&coords.theta)?;
        let m1 = w.nrows() - 1;
        let terminal_great = self.terminal.base().is_great();
        let mut levels = vec![Subsphere::from_z(&w, terminal_great)?];
        let mut offset = 0;
        for &d in &self.step_dims {
            let n = w.ncols();
            let b = if d == 0 {
                let mut a = w.row(m1).transpose();
                let norm = a.norm();
                a /= norm;
                if a[n - 1] < 0.0 {
                    a.neg_mut();
                }
                a
            } else {
                let lead = coords.xi.rows(offset, d);
                offset += d;
                let rest = 1.0 - lead.norm_squared();
                if rest <= STEP_VALIDITY * STEP_VALIDITY {
                    return Err(Error::OutOfChart {
                        level: levels.len(),
                        reason: "step coordinates outside the unit ball".into(),
                    });
                }
                let mut b = DVector::zeros(n);
                b.rows_mut(0, d).copy_from(&lead);
                b[n - 1] = rest.sqrt();
                b
            };
            w = w * step_basis(&b);
            let great = self.mode.is_great();
            levels.push(Subsphere::from_z(&w, great)?);
        }
        levels.reverse();
        NestedFamily::from_levels(self.mode, &levels)
    }

    pub fn inverse_vector(&self, v: &DVector<f64>) -> Result<NestedFamily> {
        let t = self.terminal.dim();
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        self.inverse(&ChartCoords {
            theta: v.rows(0, t).into_owned(),
            xi: v.rows(t, v.len() - t).into_owned(),
        })
    }
}
