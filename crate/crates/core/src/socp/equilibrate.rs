//! Ruiz equilibration of the constraint matrix.
//!
//! The scaled program is `min (Dc)'x^ s.t. (E A D) x^ + s^ = E b`, recovered by
//! `x = D x^`, `s = E^{-1} s^`, `z = E z^`. Second-order cone blocks share a
//! single row factor so that cone membership is preserved.

use super::cones::Cone;
use super::sparse::CsrMatrix;

pub(crate) const RUIZ_SWEEPS: usize = 10;
const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

#[derive(Debug, Clone)]
pub(crate) struct Equilibration {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

impl Equilibration {
    pub fn identity(m: usize, n: usize) -> Self {
        Self { row: vec![1.0; m], col: vec![1.0; n] }
    }

    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.col).map(|(v, d)| v * d).collect()
    }

    pub fn unscale_s(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(&self.row).map(|(v, e)| v / e).collect()
    }

    pub fn unscale_z(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.row).map(|(v, e)| v * e).collect()
    }
}

pub(crate) fn ruiz(a: &CsrMatrix, cones: &[Cone], sweeps: usize) -> (CsrMatrix, Equilibration) {
    let (m, n) = (a.nrows(), a.ncols());
    let mut scaled = a.clone();
    let mut eq = Equilibration::identity(m, n);
    for _ in 0..sweeps {
        let mut row = scaled.row_inf_norms();
        let mut start = 0;
        for cone in cones {
            let end = start + cone.dim();
            if let Cone::Soc(_) = cone {
                let mx = row[start..end].iter().copied().fold(0.0, f64::max);
                row[start..end].iter_mut().for_each(|v| *v = mx);
            }
            start = end;
        }
        let row_f: Vec<f64> = row.iter().map(|&v| factor(v)).collect();
        let col_f: Vec<f64> = scaled.col_inf_norms().iter().map(|&v| factor(v)).collect();
        let mut changed = false;
        for (total, f) in eq.row.iter_mut().zip(&row_f) {
            let next = (*total * f).clamp(MIN_SCALE, MAX_SCALE);
            changed |= (next / *total - 1.0).abs() > 1e-3;
            *total = next;
        }
        for (total, f) in eq.col.iter_mut().zip(&col_f) {
            let next = (*total * f).clamp(MIN_SCALE, MAX_SCALE);
            changed |= (next / *total - 1.0).abs() > 1e-3;
            *total = next;
        }
        scaled = a.clone();
        scaled.scale(&eq.row, &eq.col);
        if !changed {
            break;
        }
    }
    (scaled, eq)
}

fn factor(norm: f64) -> f64 {
    if norm > 0.0 {
        1.0 / norm.sqrt()
    } else {
        1.0
    }
}
