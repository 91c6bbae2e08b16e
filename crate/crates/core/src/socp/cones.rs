//! Cone projections, Jordan-algebra helpers and Nesterov-Todd scalings for
//! the zero cone, the nonnegative orthant and second-order cones.

use serde::{Deserialize, Serialize};

use super::sparse::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum Cone {
    /// `{0}^dim`; the dual is the whole space.
    Zero(usize),
    /// `R_+^dim`.
    NonNeg(usize),
    /// `{(t, x) : |x|_2 <= t}` of total dimension `dim`.
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
        }
    }
}

/// Euclidean projection onto `{(t, x) : |x| <= t}`.
pub fn project_soc(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    project_soc_in_place(&mut out);
    out
}

pub(crate) fn project_soc_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let t = v[0];
    let nx = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    if nx <= t {
        return;
    }
    if nx <= -t {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let a = 0.5 * (t + nx);
    v[0] = a;
    let f = a / nx;
    v[1..].iter_mut().for_each(|x| *x *= f);
}

/// Projection onto a cone block.
pub(crate) fn project_cone(cone: Cone, v: &mut [f64]) {
    match cone {
        Cone::Zero(_) => v.iter_mut().for_each(|x| *x = 0.0),
        Cone::NonNeg(_) => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Cone::Soc(_) => project_soc_in_place(v),
    }
}

/// Projection onto the dual cone of a block.
/// Distance-free interiority margin: `min_i v_i` for the orthant, `t - |x|` for an SOC.
pub(crate) fn cone_margin(cone: Cone, v: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        Cone::NonNeg(_) => v.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => v[0] - v[1..].iter().map(|x| x * x).sum::<f64>().sqrt(),
    }
}

/// `u o v` for a second-order cone block.
pub(crate) fn soc_product(u: &[f64], v: &[f64], out: &mut [f64]) {
    out[0] = dot(u, v);
    for k in 1..u.len() {
        out[k] = u[0] * v[k] + v[0] * u[k];
    }
}

/// `x` with `lambda o x = v` for a second-order cone block.
pub(crate) fn soc_division(lambda: &[f64], v: &[f64], out: &mut [f64]) {
    let l0 = lambda[0];
    let l1v1: f64 = dot(&lambda[1..], &v[1..]);
    let det = l0 * l0 - dot(&lambda[1..], &lambda[1..]);
    let x0 = (l0 * v[0] - l1v1) / det;
    out[0] = x0;
    for k in 1..lambda.len() {
        out[k] = (v[k] - x0 * lambda[k]) / l0;
    }
}

/// Largest `alpha >= 0` (capped at `cap`) with `x + alpha d` in the orthant.
pub(crate) fn nonneg_step(x: &[f64], d: &[f64], cap: f64) -> f64 {
    let mut alpha = cap;
    for (xi, di) in x.iter().zip(d) {
        if *di < 0.0 {
            alpha = alpha.min(-xi / di);
        }
    }
    alpha.max(0.0)
}

/// Largest `alpha >= 0` (capped at `cap`) with `x + alpha d` in the second-order
/// cone, for `x` in its interior. The boundary is the first positive root of
/// `q(alpha) = (x0 + alpha d0)^2 - |x1 + alpha d1|^2`.
pub(crate) fn soc_step(x: &[f64], d: &[f64], cap: f64) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = 2.0 * (x[0] * d[0] - dot(&x[1..], &d[1..]));
    let c = (x[0] * x[0] - dot(&x[1..], &x[1..])).max(0.0);
    let mut alpha = cap;
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return cap;
    }
    if a.abs() <= 1e-14 * scale {
        if b < 0.0 {
            alpha = alpha.min(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -0.5 * (b + b.signum() * sq);
            for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                if r > 0.0 {
                    alpha = alpha.min(r);
                }
            }
        }
    }
    // Guard against landing in the negative cone through round-off.
    if d[0] < 0.0 {
        alpha = alpha.min(-x[0] / d[0]);
    }
    alpha.max(0.0)
}

/// Nesterov-Todd scaling of one second-order cone block.
#[derive(Debug, Clone)]
pub(crate) struct SocScaling {
    pub eta: f64,
    /// Normalized scaling point `w` with `w0^2 - |w1|^2 = 1`.
    pub w: Vec<f64>,
}

impl SocScaling {
    pub fn identity(dim: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[0] = 1.0;
        Self { eta: 1.0, w }
    }

    /// Scaling with `W z = W^{-1} s` for `s`, `z` in the interior.
    pub fn new(s: &[f64], z: &[f64]) -> Option<Self> {
        let sjs = s[0] * s[0] - dot(&s[1..], &s[1..]);
        let zjz = z[0] * z[0] - dot(&z[1..], &z[1..]);
        if !(sjs > 0.0 && zjz > 0.0) {
            return None;
        }
        let (sn, zn) = (sjs.sqrt(), zjz.sqrt());
        let sbar: Vec<f64> = s.iter().map(|v| v / sn).collect();
        let zbar: Vec<f64> = z.iter().map(|v| v / zn).collect();
        let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
        let mut w: Vec<f64> = Vec::with_capacity(s.len());
        w.push((sbar[0] + zbar[0]) / (2.0 * gamma));
        for k in 1..s.len() {
            w.push((sbar[k] - zbar[k]) / (2.0 * gamma));
        }
        // Restore w0 from the normalization to keep W well defined.
        let w1 = dot(&w[1..], &w[1..]);
        w[0] = (1.0 + w1).sqrt();
        Some(Self { eta: (sjs / zjz).sqrt().sqrt(), w })
    }

    /// `W v` (or `W^{-1} v` when `inverse`).
    pub fn apply(&self, v: &[f64], inverse: bool, out: &mut [f64]) {
        let w0 = self.w[0];
        let w1 = &self.w[1..];
        let sign = if inverse { -1.0 } else { 1.0 };
        let factor = if inverse { 1.0 / self.eta } else { self.eta };
        let w1v1 = dot(w1, &v[1..]);
        out[0] = factor * (w0 * v[0] + sign * w1v1);
        let coef = sign * v[0] + w1v1 / (1.0 + w0);
        for k in 1..v.len() {
            out[k] = factor * (v[k] + coef * w1[k - 1]);
        }
    }

    /// `W^2 v = eta^2 (2 w w' - J) v`.
    pub fn apply_sq(&self, v: &[f64], out: &mut [f64]) {
        let e2 = self.eta * self.eta;
        let wv = dot(&self.w, v);
        out[0] = e2 * (2.0 * self.w[0] * wv - v[0]);
        for k in 1..v.len() {
            out[k] = e2 * (2.0 * self.w[k] * wv + v[k]);
        }
    }

    /// `W^{-2} v = eta^{-2} (2 u u' - J) v` with `u = J w`.
    pub fn apply_inv_sq(&self, v: &[f64], out: &mut [f64]) {
        let e2 = 1.0 / (self.eta * self.eta);
        let uv = self.w[0] * v[0] - dot(&self.w[1..], &v[1..]);
        out[0] = e2 * (2.0 * self.w[0] * uv - v[0]);
        for k in 1..v.len() {
            out[k] = e2 * (-2.0 * self.w[k] * uv + v[k]);
        }
    }
}
