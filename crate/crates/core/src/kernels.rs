//! Kernels, their mixed partial derivatives, and the Gram matrices of the
//! generating family used by the finite-dimensional program.
//!
//! Every function handled here is a finite combination of derivative kernel
//! sections `D_x k(p, ·)`, represented by [`KernelSection`]. Inner products
//! between sections follow from the derivative-reproducing property:
//! `<D_x k(p, ·), E_x k(q, ·)>_k = D_x E_y k(p, q)`.

#[cfg(test)]
use nalgebra::DVector;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::covering::Covering;
use crate::error::{invalid, Error, Result};

/// Highest per-argument derivative order with a hard-coded analytic form.
pub const MAX_ANALYTIC_ORDER: u32 = 2;

/// Default shift applied to the Gram matrix before taking its square root.
pub const DEFAULT_EPS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `k(x, y) = exp(-|x - y|^2 / (2 bandwidth^2))`
    Gaussian { bandwidth: f64 },
    /// `k(x, y) = (<x, y> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Maximal derivative order (per argument) that may be requested.
    pub smoothness: u32,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { bandwidth }, MAX_ANALYTIC_ORDER)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        Self::new(KernelFamily::Polynomial { degree, offset }, degree.min(MAX_ANALYTIC_ORDER))
    }

    pub fn new(family: KernelFamily, smoothness: u32) -> Result<Self> {
        let spec = Self { family, smoothness };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            KernelFamily::Gaussian { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(invalid(format!("Gaussian bandwidth must be positive, got {bandwidth}")));
                }
                if self.smoothness > MAX_ANALYTIC_ORDER {
                    return Err(Error::UnsupportedOrder { requested: self.smoothness, supported: MAX_ANALYTIC_ORDER });
                }
            }
            KernelFamily::Polynomial { degree, offset } => {
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(invalid(format!("polynomial offset must be nonnegative, got {offset}")));
                }
                let cap = degree.min(MAX_ANALYTIC_ORDER);
                if self.smoothness > cap {
                    return Err(Error::UnsupportedOrder { requested: self.smoothness, supported: cap });
                }
            }
        }
        Ok(())
    }

    pub fn is_shift_invariant(&self) -> bool {
        matches!(self.family, KernelFamily::Gaussian { .. })
    }

    pub(crate) fn check_operator(&self, op: &DifferentialOperator) -> Result<()> {
        let order = op.order();
        if order > self.smoothness {
            return Err(Error::UnsupportedOrder { requested: order, supported: self.smoothness });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorTerm {
    pub gamma: f64,
    pub multi_index: Vec<u32>,
}

/// A linear differential operator `sum_j gamma_j d^{r_j}` on functions of `d` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<OperatorTerm>", into = "Vec<OperatorTerm>")]
pub struct DifferentialOperator {
    terms: Vec<OperatorTerm>,
}

impl TryFrom<Vec<OperatorTerm>> for DifferentialOperator {
    type Error = Error;

    fn try_from(terms: Vec<OperatorTerm>) -> Result<Self> {
        Self::new(terms)
    }
}

impl From<DifferentialOperator> for Vec<OperatorTerm> {
    fn from(op: DifferentialOperator) -> Self {
        op.terms
    }
}

impl DifferentialOperator {
    pub fn new(terms: Vec<OperatorTerm>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(invalid("a differential operator needs at least one term"));
        };
        let dim = first.multi_index.len();
        if dim == 0 {
            return Err(invalid("multi-indices must have positive length"));
        }
        for t in &terms {
            if t.multi_index.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: t.multi_index.len() });
            }
            if !t.gamma.is_finite() {
                return Err(Error::NonFinite("operator coefficient"));
            }
        }
        Ok(Self { terms })
    }

    pub fn identity(dim: usize) -> Self {
        Self::monomial(1.0, vec![0; dim])
    }

    /// `d^order / dx_axis^order`.
    pub fn partial(dim: usize, axis: usize, order: u32) -> Result<Self> {
        if axis >= dim {
            return Err(invalid(format!("axis {axis} out of range for dimension {dim}")));
        }
        let mut r = vec![0; dim];
        r[axis] = order;
        Ok(Self::monomial(1.0, r))
    }

    /// `d^2 / dx_i dx_j` (or the pure second derivative when `i == j`).
    pub fn mixed(dim: usize, i: usize, j: usize) -> Result<Self> {
        if i >= dim || j >= dim {
            return Err(invalid(format!("axes ({i}, {j}) out of range for dimension {dim}")));
        }
        let mut r = vec![0; dim];
        r[i] += 1;
        r[j] += 1;
        Ok(Self::monomial(1.0, r))
    }

    fn monomial(gamma: f64, multi_index: Vec<u32>) -> Self {
        Self { terms: vec![OperatorTerm { gamma, multi_index }] }
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms[0].multi_index.len()
    }

    pub fn order(&self) -> u32 {
        self.terms.iter().map(|t| t.multi_index.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| OperatorTerm { gamma: t.gamma * factor, multi_index: t.multi_index.clone() })
                .collect(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Sum of two operators acting on the same dimension.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(Self { terms })
    }

    /// True when every term is a multiple of the identity.
    pub fn is_identity_like(&self) -> bool {
        self.terms.iter().all(|t| t.multi_index.iter().all(|&r| r == 0))
    }

    /// Net coefficient of the identity part; meaningful when [`Self::is_identity_like`].
    pub fn identity_weight(&self) -> f64 {
        self.terms.iter().filter(|t| t.multi_index.iter().all(|&r| r == 0)).map(|t| t.gamma).sum()
    }

    /// Rewrites the operator for the coordinate change `x = offset + scale * x'`,
    /// so that applying the result in `x'` coordinates gives the original
    /// derivative in `x` coordinates.
    pub fn rescaled_axes(&self, scale: &[f64]) -> Result<Self> {
        if scale.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: scale.len() });
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let factor: f64 = t.multi_index.iter().zip(scale).map(|(&r, &s)| s.powi(-(r as i32))).product();
                OperatorTerm { gamma: t.gamma * factor, multi_index: t.multi_index.clone() }
            })
            .collect();
        Ok(Self { terms })
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(invalid("points must have positive dimension"));
    }
    Ok(())
}

/// `k(x, y)`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dims(x, y)?;
    Ok(kernel_value(spec, x, y))
}

/// `(Dx applied to the first argument)(Dy applied to the second argument) k` at `(x, y)`.
pub fn eval_derivative_kernel(
    spec: &KernelSpec,
    dx: &DifferentialOperator,
    dy: &DifferentialOperator,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    check_dims(x, y)?;
    for op in [dx, dy] {
        if op.dim() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: op.dim() });
        }
        spec.check_operator(op)?;
    }
    let v = operator_pair(spec, dx, dy, x, y);
    if !v.is_finite() {
        return Err(Error::NonFinite("kernel derivative"));
    }
    Ok(v)
}

pub(crate) fn kernel_value(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match spec.family {
        KernelFamily::Gaussian { bandwidth } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * bandwidth * bandwidth)).exp()
        }
        KernelFamily::Polynomial { degree, offset } => {
            let z: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + offset;
            z.powi(degree as i32)
        }
    }
}

/// Unchecked bilinear extension of [`partial_derivative`] to operators.
pub(crate) fn operator_pair(
    spec: &KernelSpec,
    dx: &DifferentialOperator,
    dy: &DifferentialOperator,
    x: &[f64],
    y: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for a in &dx.terms {
        for b in &dy.terms {
            acc += a.gamma * b.gamma * partial_derivative(spec, &a.multi_index, &b.multi_index, x, y);
        }
    }
    acc
}

/// `d^r_x d^t_y k(x, y)`.
pub(crate) fn partial_derivative(spec: &KernelSpec, r: &[u32], t: &[u32], x: &[f64], y: &[f64]) -> f64 {
    match spec.family {
        KernelFamily::Gaussian { bandwidth } => {
            // The Gaussian factorizes over coordinates; each factor is a
            // derivative of g(u) = exp(-u^2 / 2 s^2) at u = x_j - y_j, and
            // g^(n)(u) = (-1/s)^n He_n(u/s) g(u).
            let mut value = kernel_value(spec, x, y);
            for j in 0..x.len() {
                let n = r[j] + t[j];
                if n == 0 {
                    continue;
                }
                let u = (x[j] - y[j]) / bandwidth;
                let sign = if r[j] % 2 == 0 { 1.0 } else { -1.0 };
                value *= sign * hermite_he(n, u) / bandwidth.powi(n as i32);
            }
            value
        }
        KernelFamily::Polynomial { degree, offset } => polynomial_partial(degree, offset, r, t, x, y),
    }
}

/// Probabilists' Hermite polynomial `He_n`.
fn hermite_he(n: u32, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = u * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Derivatives of `phi(<x, y> + c)` with `phi(z) = z^p`.
///
/// By Faa di Bruno, only blocks of size one (`d z / d x_a = y_a`) and mixed
/// pairs `(x_a, y_a)` (`d^2 z / d x_a d y_a = 1`) contribute, so the sum runs
/// over partial matchings between the x-slots and y-slots on equal axes.
fn polynomial_partial(degree: u32, offset: f64, r: &[u32], t: &[u32], x: &[f64], y: &[f64]) -> f64 {
    let xs: Vec<usize> = slots(r);
    let ys: Vec<usize> = slots(t);
    let z: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + offset;
    let total = xs.len() + ys.len();
    let mut used = vec![false; ys.len()];
    let mut acc = 0.0;
    poly_matchings(&xs, &ys, 0, &mut used, 0, 1.0, degree, z, total, x, y, &mut acc);
    acc
}

fn slots(r: &[u32]) -> Vec<usize> {
    r.iter().enumerate().flat_map(|(axis, &k)| std::iter::repeat_n(axis, k as usize)).collect()
}

fn falling_power(degree: u32, order: usize, z: f64) -> f64 {
    if order as u32 > degree {
        return 0.0;
    }
    let mut c = 1.0;
    for k in 0..order as u32 {
        c *= (degree - k) as f64;
    }
    c * z.powi((degree - order as u32) as i32)
}

#[allow(clippy::too_many_arguments)]
fn poly_matchings(
    xs: &[usize],
    ys: &[usize],
    i: usize,
    used: &mut [bool],
    pairs: usize,
    weight: f64,
    degree: u32,
    z: f64,
    total: usize,
    x: &[f64],
    y: &[f64],
    acc: &mut f64,
) {
    if i == xs.len() {
        // Unmatched y-slots contribute d z / d y_b = x_b.
        let mut w = weight;
        for (k, &b) in ys.iter().enumerate() {
            if !used[k] {
                w *= x[b];
            }
        }
        *acc += w * falling_power(degree, total - pairs, z);
        return;
    }
    let a = xs[i];
    // x-slot left unmatched: d z / d x_a = y_a.
    poly_matchings(xs, ys, i + 1, used, pairs, weight * y[a], degree, z, total, x, y, acc);
    for k in 0..ys.len() {
        if !used[k] && ys[k] == a {
            used[k] = true;
            poly_matchings(xs, ys, i + 1, used, pairs + 1, weight, degree, z, total, x, y, acc);
            used[k] = false;
        }
    }
}

/// An anchor (shift) function: the zero function or a finite kernel expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnchorFunction {
    #[default]
    Zero,
    /// `sum_j weights[j] k(centers[j], ·)`
    Expansion { centers: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl AnchorFunction {
    pub fn is_zero(&self) -> bool {
        match self {
            AnchorFunction::Zero => true,
            AnchorFunction::Expansion { weights, .. } => weights.iter().all(|&w| w == 0.0),
        }
    }

    pub fn to_section(&self, dim: usize) -> Result<KernelSection> {
        match self {
            AnchorFunction::Zero => Ok(KernelSection { terms: Vec::new() }),
            AnchorFunction::Expansion { centers, weights } => {
                if centers.len() != weights.len() {
                    return Err(Error::DimensionMismatch { expected: centers.len(), got: weights.len() });
                }
                let id = DifferentialOperator::identity(dim);
                let mut terms = Vec::with_capacity(centers.len());
                for (c, &w) in centers.iter().zip(weights) {
                    if c.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
                    }
                    terms.push(SectionTerm { weight: w, point: c.clone(), operator: id.clone() });
                }
                Ok(KernelSection { terms })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTerm {
    pub weight: f64,
    pub point: Vec<f64>,
    pub operator: DifferentialOperator,
}

/// `sum_t weight_t (D_t)_x k(point_t, ·)`, an element of the RKHS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct KernelSection {
    pub terms: Vec<SectionTerm>,
}

impl KernelSection {
    pub fn at(point: &[f64], operator: DifferentialOperator) -> Self {
        Self { terms: vec![SectionTerm { weight: 1.0, point: point.to_vec(), operator }] }
    }

    /// Location used for rows of the derivative Gram matrices; `None` for anchors.
    pub fn location(&self) -> Option<&[f64]> {
        match self.terms.as_slice() {
            [single] => Some(&single.point),
            _ => None,
        }
    }

    /// `<self, other>_k`.
    pub fn inner(&self, spec: &KernelSpec, other: &KernelSection) -> f64 {
        let mut acc = 0.0;
        for a in &self.terms {
            for b in &other.terms {
                acc += a.weight * b.weight * operator_pair(spec, &a.operator, &b.operator, &a.point, &b.point);
            }
        }
        acc
    }

    /// `(D self)(x) = <self, D_x k(x, ·)>_k`.
    pub fn apply(&self, spec: &KernelSpec, op: &DifferentialOperator, x: &[f64]) -> f64 {
        self.terms.iter().map(|a| a.weight * operator_pair(spec, &a.operator, op, &a.point, x)).sum()
    }
}

/// Index map of the generating family: anchors, then samples, then net
/// centers grouped by constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramLayout {
    pub anchors: usize,
    pub samples: usize,
    pub centers: Vec<usize>,
}

impl GramLayout {
    pub fn len(&self) -> usize {
        self.anchors + self.samples + self.centers.iter().sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn anchor(&self, i: usize) -> usize {
        i
    }

    pub fn sample(&self, n: usize) -> usize {
        self.anchors + n
    }

    /// Index of the `m`-th center of constraint `i`.
    pub fn center(&self, i: usize, m: usize) -> usize {
        self.anchors + self.samples + self.centers[..i].iter().sum::<usize>() + m
    }
}

#[derive(Debug, Clone)]
pub struct GramBundle {
    pub layout: GramLayout,
    pub generators: Vec<KernelSection>,
    /// Inner products of the generators.
    pub g: DMatrix<f64>,
    /// `(G + eps_tol I)^{1/2}`, used by the tightening cones.
    pub g_sqrt: DMatrix<f64>,
    /// `G^{1/2}` without shift, used wherever an exact RKHS norm is needed.
    pub g_root: DMatrix<f64>,
    /// One matrix per constraint: entry `(r, c)` is `D_i` applied to generator
    /// `c` at the location of generator `r` (anchor rows are zero).
    pub g_d: Vec<DMatrix<f64>>,
    pub eps_tol: f64,
}

pub fn build_gram_bundle(
    spec: &KernelSpec,
    anchors: &[AnchorFunction],
    samples: &[Vec<f64>],
    covering: &Covering,
    operators: &[DifferentialOperator],
    eps_tol: f64,
) -> Result<GramBundle> {
    if !(eps_tol >= 0.0) {
        return Err(invalid(format!("eps_tol must be nonnegative, got {eps_tol}")));
    }
    if anchors.len() != operators.len() || covering.nets.len() != operators.len() {
        return Err(Error::CoveringMismatch(format!(
            "{} anchors, {} nets and {} operators",
            anchors.len(),
            covering.nets.len(),
            operators.len()
        )));
    }
    let dim = samples
        .first()
        .map(Vec::len)
        .or_else(|| covering.nets.iter().flat_map(|n| n.centers.first()).map(Vec::len).next())
        .or_else(|| operators.first().map(DifferentialOperator::dim));
    let Some(dim) = dim else {
        return Ok(empty_bundle(eps_tol));
    };
    for op in operators {
        if op.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: op.dim() });
        }
        spec.check_operator(op)?;
    }
    let mut generators = Vec::new();
    for a in anchors {
        generators.push(a.to_section(dim)?);
    }
    let id = DifferentialOperator::identity(dim);
    for x in samples {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        generators.push(KernelSection::at(x, id.clone()));
    }
    for (net, op) in covering.nets.iter().zip(operators) {
        for c in &net.centers {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            generators.push(KernelSection::at(c, op.clone()));
        }
    }
    let layout = GramLayout {
        anchors: anchors.len(),
        samples: samples.len(),
        centers: covering.nets.iter().map(|n| n.centers.len()).collect(),
    };

    let g = gram_matrix(spec, &generators)?;
    let (g_root, g_sqrt) = psd_roots(&g, eps_tol)?;

    let size = generators.len();
    let mut g_d = Vec::with_capacity(operators.len());
    for op in operators {
        let mut m = DMatrix::zeros(size, size);
        for (r, gen_r) in generators.iter().enumerate() {
            let Some(loc) = (r >= layout.anchors).then(|| gen_r.location()).flatten() else {
                continue;
            };
            for (c, gen_c) in generators.iter().enumerate() {
                m[(r, c)] = gen_c.apply(spec, op, loc);
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("derivative Gram matrix"));
        }
        g_d.push(m);
    }

    Ok(GramBundle { layout, generators, g, g_sqrt, g_root, g_d, eps_tol })
}

fn empty_bundle(eps_tol: f64) -> GramBundle {
    GramBundle {
        layout: GramLayout { anchors: 0, samples: 0, centers: Vec::new() },
        generators: Vec::new(),
        g: DMatrix::zeros(0, 0),
        g_sqrt: DMatrix::zeros(0, 0),
        g_root: DMatrix::zeros(0, 0),
        g_d: Vec::new(),
        eps_tol,
    }
}

/// Symmetric Gram matrix of a family of sections.
pub fn gram_matrix(spec: &KernelSpec, sections: &[KernelSection]) -> Result<DMatrix<f64>> {
    let n = sections.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = sections[i].inner(spec, &sections[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix"));
    }
    Ok(g)
}

/// Square roots `G^{1/2}` and `(G + eps I)^{1/2}` from one symmetric
/// eigendecomposition, with round-off negative eigenvalues clamped to zero.
pub fn psd_roots(g: &DMatrix<f64>, eps: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = g.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(g.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("symmetric eigendecomposition did not converge".into()))?;
    let v = &eig.eigenvectors;
    let root = |shift: f64| {
        let mut scaled = v.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= (eig.eigenvalues[k].max(0.0) + shift).sqrt();
        }
        let mut r = &scaled * v.transpose();
        symmetrize(&mut r);
        r
    };
    Ok((root(0.0), root(eps)))
}

pub fn psd_sqrt(g: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    psd_roots(g, eps).map(|(_, shifted)| shifted)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covering::{Covering, Net, Norm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d1() -> DifferentialOperator {
        DifferentialOperator::partial(1, 0, 1).unwrap()
    }

    fn id1() -> DifferentialOperator {
        DifferentialOperator::identity(1)
    }

    fn net_of(centers: Vec<Vec<f64>>) -> Covering {
        let k = centers.len();
        Covering { nets: vec![Net { centers, radii: vec![0.1; k], etas: vec![0.0; k] }], norm: Norm::L2 }
    }

    #[test]
    fn kernel_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(eval_kernel(&g, &[0.3, -1.2], &[0.3, -1.2]).unwrap(), 1.0);
        let g = KernelSpec::gaussian(0.5).unwrap();
        assert!((eval_kernel(&g, &[0.0], &[1.0]).unwrap() - (-2.0_f64).exp()).abs() < 1e-15);
        let p = KernelSpec::polynomial(2, 1.0).unwrap();
        assert_eq!(eval_kernel(&p, &[1.0], &[2.0]).unwrap(), 9.0);
        assert!(matches!(eval_kernel(&p, &[1.0], &[2.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn derivative_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(eval_derivative_kernel(&g, &d1(), &id1(), &[0.4], &[0.4]).unwrap(), 0.0);
        assert!((eval_derivative_kernel(&g, &d1(), &d1(), &[0.4], &[0.4]).unwrap() - 1.0).abs() < 1e-15);
        let v = eval_derivative_kernel(&g, &d1(), &d1(), &[0.0], &[0.5]).unwrap();
        let closed = (1.0 - 0.25) * (-0.125_f64).exp();
        assert!((v - closed).abs() < 1e-14);
        assert!((v - 0.6616).abs() < 1e-3);
        let v0 = eval_derivative_kernel(&g, &id1(), &id1(), &[0.1], &[0.7]).unwrap();
        assert_eq!(v0, eval_kernel(&g, &[0.1], &[0.7]).unwrap());
    }

    #[test]
    fn order_limits_are_enforced() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let d3 = DifferentialOperator::partial(1, 0, 3).unwrap();
        assert!(matches!(
            eval_derivative_kernel(&g, &d3, &id1(), &[0.0], &[0.0]),
            Err(Error::UnsupportedOrder { requested: 3, .. })
        ));
        let p = KernelSpec::polynomial(1, 1.0).unwrap();
        let d2 = DifferentialOperator::partial(1, 0, 2).unwrap();
        assert!(eval_derivative_kernel(&p, &d2, &id1(), &[0.0], &[0.0]).is_err());
        assert!(KernelSpec::new(KernelFamily::Gaussian { bandwidth: 1.0 }, 3).is_err());
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(DifferentialOperator::new(Vec::new()).is_err());
    }

    /// Second derivatives by central differences with one Richardson step.
    fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
        let d = |h: f64| (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        (4.0 * d(0.5 * h) - d(h)) / 3.0
    }

    fn mixed_fd(f: impl Fn(f64, f64) -> f64, h: f64) -> f64 {
        let d = |h: f64| (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        (4.0 * d(0.5 * h) - d(h)) / 3.0
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dd = DifferentialOperator::partial(1, 0, 2).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let g = KernelSpec::gaussian(sigma).unwrap();
            let k = |a: f64, b: f64| eval_kernel(&g, &[a], &[b]).unwrap();
            let mut worst = 0.0_f64;
            for _ in 0..100 {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y: f64 = rng.random_range(-1.0..1.0);
                let h = 1e-3 * sigma;
                let fd = mixed_fd(|a, b| k(x + a, y + b), h);
                let an = eval_derivative_kernel(&g, &d1(), &d1(), &[x], &[y]).unwrap();
                worst = worst.max((fd - an).abs() / an.abs());
                let fd = richardson(|a| k(x + a, y), h);
                let an = eval_derivative_kernel(&g, &dd, &id1(), &[x], &[y]).unwrap();
                worst = worst.max((fd - an).abs() / an.abs());
            }
            assert!(worst <= 1e-5, "sigma {sigma}: {worst}");
        }
    }

    #[test]
    fn multivariate_gaussian_mixed_partials() {
        // d^2/dx1 dy2 of exp(-|x-y|^2/2s^2) = -(x1-y1)(x2-y2)/s^4 k.
        let s = 0.8;
        let g = KernelSpec::gaussian(s).unwrap();
        let dx = DifferentialOperator::partial(2, 0, 1).unwrap();
        let dy = DifferentialOperator::partial(2, 1, 1).unwrap();
        let (x, y) = ([0.3, -0.2], [-0.4, 0.5]);
        let k = eval_kernel(&g, &x, &y).unwrap();
        let expected = -(x[0] - y[0]) * (x[1] - y[1]) / s.powi(4) * k;
        assert!((eval_derivative_kernel(&g, &dx, &dy, &x, &y).unwrap() - expected).abs() < 1e-14);

        // Mixed operator d^2/dx1 dx2 against nested finite differences.
        let m = DifferentialOperator::mixed(2, 0, 1).unwrap();
        let fd = mixed_fd(|a, b| eval_kernel(&g, &[x[0] + a, x[1] + b], &y).unwrap(), 1e-3);
        let an = eval_derivative_kernel(&g, &m, &DifferentialOperator::identity(2), &x, &y).unwrap();
        assert!((fd - an).abs() <= 1e-7 * an.abs().max(1.0), "{fd} vs {an}");
    }

    #[test]
    fn polynomial_derivatives_match_hand_expansions() {
        let (p, c) = (4u32, 0.7);
        let spec = KernelSpec::new(KernelFamily::Polynomial { degree: p, offset: c }, 2).unwrap();
        let pf = p as f64;
        let (x, y) = ([0.6, -0.3], [0.2, 0.9]);
        let z = x[0] * y[0] + x[1] * y[1] + c;
        let op = |axis, order| DifferentialOperator::partial(2, axis, order).unwrap();
        let id = DifferentialOperator::identity(2);
        let cases = [
            (op(0, 1), id.clone(), pf * z.powi(3) * y[0]),
            (op(0, 1), op(0, 1), pf * z.powi(3) + pf * (pf - 1.0) * z.powi(2) * x[0] * y[0]),
            (op(0, 1), op(1, 1), pf * (pf - 1.0) * z.powi(2) * y[0] * x[1]),
            (op(0, 2), id.clone(), pf * (pf - 1.0) * z.powi(2) * y[0] * y[0]),
            (
                op(0, 2),
                op(0, 2),
                pf * (pf - 1.0)
                    * ((pf - 2.0) * (pf - 3.0) * x[0] * x[0] * y[0] * y[0]
                        + 4.0 * (pf - 2.0) * z * x[0] * y[0]
                        + 2.0 * z * z),
            ),
        ];
        for (dx, dy, expected) in cases {
            let v = eval_derivative_kernel(&spec, &dx, &dy, &x, &y).unwrap();
            assert!((v - expected).abs() < 1e-12 * expected.abs().max(1.0), "{v} vs {expected}");
            // Symmetry of the bilinear form.
            let w = eval_derivative_kernel(&spec, &dy, &dx, &y, &x).unwrap();
            assert!((v - w).abs() < 1e-12 * v.abs().max(1.0));
        }
        // Degree 1 has vanishing second derivatives.
        let lin = KernelSpec::polynomial(1, 2.0).unwrap();
        let v = eval_derivative_kernel(&lin, &DifferentialOperator::partial(1, 0, 1).unwrap(), &d1(), &[3.0], &[4.0]);
        assert_eq!(v.unwrap(), 1.0);
    }

    #[test]
    fn gram_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let empty = Covering { nets: Vec::new(), norm: Norm::L2 };
        let b = build_gram_bundle(&g, &[], &[vec![0.0], vec![1.0]], &empty, &[], 0.0).unwrap();
        let e = (-0.5_f64).exp();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
        assert!((&b.g - &expected).norm() < 1e-15);
        let r = &b.g_sqrt * &b.g_sqrt;
        assert!((r - &expected).norm() < 1e-12);

        let (root, shifted) = psd_roots(&DMatrix::identity(3, 3), 0.0).unwrap();
        assert!((root - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        assert!((shifted - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        let s = psd_sqrt(&DMatrix::from_element(1, 1, 1.0), 1e-4).unwrap();
        assert!((s[(0, 0)] - 1.0001_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gram_bundle_layout_and_derivative_rows() {
        let g = KernelSpec::gaussian(0.7).unwrap();
        let op = d1();
        let cov = net_of(vec![vec![0.25], vec![0.75]]);
        let anchor = AnchorFunction::Expansion { centers: vec![vec![0.5]], weights: vec![2.0] };
        let samples = [vec![0.1], vec![0.9], vec![0.4]];
        let b = build_gram_bundle(&g, &[anchor], &samples, &cov, &[op.clone()], 1e-4).unwrap();
        assert_eq!(b.layout.len(), 6);
        assert_eq!(b.layout.center(0, 1), 5);
        // Anchor generator is 2 k(0.5, .).
        assert!((b.g[(0, 0)] - 4.0).abs() < 1e-14);
        assert!((b.g[(0, 1)] - 2.0 * eval_kernel(&g, &[0.5], &[0.1]).unwrap()).abs() < 1e-14);
        // Sample block is plain kernel evaluations.
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(b.g[(1 + i, 1 + j)], eval_kernel(&g, &samples[i], &samples[j]).unwrap());
            }
        }
        // Center generator is d/dx k(0.25, .), so its inner product with k(x, .) is the derivative at 0.25.
        let v = eval_derivative_kernel(&g, &op, &id1(), &[0.25], &[0.9]).unwrap();
        assert!((b.g[(4, 2)] - v).abs() < 1e-14);
        // Derivative rows: anchors zero, sample row n holds D applied to generators at x_n.
        let gd = &b.g_d[0];
        assert!(gd.row(0).iter().all(|&v| v == 0.0));
        let v = eval_derivative_kernel(&g, &id1(), &op, &[0.4], &[0.1]).unwrap();
        assert!((gd[(1, 3)] - v).abs() < 1e-14);
        let v = eval_derivative_kernel(&g, &op, &op, &[0.75], &[0.25]).unwrap();
        assert!((gd[(4, 5)] - v).abs() < 1e-14);
        // D(f)(x) for f = sum a_c gen_c equals (G_D a)(x).
        let a = DVector::from_vec(vec![0.3, -1.0, 0.5, 2.0, 0.1, -0.7]);
        let direct: f64 = (0..6).map(|c| a[c] * b.generators[c].apply(&g, &op, &[0.9])).sum();
        assert!(((gd * &a)[2] - direct).abs() < 1e-12);
    }

    fn spec_strategy() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.2f64..3.0).prop_map(|s| KernelSpec::gaussian(s).unwrap()),
            (1u32..5, 0.0f64..2.0).prop_map(|(p, c)| KernelSpec::polynomial(p, c).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(spec in spec_strategy(), x in prop::collection::vec(-2.0f64..2.0, 3), y in prop::collection::vec(-2.0f64..2.0, 3)) {
            prop_assert_eq!(eval_kernel(&spec, &x, &y).unwrap(), eval_kernel(&spec, &y, &x).unwrap());
        }

        #[test]
        fn gram_is_psd_and_root_reconstructs(
            sigma in 0.2f64..2.0,
            pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..50),
            eps in prop::sample::select(vec![0.0, 1e-4]),
        ) {
            let g = KernelSpec::gaussian(sigma).unwrap();
            let ops = [DifferentialOperator::partial(2, 0, 1).unwrap()];
            let cov = net_of(pts[..pts.len().min(5)].to_vec());
            let b = build_gram_bundle(&g, &[AnchorFunction::Zero], &pts, &cov, &ops, eps).unwrap();
            let eig = SymmetricEigen::new(b.g.clone());
            prop_assert!(eig.eigenvalues.min() >= -1e-10);
            let n = b.g.nrows();
            let target = &b.g + DMatrix::<f64>::identity(n, n) * eps;
            let err = (&b.g_sqrt * &b.g_sqrt - &target).norm() / target.norm().max(1e-300);
            prop_assert!(err <= 1e-8, "{}", err);
            let err = (&b.g_root * &b.g_root - &b.g).norm() / b.g.norm().max(1e-300);
            prop_assert!(err <= 1e-8, "{}", err);
        }
    }
}
