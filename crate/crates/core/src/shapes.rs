//! Declarative shape-constraint systems.
//!
//! A constraint reads `(b0 - U b)_i <= D_i (W f - f0)_i (x)` for every `x` in
//! the box `K_i`, where `f = (f_1, ..., f_Q)` are the fitted functions and
//! `b` the bias vector. All inequalities are normalized to this `>=` form.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{DifferentialOperator, OperatorTerm};

pub use crate::kernels::AnchorFunction;

/// An axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct CompactBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for CompactBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        CompactBox::new(raw.lower, raw.upper)
    }
}

impl From<CompactBox> for RawBox {
    fn from(b: CompactBox) -> Self {
        RawBox { lower: b.lower, upper: b.upper }
    }
}

impl CompactBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(invalid("a box needs at least one dimension"));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::NonFinite("box bounds"));
            }
            if l > u {
                return Err(invalid(format!("box axis {j}: lower {l} exceeds upper {u}")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    /// The cube `[lower, upper]^dim`.
    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    /// Smallest box containing all the points.
    pub fn bounding(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyData)?;
        let mut lower = first.clone();
        let mut upper = first.clone();
        for p in points {
            if p.len() != lower.len() {
                return Err(Error::DimensionMismatch { expected: lower.len(), got: p.len() });
            }
            for j in 0..p.len() {
                lower[j] = lower[j].min(p[j]);
                upper[j] = upper[j].max(p[j]);
            }
        }
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).product()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Evenly spaced grid along one axis, endpoints included.
    pub fn axis_grid(&self, axis: usize, n: usize) -> Vec<f64> {
        let (l, u) = (self.lower[axis], self.upper[axis]);
        match n {
            0 => Vec::new(),
            1 => vec![0.5 * (l + u)],
            _ => (0..n).map(|k| l + (u - l) * k as f64 / (n - 1) as f64).collect(),
        }
    }

    /// Tensor grid with `n` points per axis (row-major, last axis fastest).
    pub fn grid(&self, n: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|j| self.axis_grid(j, n)).collect();
        tensor_product(&axes)
    }
}

/// All points whose `j`-th coordinate is taken from `axes[j]`, first axis slowest.
pub fn tensor_product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeConstraint {
    pub operator: DifferentialOperator,
    pub domain: CompactBox,
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub f0: AnchorFunction,
    pub u_row: Vec<f64>,
    pub w_row: Vec<f64>,
}

impl ShapeConstraint {
    /// `D f >= 0` on `domain` for a single function with a single bias.
    pub fn nonnegative(operator: DifferentialOperator, domain: CompactBox) -> Result<Self> {
        if operator.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: operator.dim() });
        }
        Ok(Self { operator, domain, b0: 0.0, f0: AnchorFunction::Zero, u_row: vec![0.0], w_row: vec![1.0] })
    }

    /// Re-targets a single-function constraint to function `q` out of `n_functions`,
    /// with `n_biases` (zero) bias coefficients.
    pub fn for_function(mut self, q: usize, n_functions: usize, n_biases: usize) -> Result<Self> {
        if q >= n_functions {
            return Err(invalid(format!("function index {q} out of range for {n_functions} functions")));
        }
        self.w_row = vec![0.0; n_functions];
        self.w_row[q] = 1.0;
        self.u_row = vec![0.0; n_biases];
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// True when `(W f - f0)_i` vanishes identically, i.e. the row only involves biases.
    pub fn is_bias_only(&self) -> bool {
        self.w_row.iter().all(|&w| w == 0.0) && self.f0.is_zero()
    }
}

/// `df/dx_axis >= 0` on `domain`.
pub fn monotone_increasing(dim_index: usize, domain: CompactBox) -> Result<ShapeConstraint> {
    let op = DifferentialOperator::partial(domain.dim(), dim_index, 1)?;
    ShapeConstraint::nonnegative(op, domain)
}

/// `df/dx_axis <= 0` on `domain`.
pub fn monotone_decreasing(dim_index: usize, domain: CompactBox) -> Result<ShapeConstraint> {
    let op = DifferentialOperator::partial(domain.dim(), dim_index, 1)?.negated();
    ShapeConstraint::nonnegative(op, domain)
}

/// `d^2 f/dx_axis^2 >= 0` on `domain`.
pub fn convex_along(dim_index: usize, domain: CompactBox) -> Result<ShapeConstraint> {
    let op = DifferentialOperator::partial(domain.dim(), dim_index, 2)?;
    ShapeConstraint::nonnegative(op, domain)
}

/// `d^2 f/dx_axis^2 <= 0` on `domain`.
pub fn concave_along(dim_index: usize, domain: CompactBox) -> Result<ShapeConstraint> {
    let op = DifferentialOperator::partial(domain.dim(), dim_index, 2)?.negated();
    ShapeConstraint::nonnegative(op, domain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasSet {
    Free,
    Zero,
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    pub constraints: Vec<ShapeConstraint>,
    pub n_functions: usize,
    pub n_biases: usize,
    pub bias_set: BiasSet,
}

impl ConstraintSystem {
    pub fn new(
        constraints: Vec<ShapeConstraint>,
        n_functions: usize,
        n_biases: usize,
        bias_set: BiasSet,
    ) -> Result<Self> {
        let system = Self { constraints, n_functions, n_biases, bias_set };
        system.validate()?;
        Ok(system)
    }

    /// No shape constraints: `n_functions` functions, one free bias each.
    pub fn unconstrained(n_functions: usize) -> Self {
        Self { constraints: Vec::new(), n_functions, n_biases: n_functions, bias_set: BiasSet::Free }
    }

    /// One function with one free bias under the given constraints.
    pub fn single_function(constraints: Vec<ShapeConstraint>) -> Result<Self> {
        Self::new(constraints, 1, 1, BiasSet::Free)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let system: Self = serde_json::from_str(text).map_err(|e| invalid(format!("constraint system JSON: {e}")))?;
        system.validate()?;
        Ok(system)
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Ambient dimension shared by all domains, if there is any constraint.
    pub fn dim(&self) -> Option<usize> {
        self.constraints.first().map(ShapeConstraint::dim)
    }

    pub fn max_order(&self) -> u32 {
        self.constraints.iter().map(|c| c.operator.order()).max().unwrap_or(0)
    }

    pub fn operators(&self) -> Vec<DifferentialOperator> {
        self.constraints.iter().map(|c| c.operator.clone()).collect()
    }

    pub fn anchors(&self) -> Vec<AnchorFunction> {
        self.constraints.iter().map(|c| c.f0.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_functions == 0 {
            return Err(invalid("a constraint system needs at least one function"));
        }
        let dim = self.dim();
        for (i, c) in self.constraints.iter().enumerate() {
            if c.u_row.len() != self.n_biases {
                return Err(invalid(format!(
                    "constraint {i}: U row has length {}, expected {}",
                    c.u_row.len(),
                    self.n_biases
                )));
            }
            if c.w_row.len() != self.n_functions {
                return Err(invalid(format!(
                    "constraint {i}: W row has length {}, expected {}",
                    c.w_row.len(),
                    self.n_functions
                )));
            }
            if Some(c.dim()) != dim || c.operator.dim() != c.dim() {
                return Err(invalid(format!("constraint {i}: dimension does not match the system")));
            }
            if c.is_bias_only() {
                return Err(invalid(format!(
                    "constraint {i} involves only biases; declare it through the bias set instead"
                )));
            }
            if !c.b0.is_finite() || c.u_row.iter().chain(&c.w_row).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("constraint coefficients"));
            }
            if let AnchorFunction::Expansion { centers, weights } = &c.f0 {
                if centers.len() != weights.len() || centers.iter().any(|z| z.len() != c.dim()) {
                    return Err(invalid(format!("constraint {i}: malformed anchor expansion")));
                }
            }
        }
        if let BiasSet::Box { lower, upper } = &self.bias_set {
            if lower.len() != self.n_biases || upper.len() != self.n_biases {
                return Err(invalid("bias box bounds must have one entry per bias"));
            }
            if lower.iter().zip(upper).any(|(l, u)| l > u) {
                return Err(invalid("bias box has lower > upper"));
            }
        }
        Ok(())
    }

    /// `U` as a dense row-major `I x P` array.
    pub fn u_matrix(&self) -> Vec<Vec<f64>> {
        self.constraints.iter().map(|c| c.u_row.clone()).collect()
    }

    /// `W` as a dense row-major `I x Q` array.
    pub fn w_matrix(&self) -> Vec<Vec<f64>> {
        self.constraints.iter().map(|c| c.w_row.clone()).collect()
    }
}

/// The `(Q-1) x Q` difference matrix with `-1` on the diagonal and `+1` above it.
pub fn difference_matrix(q: usize) -> Vec<Vec<f64>> {
    (0..q.saturating_sub(1))
        .map(|i| {
            let mut row = vec![0.0; q];
            row[i] = -1.0;
            row[i + 1] = 1.0;
            row
        })
        .collect()
}

/// Non-crossing quantile curves: `f_{q+1} + b_{q+1} >= f_q + b_q` on `domain`.
pub fn non_crossing_system(n_functions: usize, domain: CompactBox) -> Result<ConstraintSystem> {
    if n_functions < 2 {
        return Err(invalid(format!("non-crossing needs at least two functions, got {n_functions}")));
    }
    let id = DifferentialOperator::identity(domain.dim());
    let constraints = difference_matrix(n_functions)
        .into_iter()
        .map(|row| ShapeConstraint {
            operator: id.clone(),
            domain: domain.clone(),
            b0: 0.0,
            f0: AnchorFunction::Zero,
            u_row: row.clone(),
            w_row: row,
        })
        .collect();
    ConstraintSystem::new(constraints, n_functions, n_functions, BiasSet::Free)
}

/// Named shapes that reduce to finitely many affine derivative constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CatalogShape {
    /// `f^(n) >= 0` along `axis`.
    NMonotone {
        n: u32,
        #[serde(default)]
        axis: usize,
    },
    /// For `n = 1`: `f >= 0` and non-increasing; for `n >= 2`: `(-1)^j f^(j)`
    /// non-negative, non-increasing and convex for `j = 0..=n-2`, along `axis`.
    AlternatingMonotone {
        n: u32,
        #[serde(default)]
        axis: usize,
    },
    /// `d_1 f >= d_2 f >= ... >= d_d f >= 0`.
    WeakMajorizationMonotone,
    /// `d_j f >= 0` for every axis.
    ProductOrderMonotone,
    /// `d_i d_j f >= 0` for every pair `i < j`.
    Supermodular,
}

impl CatalogShape {
    /// Highest derivative order the emitted constraints need.
    pub fn required_order(&self) -> u32 {
        match *self {
            CatalogShape::NMonotone { n, .. } => n,
            CatalogShape::AlternatingMonotone { n, .. } => n,
            CatalogShape::WeakMajorizationMonotone | CatalogShape::ProductOrderMonotone => 1,
            CatalogShape::Supermodular => 2,
        }
    }
}

/// Single-function constraints (one free bias) implementing `shape` on `domain`.
pub fn catalog(shape: CatalogShape, domain: &CompactBox, smoothness: u32) -> Result<Vec<ShapeConstraint>> {
    let required = shape.required_order();
    if required > smoothness {
        return Err(Error::UnsupportedOrder { requested: required, supported: smoothness });
    }
    let d = domain.dim();
    let signed = |sign: f64, axis: usize, order: u32| -> Result<ShapeConstraint> {
        let op = DifferentialOperator::partial(d, axis, order)?.scaled(sign);
        ShapeConstraint::nonnegative(op, domain.clone())
    };
    let mut out = Vec::new();
    match shape {
        CatalogShape::NMonotone { n, axis } => out.push(signed(1.0, axis, n)?),
        CatalogShape::AlternatingMonotone { n, axis } => {
            if n == 0 {
                return Err(invalid("alternating monotonicity needs n >= 1"));
            }
            if n == 1 {
                out.push(signed(1.0, axis, 0)?);
                out.push(signed(-1.0, axis, 1)?);
            } else {
                for j in 0..=(n - 2) {
                    let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                    out.push(signed(s, axis, j)?);
                    out.push(signed(-s, axis, j + 1)?);
                    out.push(signed(s, axis, j + 2)?);
                }
            }
        }
        CatalogShape::WeakMajorizationMonotone => {
            for j in 0..d {
                let mut terms = vec![unit_term(d, j, 1.0)];
                if j + 1 < d {
                    terms.push(unit_term(d, j + 1, -1.0));
                }
                out.push(ShapeConstraint::nonnegative(DifferentialOperator::new(terms)?, domain.clone())?);
            }
        }
        CatalogShape::ProductOrderMonotone => {
            for j in 0..d {
                out.push(signed(1.0, j, 1)?);
            }
        }
        CatalogShape::Supermodular => {
            for i in 0..d {
                for j in (i + 1)..d {
                    out.push(ShapeConstraint::nonnegative(DifferentialOperator::mixed(d, i, j)?, domain.clone())?);
                }
            }
        }
    }
    Ok(out)
}

fn unit_term(d: usize, axis: usize, gamma: f64) -> OperatorTerm {
    let mut multi_index = vec![0; d];
    multi_index[axis] = 1;
    OperatorTerm { gamma, multi_index }
}
