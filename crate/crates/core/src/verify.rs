//! Grid certification of fitted models, violation metrics, reference fits
//! and exact RKHS distances.

use serde::{Deserialize, Serialize};

use crate::covering::{Covering, Norm};
use crate::error::{invalid, Error, Result};
use crate::estimator::{fit, Dataset, FitOptions, FittedModel, Mode, ObjectiveSpec};
use crate::kernels::{DifferentialOperator, KernelSection, KernelSpec};
use crate::shapes::{tensor_product, CompactBox, ConstraintSystem};

/// Sphere samples used when buffers of a reference net are computed numerically.
const REFERENCE_SPHERE_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    /// Smallest margin `D_i (W f - f0)_i (x) - (b0 - U b)_i` over the grid.
    pub worst_gap: f64,
    pub worst_point: Vec<f64>,
    /// Fraction of grid points with a negative margin.
    pub proportion_violated: f64,
    /// Trapezoid approximation of the integral of `max(0, -margin)` over the box.
    pub integrated_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub constraints: Vec<ConstraintViolation>,
    /// Intervals per axis; the grid has `grid_resolution + 1` points per axis.
    pub grid_resolution: usize,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn worst_gap(&self) -> f64 {
        self.constraints.iter().map(|c| c.worst_gap).fold(f64::INFINITY, f64::min)
    }

    pub fn satisfied(&self, tol: f64) -> bool {
        self.constraints.iter().all(|c| c.worst_gap >= -tol)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(format!("report serialization: {e}")))
    }
}

/// Lattice `l + w k / n`, `k = 0..=n`, along every axis. Doubling `n` keeps all previous points.
fn lattice(domain: &CompactBox, intervals: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|j| {
            let (l, w) = (domain.lower()[j], domain.width(j));
            (0..=intervals).map(|k| l + w * k as f64 / intervals as f64).collect()
        })
        .collect();
    let weights: Vec<Vec<f64>> = (0..domain.dim())
        .map(|j| {
            let h = domain.width(j) / intervals as f64;
            (0..=intervals).map(|k| if k == 0 || k == intervals { 0.5 * h } else { h }).collect()
        })
        .collect();
    let points = tensor_product(&axes);
    let weights = tensor_product(&weights).into_iter().map(|w| w.iter().product()).collect();
    (points, weights)
}

fn check_compatible(model: &FittedModel, system: &ConstraintSystem) -> Result<()> {
    if system.n_functions != model.n_functions() {
        return Err(Error::DimensionMismatch { expected: model.n_functions(), got: system.n_functions });
    }
    if system.n_biases != model.bias.len() {
        return Err(Error::DimensionMismatch { expected: model.bias.len(), got: system.n_biases });
    }
    if system.max_order() > model.spec.smoothness {
        return Err(Error::UnsupportedOrder { requested: system.max_order(), supported: model.spec.smoothness });
    }
    Ok(())
}

/// Margin of constraint `i` of `system` for the functions of `model`.
pub fn constraint_margin(model: &FittedModel, system: &ConstraintSystem, i: usize, x: &[f64]) -> Result<f64> {
    let c = &system.constraints[i];
    let anchor = c.f0.to_section(c.dim())?;
    let mut v = 0.0;
    for (q, &w) in c.w_row.iter().enumerate() {
        if w != 0.0 {
            v += w * model.apply(q, &c.operator, x);
        }
    }
    v -= anchor.apply(&model.spec, &c.operator, x);
    let ub: f64 = c.u_row.iter().zip(&model.bias).map(|(u, b)| u * b).sum();
    Ok(v - (c.b0 - ub))
}

/// Margins of constraint `i` on the lattice with `intervals` cells per axis.
pub fn margin_grid(
    model: &FittedModel,
    system: &ConstraintSystem,
    i: usize,
    intervals: usize,
) -> Result<Vec<(Vec<f64>, f64)>> {
    check_compatible(model, system)?;
    if i >= system.len() {
        return Err(invalid(format!("constraint index {i} out of range")));
    }
    if intervals == 0 {
        return Err(invalid("the grid needs at least one interval per axis"));
    }
    let (points, _) = lattice(&system.constraints[i].domain, intervals);
    points.into_iter().map(|x| constraint_margin(model, system, i, &x).map(|m| (x, m))).collect()
}

/// CSV with the coordinates and the margin of constraint `i` at every grid point.
pub fn margins_csv(model: &FittedModel, system: &ConstraintSystem, i: usize, intervals: usize) -> Result<String> {
    let grid = margin_grid(model, system, i, intervals)?;
    let d = system.constraints[i].dim();
    let mut out: String = (0..d).map(|j| format!("x{j},")).collect();
    out.push_str("margin\n");
    for (x, m) in grid {
        for v in x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{m}\n"));
    }
    Ok(out)
}

/// Evaluates every constraint of `system` on a lattice with `intervals_per_axis`
/// cells (so `intervals_per_axis + 1` points) per axis of its box.
pub fn check_constraints(
    model: &FittedModel,
    system: &ConstraintSystem,
    intervals_per_axis: usize,
) -> Result<ViolationReport> {
    check_compatible(model, system)?;
    if intervals_per_axis == 0 {
        return Err(invalid("the grid needs at least one interval per axis"));
    }
    let mut constraints = Vec::with_capacity(system.len());
    for (i, c) in system.constraints.iter().enumerate() {
        let (points, weights) = lattice(&c.domain, intervals_per_axis);
        let mut worst_gap = f64::INFINITY;
        let mut worst_point = Vec::new();
        let mut violated = 0usize;
        let mut integrated = 0.0;
        for (x, w) in points.iter().zip(&weights) {
            let m = constraint_margin(model, system, i, x)?;
            if !m.is_finite() {
                return Err(Error::NonFinite("constraint margin"));
            }
            if m < worst_gap {
                worst_gap = m;
                worst_point = x.clone();
            }
            if m < 0.0 {
                violated += 1;
                integrated += w * -m;
            }
        }
        constraints.push(ConstraintViolation {
            worst_gap,
            worst_point,
            proportion_violated: violated as f64 / points.len() as f64,
            integrated_violation: integrated,
        });
    }
    Ok(ViolationReport { constraints, grid_resolution: intervals_per_axis })
}

/// Violation of monotonicity of `f_0` on `[a, b]` for a one-dimensional model:
/// `(1/(b-a)) int max(0, -f'(x)) dx` and `int max_{y in [a, x]} (f(y) - f(x)) dx`,
/// both by the trapezoid rule on `grid_n` points.
pub fn monotonicity_metrics(model: &FittedModel, a: f64, b: f64, grid_n: usize) -> Result<(f64, f64)> {
    if model.dim() != 1 {
        return Err(invalid("monotonicity metrics need a one-dimensional model"));
    }
    if grid_n < 10 {
        return Err(invalid(format!("at least 10 grid points are needed, got {grid_n}")));
    }
    if !(b > a) {
        return Err(invalid(format!("empty interval [{a}, {b}]")));
    }
    let id = DifferentialOperator::identity(1);
    let d1 = DifferentialOperator::partial(1, 0, 1)?;
    model.spec.check_operator(&d1)?;
    let h = (b - a) / (grid_n - 1) as f64;
    let mut negative_slope = Vec::with_capacity(grid_n);
    let mut drop = Vec::with_capacity(grid_n);
    let mut running_max = f64::NEG_INFINITY;
    for k in 0..grid_n {
        let x = [a + h * k as f64];
        let f = model.apply(0, &id, &x);
        running_max = running_max.max(f);
        drop.push(running_max - f);
        negative_slope.push((-model.apply(0, &d1, &x)).max(0.0));
    }
    let trapezoid = |v: &[f64]| h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]));
    Ok((trapezoid(&negative_slope) / (b - a), trapezoid(&drop)))
}

/// Discretized fit on a uniform net with `fine_m` cell midpoints per axis of
/// every constraint box, used as a proxy for the solution of the original problem.
pub fn brute_force_reference(
    data: &Dataset,
    objective: &ObjectiveSpec,
    system: &ConstraintSystem,
    spec: &KernelSpec,
    fine_m: usize,
    options: &FitOptions,
) -> Result<FittedModel> {
    let covering = Covering::uniform_count(system, spec, fine_m, Norm::L2, REFERENCE_SPHERE_SAMPLES)?.without_buffers();
    fit(data, objective, system, &covering, spec, Mode::Discretized, options)
}

/// `|f_q^a - f_q^b|_k`, computed from the Gram matrix of both generating families.
pub fn rkhs_distance(a: &FittedModel, b: &FittedModel, q: usize) -> Result<f64> {
    if a.spec != b.spec {
        return Err(invalid("models use different kernels"));
    }
    if q >= a.n_functions() || q >= b.n_functions() {
        return Err(invalid(format!("function index {q} out of range")));
    }
    let mut diff = a.section(q);
    diff.terms.extend(b.section(q).terms.into_iter().map(|mut t| {
        t.weight = -t.weight;
        t
    }));
    Ok(section_norm(&a.spec, &diff))
}

/// `|s|_k` via the eigen-decomposition of the Gram matrix of the distinct
/// terms of `s`, which keeps round-off proportional to the size of the result.
fn section_norm(spec: &KernelSpec, s: &KernelSection) -> f64 {
    let mut merged: Vec<(KernelSection, f64)> = Vec::new();
    for t in &s.terms {
        match merged.iter_mut().find(|(u, _)| u.terms[0].point == t.point && u.terms[0].operator == t.operator) {
            Some((_, w)) => *w += t.weight,
            None => merged.push((KernelSection::at(&t.point, t.operator.clone()), t.weight)),
        }
    }
    merged.retain(|(_, w)| *w != 0.0);
    let k = merged.len();
    if k == 0 {
        return 0.0;
    }
    let g = nalgebra::DMatrix::from_fn(k, k, |i, j| merged[i].0.inner(spec, &merged[j].0));
    let w = nalgebra::DVector::from_iterator(k, merged.iter().map(|(_, w)| *w));
    let eig = g.symmetric_eigen();
    let proj = eig.eigenvectors.transpose() * w;
    proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| l.max(0.0) * p * p).sum::<f64>().sqrt()
}
