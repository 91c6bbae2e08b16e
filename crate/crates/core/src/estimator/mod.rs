//! Program assembly, fitting, prediction and error bounds.
//!
//! Every function `f_q` is represented by coefficients over the generating
//! family of the Gram bundle (anchors, sample sections, derivative sections
//! at net centers), so `f_q(x_n) = (G c_q)_n` and `|f_q|_k^2 = c_q' G c_q`.

mod assemble;
mod bounds;

use serde::{Deserialize, Serialize};

use crate::covering::Covering;
use crate::error::{invalid, Error, Result};
use crate::kernels::{DifferentialOperator, KernelSection, KernelSpec, DEFAULT_EPS_TOL};
use crate::shapes::ConstraintSystem;
use crate::socp::{solve_with, Backend, SolveStatus, SolverOptions};

pub use assemble::{assemble, AssembledProgram, VariableLayout};
pub use bounds::{aposteriori_bound, apriori_bound, apriori_constant, strong_convexity};

/// Observations `(x_n, y_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let data = Self { x, y };
        data.validate()?;
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::EmptyData);
        }
        if self.x.len() != self.y.len() {
            return Err(Error::DimensionMismatch { expected: self.y.len(), got: self.x.len() });
        }
        let d = self.dim();
        if d == 0 {
            return Err(invalid("sample points must have positive dimension"));
        }
        if let Some(bad) = self.x.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }
        if self.y.iter().chain(self.x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `(1/N) sum_q sum_n (y_n - f_q(x_n) - b_q)^2`
    SquaredError,
    /// `(1/N) sum_q sum_n l_{tau_q}(y_n - f_q(x_n) - b_q)` with one level per function.
    Pinball { levels: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularization {
    /// `+ lambda_f sum_q |f_q|_k^2 + lambda_b |b|^2`
    Ridge { lambda_f: f64, lambda_b: f64 },
    /// `sqrt(sum_q |f_q|_k^2) <= radius_f` and `|b| <= radius_b`.
    NormBall { radius_f: f64, radius_b: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub loss: Loss,
    pub regularization: Regularization,
}

impl ObjectiveSpec {
    pub fn ridge(lambda_f: f64) -> Self {
        Self { loss: Loss::SquaredError, regularization: Regularization::Ridge { lambda_f, lambda_b: 0.0 } }
    }

    /// Joint quantile regression in norm-ball form with `radius_b = 10 max |y_n|`.
    pub fn quantiles(levels: Vec<f64>, radius_f: f64, y: &[f64]) -> Self {
        let radius_b = 10.0 * y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self {
            loss: Loss::Pinball { levels },
            regularization: Regularization::NormBall { radius_f, radius_b: radius_b.max(f64::MIN_POSITIVE) },
        }
    }

    pub fn validate(&self, n_functions: usize) -> Result<()> {
        if let Loss::Pinball { levels } = &self.loss {
            if levels.len() != n_functions {
                return Err(invalid(format!("{} pinball levels for {n_functions} functions", levels.len())));
            }
            if levels.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
                return Err(invalid("pinball levels must lie in (0, 1)"));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("pinball levels must be strictly increasing"));
            }
        }
        match self.regularization {
            Regularization::Ridge { lambda_f, lambda_b } => {
                if !(lambda_f > 0.0 && lambda_f.is_finite()) || !(lambda_b >= 0.0 && lambda_b.is_finite()) {
                    return Err(invalid(format!(
                        "ridge weights must satisfy lambda_f > 0, lambda_b >= 0; got {lambda_f}, {lambda_b}"
                    )));
                }
            }
            Regularization::NormBall { radius_f, radius_b } => {
                if !(radius_f > 0.0 && radius_f.is_finite()) || !(radius_b > 0.0 && radius_b.is_finite()) {
                    return Err(invalid(format!("norm-ball radii must be positive; got {radius_f}, {radius_b}")));
                }
            }
        }
        Ok(())
    }

    /// Loss of a residual `e = y - f - b` for function `q`.
    pub fn pointwise_loss(&self, q: usize, e: f64) -> f64 {
        match &self.loss {
            Loss::SquaredError => e * e,
            Loss::Pinball { levels } => {
                let t = levels[q];
                (t * e).max((t - 1.0) * e)
            }
        }
    }
}

/// Whether the constraints are tightened by the covering buffers or only imposed at the centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tightened,
    Discretized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub solver: SolverOptions,
    /// Shift added to the Gram matrix before its square root in the tightening cones.
    pub eps_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), eps_tol: DEFAULT_EPS_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: KernelSpec,
    pub system: ConstraintSystem,
    pub covering: Covering,
    pub objective: ObjectiveSpec,
    pub mode: Mode,
    /// Generating family: anchors, then samples, then net centers.
    pub generators: Vec<KernelSection>,
    pub n_anchors: usize,
    pub n_samples: usize,
    /// One coefficient vector over `generators` per function.
    pub coefficients: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Optimal value on the scale of the original objective: data fit plus
    /// penalties for ridge regularization, data fit alone for norm balls.
    pub value: f64,
    /// Data-fit term alone.
    pub data_fit: f64,
    /// Objective of the conic program as solved.
    pub conic_objective: f64,
    pub solver: SolverSummary,
}

impl FittedModel {
    pub fn n_functions(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.generators.iter().find_map(|g| g.terms.first().map(|t| t.point.len())).unwrap_or(0)
    }

    /// Representer blocks of function `q`: anchor, sample and center coefficients.
    pub fn blocks(&self, q: usize) -> (&[f64], &[f64], &[f64]) {
        let c = &self.coefficients[q];
        let (a, rest) = c.split_at(self.n_anchors);
        let (s, m) = rest.split_at(self.n_samples);
        (a, s, m)
    }

    /// `(D f_q)(x)` without bias.
    pub fn apply(&self, q: usize, op: &DifferentialOperator, x: &[f64]) -> f64 {
        self.coefficients[q]
            .iter()
            .zip(&self.generators)
            .filter(|(c, _)| **c != 0.0)
            .map(|(c, g)| c * g.apply(&self.spec, op, x))
            .sum()
    }

    /// The RKHS element `f_q` as a single kernel section.
    pub fn section(&self, q: usize) -> KernelSection {
        let mut terms = Vec::new();
        for (c, g) in self.coefficients[q].iter().zip(&self.generators) {
            if *c != 0.0 {
                for t in &g.terms {
                    let mut t = t.clone();
                    t.weight *= c;
                    terms.push(t);
                }
            }
        }
        KernelSection { terms }
    }

    pub fn rkhs_norm(&self, q: usize) -> f64 {
        let s = self.section(q);
        s.inner(&self.spec, &s).max(0.0).sqrt()
    }

    /// Bias added to function `q` in predictions, when each function owns one bias.
    pub fn bias_of(&self, q: usize) -> f64 {
        if self.bias.len() == self.n_functions() {
            self.bias[q]
        } else {
            0.0
        }
    }

    /// Margin `D_i (W f - f0)_i (x) - (b0 - U b)_i` of constraint `i` at `x`.
    pub fn constraint_margin(&self, i: usize, x: &[f64]) -> f64 {
        let c = &self.system.constraints[i];
        let mut v = 0.0;
        for (q, &w) in c.w_row.iter().enumerate() {
            if w != 0.0 {
                v += w * self.apply(q, &c.operator, x);
            }
        }
        if self.n_anchors > i {
            v -= self.generators[i].apply(&self.spec, &c.operator, x);
        }
        let ub: f64 = c.u_row.iter().zip(&self.bias).map(|(u, b)| u * b).sum();
        v - (c.b0 - ub)
    }

    /// RKHS norms `|(W f - f0)_i|_k` of the constrained combinations.
    pub fn constraint_function_norms(&self) -> Vec<f64> {
        self.system
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut terms = Vec::new();
                for (q, &w) in c.w_row.iter().enumerate() {
                    if w != 0.0 {
                        for mut t in self.section(q).terms {
                            t.weight *= w;
                            terms.push(t);
                        }
                    }
                }
                if self.n_anchors > i {
                    for mut t in self.generators[i].terms.clone() {
                        t.weight = -t.weight;
                        terms.push(t);
                    }
                }
                let s = KernelSection { terms };
                s.inner(&self.spec, &s).max(0.0).sqrt()
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(format!("model serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("model JSON: {e}")))
    }
}

/// Assembles and solves the program; non-optimal solver outcomes are errors.
pub fn fit(
    data: &Dataset,
    objective: &ObjectiveSpec,
    system: &ConstraintSystem,
    covering: &Covering,
    spec: &KernelSpec,
    mode: Mode,
    options: &FitOptions,
) -> Result<FittedModel> {
    let program = assemble(data, objective, system, covering, spec, mode, options.eps_tol)?;
    let report = solve_with(&program.conic, &options.solver)?;
    if report.status != SolveStatus::Optimal {
        return Err(Error::Solver { status: report.status, iterations: report.iterations });
    }
    let (coefficients, bias) = program.extract(&report.primal);
    let mut model = FittedModel {
        spec: *spec,
        system: system.clone(),
        covering: covering.clone(),
        objective: objective.clone(),
        mode,
        generators: program.gram.generators.clone(),
        n_anchors: program.gram.layout.anchors,
        n_samples: program.gram.layout.samples,
        coefficients,
        bias,
        value: 0.0,
        data_fit: 0.0,
        conic_objective: report.objective,
        solver: SolverSummary {
            status: report.status,
            iterations: report.iterations,
            primal_residual: report.primal_residual,
            dual_residual: report.dual_residual,
            gap: report.gap,
            backend: report.backend,
        },
    };
    let (value, data_fit) = program.objective_value(&model.coefficients, &model.bias, data);
    model.value = value;
    model.data_fit = data_fit;
    Ok(model)
}

/// `D f_q` at each point, as `values[q][k]`. With `with_bias`, identity-like
/// operators act on `f_q + b_q` instead of `f_q`.
pub fn predict(
    model: &FittedModel,
    op: &DifferentialOperator,
    points: &[Vec<f64>],
    with_bias: bool,
) -> Result<Vec<Vec<f64>>> {
    model.spec.check_operator(op)?;
    let d = model.dim();
    if d != 0 && op.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: op.dim() });
    }
    if let Some(bad) = points.iter().find(|p| p.len() != op.dim()) {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: bad.len() });
    }
    let bias_weight = if with_bias && op.is_identity_like() { op.identity_weight() } else { 0.0 };
    let out = (0..model.n_functions())
        .map(|q| {
            let b = bias_weight * model.bias_of(q);
            points.iter().map(|x| model.apply(q, op, x) + b).collect()
        })
        .collect();
    Ok(out)
}
