use nalgebra::{DMatrix, SymmetricEigen};

use super::{Dataset, Loss, Mode, ObjectiveSpec, Regularization};
use crate::covering::Covering;
use crate::error::{Error, Result};
use crate::kernels::{build_gram_bundle, GramBundle, KernelSpec};
use crate::shapes::{BiasSet, ConstraintSystem};
use crate::socp::{Cone, ConicProgram, CsrMatrix};

/// Eigenvalues of the active Gram block below this fraction of the largest are discarded.
pub const RANK_TOL: f64 = 1e-12;

/// Positions of the decision variables in the conic program.
///
/// Each function is parametrized by `w_q` in the eigenbasis of the Gram
/// matrix of the active generators, `G_AA = V diag(lambda) V'`: the
/// coefficients are `c_q = V_r diag(lambda_r)^{-1/2} w_q`, so that
/// `|f_q|_k = |w_q|` and `G c_q = V_r diag(lambda_r)^{1/2} w_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    /// Generators that carry a coefficient (zero anchors are dropped).
    pub active: Vec<usize>,
    /// Number of retained eigen-directions, i.e. the length of each `w_q`.
    pub rank: usize,
    /// Variable of bias `p`, if the bias is not fixed at zero.
    pub bias: Vec<Option<usize>>,
    /// SOC scalar `t_i` of constraint `i`, if it has a nonzero buffer.
    pub buffer: Vec<Option<usize>>,
    /// Pinball slacks `u_{n,q}` start here (`n` fastest), or the squared-loss epigraph scalar.
    pub loss: usize,
    /// Epigraph scalars of the ridge penalties on `f` and `b` (pinball loss only).
    pub penalty_f: Option<usize>,
    pub penalty_b: Option<usize>,
    pub n_vars: usize,
}

impl VariableLayout {
    /// Variable holding component `k` of `w_q`.
    pub fn coefficient(&self, q: usize, k: usize) -> usize {
        q * self.rank + k
    }
}

#[derive(Debug, Clone)]
pub struct AssembledProgram {
    pub conic: ConicProgram,
    pub layout: VariableLayout,
    pub gram: GramBundle,
    /// Eigenvalues and eigenvectors of the active Gram block, largest first.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub mode: Mode,
    pub objective: ObjectiveSpec,
    pub n_functions: usize,
    pub n_biases: usize,
}

type Row = (Vec<(usize, f64)>, f64);

/// Rows of `A x + s = b`, stored as `(entries of A, b)` and grouped by cone kind.
#[derive(Default)]
struct Rows {
    zero: Vec<Row>,
    nonneg: Vec<Row>,
    soc: Vec<Vec<Row>>,
}

impl Rows {
    /// The affine expression `coef' x + constant` must lie in the cone: `A = -coef`, `b = constant`.
    fn expr(coef: Vec<(usize, f64)>, constant: f64) -> Row {
        (coef.into_iter().map(|(j, v)| (j, -v)).filter(|e| e.1 != 0.0).collect(), constant)
    }

    fn into_program(self, c: Vec<f64>) -> Result<ConicProgram> {
        let n = c.len();
        let mut triplets = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0;
        let mut push = |rows: Vec<Row>, triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>| {
            for (entries, rhs) in rows {
                triplets.extend(entries.into_iter().map(|(j, v)| (row, j, v)));
                b.push(rhs);
                row += 1;
            }
        };
        if !self.zero.is_empty() {
            cones.push(Cone::Zero(self.zero.len()));
            push(self.zero, &mut triplets, &mut b);
        }
        if !self.nonneg.is_empty() {
            cones.push(Cone::NonNeg(self.nonneg.len()));
            push(self.nonneg, &mut triplets, &mut b);
        }
        for block in self.soc {
            cones.push(Cone::Soc(block.len()));
            push(block, &mut triplets, &mut b);
        }
        let m = b.len();
        ConicProgram::new(c, CsrMatrix::from_triplets(m, n, &triplets), b, cones)
    }
}

/// Builds the finite-dimensional conic program for the given data, objective,
/// constraints and covering.
///
/// Constraint `i` becomes, for every center `m` of its net,
/// `(G_{D_i} g_i)_m - (b0 - U b)_i - eta_{i,m} t_i >= 0`, where `g_i` are the
/// coefficients of `(W f - f0)_i` and `t_i >= |(G + eps_tol I)^{1/2} g_i|`.
/// In discretized mode, and for constraints whose buffers all vanish, the
/// cone and `t_i` are omitted.
pub fn assemble(
    data: &Dataset,
    objective: &ObjectiveSpec,
    system: &ConstraintSystem,
    covering: &Covering,
    spec: &KernelSpec,
    mode: Mode,
    eps_tol: f64,
) -> Result<AssembledProgram> {
    data.validate()?;
    system.validate()?;
    spec.validate()?;
    objective.validate(system.n_functions)?;
    covering.validate(system)?;
    if let Some(d) = system.dim() {
        if d != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: d });
        }
    }
    if system.max_order() > spec.smoothness {
        return Err(Error::UnsupportedOrder { requested: system.max_order(), supported: spec.smoothness });
    }

    let anchors = system.anchors();
    let gram = build_gram_bundle(spec, &anchors, &data.x, covering, &system.operators(), eps_tol)?;
    let lay = &gram.layout;
    let n = data.len();
    let q_count = system.n_functions;
    let p_count = system.n_biases;
    let loss_has_bias = p_count == q_count;

    let active: Vec<usize> = (0..lay.len()).filter(|&j| j >= lay.anchors || !anchors[j].is_zero()).collect();
    let mut position = vec![None; lay.len()];
    for (k, &j) in active.iter().enumerate() {
        position[j] = Some(k);
    }
    let (eigenvalues, eigenvectors) = active_spectrum(&gram.g, &active)?;
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = eigenvalues.iter().take_while(|&&l| l > RANK_TOL * top && l > 0.0).count();
    let mut next = q_count * rank;
    let bias_used = |p: usize| loss_has_bias || system.constraints.iter().any(|c| c.u_row[p] != 0.0);
    let bias: Vec<Option<usize>> = (0..p_count)
        .map(|p| {
            let has_var = match system.bias_set {
                BiasSet::Zero => false,
                BiasSet::Free => bias_used(p),
                BiasSet::Box { .. } => true,
            };
            has_var.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();

    let buffer: Vec<Option<usize>> = covering
        .nets
        .iter()
        .map(|net| {
            (mode == Mode::Tightened && net.etas.iter().any(|&e| e > 0.0)).then(|| {
                next += 1;
                next - 1
            })
        })
        .collect();

    let loss = next;
    next += match objective.loss {
        Loss::SquaredError => 1,
        Loss::Pinball { .. } => n * q_count,
    };
    let ridge_epigraphs = matches!(objective.loss, Loss::Pinball { .. });
    let (penalty_f, penalty_b) = match objective.regularization {
        Regularization::Ridge { lambda_b, .. } if ridge_epigraphs => {
            let f = next;
            next += 1;
            let b = (lambda_b > 0.0 && bias.iter().any(Option::is_some)).then(|| {
                next += 1;
                next - 1
            });
            (Some(f), b)
        }
        _ => (None, None),
    };
    let layout = VariableLayout { active, rank, bias, buffer, loss, penalty_f, penalty_b, n_vars: next };

    let mut rows = Rows::default();
    // Terms of `scale * (G c_q)_r` for an active generator `r`.
    let value_row = |r: usize, q: usize, scale: f64, out: &mut Vec<(usize, f64)>| {
        let a = position[r].expect("rows of the value map belong to active generators");
        for k in 0..rank {
            let v = eigenvectors[(a, k)] * eigenvalues[k].sqrt();
            if v != 0.0 {
                out.push((layout.coefficient(q, k), scale * v));
            }
        }
    };
    // Terms of `scale * w_q`, one row per retained direction.
    let norm_rows = |scale: f64, block: &mut Vec<Row>| {
        for q in 0..q_count {
            for k in 0..rank {
                block.push(Rows::expr(vec![(layout.coefficient(q, k), scale)], 0.0));
            }
        }
    };

    // Shape constraints.
    for (i, (c, net)) in system.constraints.iter().zip(&covering.nets).enumerate() {
        let anchor_active = !anchors[i].is_zero();
        let gd = &gram.g_d[i];
        for m in 0..net.len() {
            // The generator at this center is `D_i k(x_m, .)`, so `(G_{D_i} c)_r = (G c)_r`.
            let r = lay.center(i, m);
            let mut coef = Vec::new();
            for (q, &w) in c.w_row.iter().enumerate() {
                if w != 0.0 {
                    value_row(r, q, w, &mut coef);
                }
            }
            for (p, &u) in c.u_row.iter().enumerate() {
                if let (Some(j), true) = (layout.bias[p], u != 0.0) {
                    coef.push((j, u));
                }
            }
            if let Some(t) = layout.buffer[i] {
                if net.etas[m] > 0.0 {
                    coef.push((t, -net.etas[m]));
                }
            }
            let constant = -c.b0 - if anchor_active { gd[(r, lay.anchor(i))] } else { 0.0 };
            rows.nonneg.push(Rows::expr(coef, constant));
        }
        if let Some(t) = layout.buffer[i] {
            // `V' (G + eps I)^{1/2} g_i` in eigen-coordinates, padded with zero rows
            // for the dropped anchors so the block always has `1 + L` rows.
            let anchor_pos = if anchor_active { position[lay.anchor(i)] } else { None };
            let mut block = vec![Rows::expr(vec![(t, 1.0)], 0.0)];
            for k in 0..lay.len() {
                let mut coef = Vec::new();
                let mut constant = 0.0;
                if k < eigenvalues.len() {
                    let shifted = (eigenvalues[k].max(0.0) + eps_tol).sqrt();
                    if k < rank {
                        let scale = shifted / eigenvalues[k].sqrt();
                        for (q, &w) in c.w_row.iter().enumerate() {
                            if w != 0.0 {
                                coef.push((layout.coefficient(q, k), w * scale));
                            }
                        }
                    }
                    if let Some(a) = anchor_pos {
                        constant = -shifted * eigenvectors[(a, k)];
                    }
                }
                block.push(Rows::expr(coef, constant));
            }
            rows.soc.push(block);
        }
    }

    // Bias set.
    if let BiasSet::Box { lower, upper } = &system.bias_set {
        for (p, j) in layout.bias.iter().enumerate() {
            let j = j.expect("boxed biases always carry a variable");
            rows.nonneg.push(Rows::expr(vec![(j, 1.0)], -lower[p]));
            rows.nonneg.push(Rows::expr(vec![(j, -1.0)], upper[p]));
        }
    }

    // Residual e_{n,q} = y_n - f_q(x_n) - b_q as (coefficients, constant).
    let residual = |nn: usize, q: usize| {
        let mut coef = Vec::new();
        value_row(lay.sample(nn), q, -1.0, &mut coef);
        if loss_has_bias {
            if let Some(j) = layout.bias[q] {
                coef.push((j, -1.0));
            }
        }
        (coef, data.y[nn])
    };
    let nf = n as f64;
    let mut cost = vec![0.0; layout.n_vars];
    let bias_vars: Vec<usize> = layout.bias.iter().flatten().copied().collect();

    match &objective.loss {
        Loss::SquaredError => {
            // One epigraph over all residuals and, for ridge, the scaled penalty roots.
            cost[layout.loss] = 1.0;
            let mut block = vec![Rows::expr(vec![(layout.loss, 1.0)], 0.0)];
            for q in 0..q_count {
                for nn in 0..n {
                    let (coef, constant) = residual(nn, q);
                    block.push(Rows::expr(coef, constant));
                }
            }
            if let Regularization::Ridge { lambda_f, lambda_b } = objective.regularization {
                norm_rows((lambda_f * nf).sqrt(), &mut block);
                if lambda_b > 0.0 {
                    for &j in &bias_vars {
                        block.push(Rows::expr(vec![(j, (lambda_b * nf).sqrt())], 0.0));
                    }
                }
            }
            rows.soc.push(block);
        }
        Loss::Pinball { levels } => {
            for (q, &tau) in levels.iter().enumerate() {
                for nn in 0..n {
                    let u = layout.loss + q * n + nn;
                    cost[u] = 1.0 / nf;
                    let (coef, constant) = residual(nn, q);
                    for weight in [tau, tau - 1.0] {
                        // u - weight * e >= 0
                        let mut row: Vec<(usize, f64)> = coef.iter().map(|&(j, v)| (j, -weight * v)).collect();
                        row.push((u, 1.0));
                        rows.nonneg.push(Rows::expr(row, -weight * constant));
                    }
                }
            }
            if let (Regularization::Ridge { lambda_f, lambda_b }, Some(sf)) =
                (objective.regularization, layout.penalty_f)
            {
                // (s + 1, s - 1, 2 v) in SOC  <=>  s >= |v|^2
                cost[sf] = lambda_f;
                let mut block = vec![Rows::expr(vec![(sf, 1.0)], 1.0), Rows::expr(vec![(sf, 1.0)], -1.0)];
                norm_rows(2.0, &mut block);
                rows.soc.push(block);
                if let Some(sb) = layout.penalty_b {
                    cost[sb] = lambda_b;
                    let mut block = vec![Rows::expr(vec![(sb, 1.0)], 1.0), Rows::expr(vec![(sb, 1.0)], -1.0)];
                    for &j in &bias_vars {
                        block.push(Rows::expr(vec![(j, 2.0)], 0.0));
                    }
                    rows.soc.push(block);
                }
            }
        }
    }

    if let Regularization::NormBall { radius_f, radius_b } = objective.regularization {
        let mut block = vec![Rows::expr(Vec::new(), radius_f)];
        norm_rows(1.0, &mut block);
        rows.soc.push(block);
        if !bias_vars.is_empty() {
            let mut block = vec![Rows::expr(Vec::new(), radius_b)];
            for &j in &bias_vars {
                block.push(Rows::expr(vec![(j, 1.0)], 0.0));
            }
            rows.soc.push(block);
        }
    }

    let conic = rows.into_program(cost)?;
    Ok(AssembledProgram {
        conic,
        layout,
        gram,
        eigenvalues,
        eigenvectors,
        mode,
        objective: objective.clone(),
        n_functions: q_count,
        n_biases: p_count,
    })
}

impl AssembledProgram {
    /// Coefficient vectors over all generators (zero on dropped anchors) and biases.
    pub fn extract(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let l = self.gram.layout.len();
        let coefficients = (0..self.n_functions)
            .map(|q| {
                let mut c = vec![0.0; l];
                for k in 0..self.layout.rank {
                    let scaled = x[self.layout.coefficient(q, k)] / self.eigenvalues[k].sqrt();
                    for (a, &j) in self.layout.active.iter().enumerate() {
                        c[j] += self.eigenvectors[(a, k)] * scaled;
                    }
                }
                c
            })
            .collect();
        let bias = self.layout.bias.iter().map(|j| j.map_or(0.0, |j| x[j])).collect();
        (coefficients, bias)
    }

    /// `(value, data_fit)` of the original objective at the given coefficients.
    pub fn objective_value(&self, coefficients: &[Vec<f64>], bias: &[f64], data: &Dataset) -> (f64, f64) {
        let g = &self.gram.g;
        let lay = &self.gram.layout;
        let loss_has_bias = self.n_biases == self.n_functions;
        let mut fit = 0.0;
        let mut norm_sq = 0.0;
        for (q, c) in coefficients.iter().enumerate() {
            let cv = nalgebra::DVector::from_column_slice(c);
            let gc = g * &cv;
            norm_sq += cv.dot(&gc).max(0.0);
            let b = if loss_has_bias { bias[q] } else { 0.0 };
            for nn in 0..data.len() {
                fit += self.objective.pointwise_loss(q, data.y[nn] - gc[lay.sample(nn)] - b);
            }
        }
        let fit = fit / data.len() as f64;
        let value = match self.objective.regularization {
            Regularization::Ridge { lambda_f, lambda_b } => {
                fit + lambda_f * norm_sq + lambda_b * bias.iter().map(|b| b * b).sum::<f64>()
            }
            Regularization::NormBall { .. } => fit,
        };
        (value, fit)
    }

    pub fn soc_block_count(&self) -> usize {
        self.conic.cones.iter().filter(|c| matches!(c, Cone::Soc(_))).count()
    }
}

/// Eigen-decomposition of the Gram block of the active generators, sorted by
/// decreasing eigenvalue.
fn active_spectrum(g: &DMatrix<f64>, active: &[usize]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = active.len();
    let block = DMatrix::from_fn(n, n, |i, j| g[(active[i], active[j])]);
    if n == 0 {
        return Ok((Vec::new(), block));
    }
    let eig = SymmetricEigen::try_new(block, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}
