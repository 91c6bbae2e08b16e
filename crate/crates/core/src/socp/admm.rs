//! Operator splitting for conic programs with a linear objective.
//!
//! Each iteration solves `(sigma I + A'RA) x = sigma x_k - c + A'(R(b - s_k) + y_k)`
//! with a cached Cholesky factor, projects onto the cone and updates the dual.
//! Here `y` lives in the polar cone, so the reported dual is `z = -y`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cones::{project_cone, Cone};
use super::sparse::{dot, inf_norm};
use super::{ConicProgram, Measures, RawSolution, SolveStatus, SolverOptions};

const SIGMA: f64 = 1e-6;
const RELAXATION: f64 = 1.6;
const RHO_INIT: f64 = 0.1;
const EQ_RHO_FACTOR: f64 = 1e3;
const CHECK_EVERY: usize = 25;
const ADAPT_EVERY: usize = 100;

fn row_rho(cones: &[Cone], rho: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for cone in cones {
        let f = if matches!(cone, Cone::Zero(_)) { EQ_RHO_FACTOR } else { 1.0 };
        out.extend(std::iter::repeat_n(rho * f, cone.dim()));
    }
    out
}

fn factor(prog: &ConicProgram, r: &[f64]) -> Option<Cholesky<f64, Dyn>> {
    let n = prog.n_vars();
    let mut k = DMatrix::<f64>::identity(n, n) * SIGMA;
    for row in 0..prog.n_rows() {
        let (cols, vals) = prog.a.row(row);
        for (a, (&ca, &va)) in cols.iter().zip(vals).enumerate() {
            for (&cb, &vb) in cols[a..].iter().zip(&vals[a..]) {
                k[(cb.max(ca), cb.min(ca))] += r[row] * va * vb;
            }
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            k[(j, i)] = k[(i, j)];
        }
    }
    Cholesky::new(k)
}

fn project(cones: &[Cone], v: &mut [f64]) {
    let mut start = 0;
    for &cone in cones {
        let end = start + cone.dim();
        project_cone(cone, &mut v[start..end]);
        start = end;
    }
}

pub(crate) fn solve(
    prog: &ConicProgram,
    opts: &SolverOptions,
    measure: &dyn Fn(&[f64], &[f64], &[f64]) -> Measures,
) -> RawSolution {
    let n = prog.n_vars();
    let m = prog.n_rows();
    let mut rho = RHO_INIT;
    let mut r = row_rho(&prog.cones, rho);
    let Some(mut chol) = factor(prog, &r) else {
        return RawSolution {
            status: SolveStatus::MaxIter,
            x: vec![0.0; n],
            s: vec![0.0; m],
            z: vec![0.0; m],
            iterations: 0,
        };
    };
    let mut x = vec![0.0; n];
    let mut s = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut prev_x = x.clone();
    let mut prev_y = y.clone();
    // Step-size changes restart the transient, so they are made progressively rarer.
    let mut next_adapt = ADAPT_EVERY;
    let mut adapt_interval = ADAPT_EVERY;

    for iter in 1..=opts.max_iter {
        let mut rhs: Vec<f64> = x.iter().zip(&prog.c).map(|(xi, ci)| SIGMA * xi - ci).collect();
        let w: Vec<f64> = (0..m).map(|i| r[i] * (prog.b[i] - s[i]) + y[i]).collect();
        prog.a.tmul_add(&w, &mut rhs);
        let xt = chol.solve(&DVector::from_vec(rhs));
        let ax = prog.a.mul_vec(xt.as_slice());
        // s~ = s - R^{-1}(nu + y) with nu = R(A x~ - b + s) - y, i.e. s~ = b - A x~.
        let st: Vec<f64> = (0..m).map(|i| prog.b[i] - ax[i]).collect();
        for j in 0..n {
            x[j] = RELAXATION * xt[j] + (1.0 - RELAXATION) * x[j];
        }
        let relaxed: Vec<f64> = (0..m).map(|i| RELAXATION * st[i] + (1.0 - RELAXATION) * s[i]).collect();
        let mut v: Vec<f64> = (0..m).map(|i| relaxed[i] + y[i] / r[i]).collect();
        project(&prog.cones, &mut v);
        for i in 0..m {
            y[i] += r[i] * (relaxed[i] - v[i]);
        }
        s = v;

        if iter % CHECK_EVERY == 0 || iter == opts.max_iter {
            let z: Vec<f64> = y.iter().map(|v| -v).collect();
            let meas = measure(&x, &s, &z);
            if meas.worst() <= opts.tol {
                return RawSolution { status: SolveStatus::Optimal, x, s, z, iterations: iter };
            }
            let dy: Vec<f64> = y.iter().zip(&prev_y).map(|(a, b)| -(a - b)).collect();
            let dx: Vec<f64> = x.iter().zip(&prev_x).map(|(a, b)| a - b).collect();
            let ndy = inf_norm(&dy);
            if ndy > 1e-6 * (1.0 + inf_norm(&y)) {
                let bdy = dot(&prog.b, &dy);
                if bdy < 0.0 && inf_norm(&prog.a.tmul_vec(&dy)) <= opts.tol * -bdy {
                    return RawSolution { status: SolveStatus::Infeasible, x, s, z: dy, iterations: iter };
                }
            }
            let ndx = inf_norm(&dx);
            if ndx > 1e-6 * (1.0 + inf_norm(&x)) {
                let cdx = dot(&prog.c, &dx);
                // A ray needs -A dx in the cone.
                let adx: Vec<f64> = prog.a.mul_vec(&dx).iter().map(|v| -v).collect();
                let mut proj = adx.clone();
                project(&prog.cones, &mut proj);
                let dist: Vec<f64> = adx.iter().zip(&proj).map(|(a, b)| a - b).collect();
                if cdx < 0.0 && inf_norm(&dist) <= opts.tol * -cdx {
                    return RawSolution { status: SolveStatus::Unbounded, x: dx, s: proj, z, iterations: iter };
                }
            }
            prev_x.clone_from(&x);
            prev_y.clone_from(&y);

            if iter >= next_adapt {
                next_adapt = iter + adapt_interval;
                let ax = prog.a.mul_vec(&x);
                let atz = prog.a.tmul_vec(&z);
                let p_norm = inf_norm(&prog.b).max(inf_norm(&ax)).max(inf_norm(&s)).max(1e-12);
                let d_norm = inf_norm(&prog.c).max(inf_norm(&atz)).max(1e-12);
                let pr: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - prog.b[i]).collect();
                let dr: Vec<f64> = atz.iter().zip(&prog.c).map(|(a, c)| a + c).collect();
                let ratio = ((inf_norm(&pr) / p_norm) / (inf_norm(&dr) / d_norm).max(1e-300)).sqrt();
                if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                    let new_r = row_rho(&prog.cones, new_rho);
                    if let Some(ch) = factor(prog, &new_r) {
                        rho = new_rho;
                        r = new_r;
                        chol = ch;
                        adapt_interval *= 2;
                        next_adapt = iter + adapt_interval;
                    }
                }
            }
        }
    }
    let z: Vec<f64> = y.iter().map(|v| -v).collect();
    RawSolution { status: SolveStatus::MaxIter, x, s, z, iterations: opts.max_iter }
}
