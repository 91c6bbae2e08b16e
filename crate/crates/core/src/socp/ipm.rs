//! Primal-dual interior point method on the homogeneous self-dual embedding,
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

use super::kkt::{Block, BlockKind, ConeLayout, Kkt};
use super::sparse::dot;
use super::{Cone, ConicProgram, Measures, RawSolution, SolveStatus, SolverOptions};

/// Interior point iterations are few; the configured cap is mostly meant for splitting methods.
const MAX_IPM_ITER: usize = 200;
const STEP_FACTOR: f64 = 0.99;

struct Split {
    eq_rows: Vec<usize>,
    cone_rows: Vec<usize>,
    layout: ConeLayout,
}

fn split(prog: &ConicProgram) -> Split {
    let mut eq_rows = Vec::new();
    let mut cone_rows = Vec::new();
    let mut blocks = Vec::new();
    let mut row = 0;
    for cone in &prog.cones {
        let d = cone.dim();
        match cone {
            Cone::Zero(_) => eq_rows.extend(row..row + d),
            Cone::NonNeg(_) | Cone::Soc(_) => {
                let kind = if matches!(cone, Cone::NonNeg(_)) { BlockKind::NonNeg } else { BlockKind::Soc };
                blocks.push(Block { kind, start: cone_rows.len(), dim: d });
                cone_rows.extend(row..row + d);
            }
        }
        row += d;
    }
    Split { eq_rows, cone_rows, layout: ConeLayout::new(blocks) }
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn solve(
    prog: &ConicProgram,
    opts: &SolverOptions,
    measure: &dyn Fn(&[f64], &[f64], &[f64]) -> Measures,
) -> RawSolution {
    let n = prog.n_vars();
    let m = prog.n_rows();
    let sp = split(prog);
    let a_eq = prog.a.select_rows(&sp.eq_rows);
    let g = prog.a.select_rows(&sp.cone_rows);
    let b: Vec<f64> = sp.eq_rows.iter().map(|&r| prog.b[r]).collect();
    let h: Vec<f64> = sp.cone_rows.iter().map(|&r| prog.b[r]).collect();
    let c = &prog.c;
    let layout = sp.layout.clone();
    let mut kkt = Kkt::new(n, a_eq.clone(), g.clone(), sp.layout);

    let assemble = |it: &Iterate, scale: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut s_full = vec![0.0; m];
        let mut z_full = vec![0.0; m];
        for (k, &r) in sp.eq_rows.iter().enumerate() {
            z_full[r] = it.y[k] * scale;
        }
        for (k, &r) in sp.cone_rows.iter().enumerate() {
            s_full[r] = it.s[k] * scale;
            z_full[r] = it.z[k] * scale;
        }
        (it.x.iter().map(|v| v * scale).collect(), s_full, z_full)
    };

    let fail = |iterations: usize| RawSolution {
        status: SolveStatus::MaxIter,
        x: vec![0.0; n],
        s: vec![0.0; m],
        z: vec![0.0; m],
        iterations,
    };

    // Initial point from two least-squares solves with W = I.
    let ident = layout.identity_scaling();
    if !kkt.factor(&ident) {
        return fail(0);
    }
    let zero_n = vec![0.0; n];
    let (x0, _, zp) = kkt.solve(&ident, &zero_n, &b, &h);
    let mut s0: Vec<f64> = zp.iter().map(|v| -v).collect();
    let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, y0, mut z0) = kkt.solve(&ident, &neg_c, &vec![0.0; b.len()], &vec![0.0; h.len()]);
    let e = layout.identity_element();
    for v in [&mut s0, &mut z0] {
        let margin = layout.margin(v);
        if layout.m > 0 && margin <= 0.0 {
            let shift = 1.0 - margin;
            v.iter_mut().zip(&e).for_each(|(a, ei)| *a += shift * ei);
        }
    }
    let mut it = Iterate { x: x0, y: y0, z: z0, s: s0, tau: 1.0, kappa: 1.0 };
    let degree = layout.degree() as f64;

    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    let max_iter = opts.max_iter.min(MAX_IPM_ITER);
    let mut stalls = 0;
    let mut iterations = 0;
    for iter in 0..=max_iter {
        iterations = iter;
        // Convergence and certificates in the original units.
        let (xs, ss, zs) = assemble(&it, 1.0 / it.tau);
        let meas = measure(&xs, &ss, &zs);
        if meas.worst() <= opts.tol {
            return RawSolution { status: SolveStatus::Optimal, x: xs, s: ss, z: zs, iterations: iter };
        }
        if best.as_ref().is_none_or(|b| meas.worst() < b.0) {
            best = Some((meas.worst(), xs, ss, zs));
        }
        if it.kappa > it.tau {
            let (xr, sr, zr) = assemble(&it, 1.0);
            let raw = measure(&xr, &sr, &zr);
            if raw.primal_infeasibility <= opts.tol {
                return RawSolution { status: SolveStatus::Infeasible, x: xr, s: sr, z: zr, iterations: iter };
            }
            if raw.dual_infeasibility <= opts.tol {
                return RawSolution { status: SolveStatus::Unbounded, x: xr, s: sr, z: zr, iterations: iter };
            }
        }
        if iter == max_iter {
            break;
        }

        // Residuals of the embedding.
        let mut r_x = g.tmul_vec(&it.z);
        a_eq.tmul_add(&it.y, &mut r_x);
        r_x.iter_mut().zip(c).for_each(|(v, ci)| *v += ci * it.tau);
        let mut r_y = a_eq.mul_vec(&it.x);
        r_y.iter_mut().zip(&b).for_each(|(v, bi)| *v -= bi * it.tau);
        let mut r_z = g.mul_vec(&it.x);
        r_z.iter_mut().zip(&it.s).zip(&h).for_each(|((v, si), hi)| *v += si - hi * it.tau);
        let r_tau = it.kappa + dot(c, &it.x) + dot(&b, &it.y) + dot(&h, &it.z);

        let Some(sc) = layout.scaling(&it.s, &it.z) else { break };
        if !kkt.factor(&sc) {
            break;
        }
        let lambda = layout.apply_w(&sc, &it.z, false);
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (degree + 1.0);

        let (x1, y1, z1) = kkt.solve(&sc, &neg_c, &b, &h);
        let denom_base = dot(c, &x1) + dot(&b, &y1) + dot(&h, &z1);

        let direction = |xi_s: &[f64], xi_kappa: f64, damp: f64| {
            let w_div = layout.apply_w(&sc, &layout.division(&lambda, xi_s), false);
            let rhs1: Vec<f64> = r_x.iter().map(|v| -damp * v).collect();
            let rhs2: Vec<f64> = r_y.iter().map(|v| -damp * v).collect();
            let rhs3: Vec<f64> = r_z.iter().zip(&w_div).map(|(v, wd)| -damp * v - wd).collect();
            let (x2, y2, z2) = kkt.solve(&sc, &rhs1, &rhs2, &rhs3);
            let num = -damp * r_tau - xi_kappa / it.tau - dot(c, &x2) - dot(&b, &y2) - dot(&h, &z2);
            let den = denom_base - it.kappa / it.tau;
            let dtau = num / den;
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let dy: Vec<f64> = y2.iter().zip(&y1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
            let w2dz = layout.apply_w_sq(&sc, &dz);
            let ds: Vec<f64> = w_div.iter().zip(&w2dz).map(|(a, b)| a - b).collect();
            let dkappa = (xi_kappa - it.kappa * dtau) / it.tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };
        let max_step = |ds: &[f64], dz: &[f64], dtau: f64, dkappa: f64| {
            let mut alpha = layout.step(&it.s, ds, 1.0);
            alpha = layout.step(&it.z, dz, alpha);
            if dtau < 0.0 {
                alpha = alpha.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-it.kappa / dkappa);
            }
            alpha.max(0.0)
        };

        // Predictor.
        let ll = layout.product(&lambda, &lambda);
        let xi_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(&xi_aff, -it.tau * it.kappa, 1.0);
        let alpha_aff = max_step(&ds_a, &dz_a, dtau_a, dkappa_a);
        let sigma = (1.0 - alpha_aff).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let ws = layout.apply_w(&sc, &ds_a, true);
        let wz = layout.apply_w(&sc, &dz_a, false);
        let cross = layout.product(&ws, &wz);
        let xi_s: Vec<f64> = ll.iter().zip(&cross).zip(&e).map(|((l, cr), ei)| -l - cr + sigma * mu * ei).collect();
        let xi_kappa = -it.tau * it.kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(&xi_s, xi_kappa, 1.0 - sigma);
        let alpha = (STEP_FACTOR * max_step(&ds, &dz, dtau, dkappa)).min(1.0);

        if !(alpha > 1e-12) || dx.iter().any(|v| !v.is_finite()) {
            stalls += 1;
            if stalls >= 3 || dx.iter().any(|v| !v.is_finite()) {
                break;
            }
            continue;
        }
        stalls = 0;
        it.x.iter_mut().zip(&dx).for_each(|(a, d)| *a += alpha * d);
        it.y.iter_mut().zip(&dy).for_each(|(a, d)| *a += alpha * d);
        it.z.iter_mut().zip(&dz).for_each(|(a, d)| *a += alpha * d);
        it.s.iter_mut().zip(&ds).for_each(|(a, d)| *a += alpha * d);
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
        if !(it.tau > 0.0 && it.kappa > 0.0) {
            break;
        }
    }
    match best {
        Some((_, x, s, z)) => RawSolution { status: SolveStatus::MaxIter, x, s, z, iterations },
        None => fail(iterations),
    }
}
