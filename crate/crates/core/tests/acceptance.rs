//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit status on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use kshape_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid_10k_intervals() -> usize {
    // 10^4 grid points per constraint box.
    9_999
}

fn hard_constraint_certification() -> Outcome {
    let mut worst = f64::INFINITY;
    for inst in 0..25u64 {
        let sigma = [0.5, 1.0][(inst % 2) as usize];
        let m = [10, 20][((inst / 2) % 2) as usize];
        let p = parabola(30, 1.0, sigma, 1e-4, 1000 + inst);
        let model = p.fit(m, Mode::Tightened).map_err(|e| format!("instance {inst}: {e}"))?;
        let report = check_constraints(&model, &p.system, grid_10k_intervals()).map_err(|e| e.to_string())?;
        let gap = report.worst_gap();
        worst = worst.min(gap);
        ensure(gap >= -1e-6, || format!("instance {inst} (sigma {sigma}, M {m}): worst gap {gap:e}"))?;
    }
    Ok(format!("25 instances, smallest margin {worst:.3e}"))
}

fn sandwich_and_refinement() -> Outcome {
    let p = parabola(30, 1.0, 0.5, 1e-4, 0);
    let mut rows = Vec::new();
    for m in [5, 10, 20, 40, 80] {
        let t = p.fit(m, Mode::Tightened).map_err(|e| format!("M {m} tightened: {e}"))?;
        let d = p.fit(m, Mode::Discretized).map_err(|e| format!("M {m} discretized: {e}"))?;
        rows.push((m, d.value, t.value));
    }
    let table: Vec<String> = rows.iter().map(|(m, d, t)| format!("M={m}: v_disc={d:.6} v_eta={t:.6}")).collect();
    for w in rows.windows(2) {
        let ((m0, d0, t0), (m1, d1, t1)) = (w[0], w[1]);
        ensure(d1 >= d0 - 1e-6, || format!("v_disc decreased from M={m0} to M={m1}; {}", table.join(", ")))?;
        ensure(t1 <= t0 + 1e-6, || format!("v_eta increased from M={m0} to M={m1}; {}", table.join(", ")))?;
    }
    for (m, d, t) in &rows {
        ensure(*d <= t + 1e-6, || format!("v_disc > v_eta at M={m}"))?;
    }
    Ok(table.join(", "))
}

fn synthetic_replication() -> Outcome {
    let seeds = 100u64;
    let mut violated = 0;
    let mut medians = Vec::new();
    for noise in [0.5, 1.0, 2.0, 4.0] {
        let mut props = Vec::new();
        let mut amounts = Vec::new();
        for seed in 0..seeds {
            let p = parabola(30, noise, 0.5, 1e-4, seed);
            if noise == 1.0 {
                let tight = p.fit(20, Mode::Tightened).map_err(|e| format!("seed {seed}: {e}"))?;
                let (prop, amount) = monotonicity_metrics(&tight, 0.0, 2.0, 10_000).map_err(|e| e.to_string())?;
                ensure(prop <= 1e-6 && amount <= 1e-6, || {
                    format!("seed {seed}: tightened model has violation ({prop:e}, {amount:e})")
                })?;
            }
            let free = p.fit_unconstrained().map_err(|e| format!("seed {seed}: {e}"))?;
            let (prop, amount) = monotonicity_metrics(&free, 0.0, 2.0, 10_000).map_err(|e| e.to_string())?;
            if noise == 1.0 && prop > 0.0 && amount > 0.0 {
                violated += 1;
            }
            props.push(prop);
            amounts.push(amount);
        }
        medians.push((noise, median(&mut props), median(&mut amounts)));
    }
    let summary: Vec<String> = medians.iter().map(|(x, p, a)| format!("xi={x}: median ({p:.4}, {a:.4})")).collect();
    ensure(violated * 100 >= 80 * seeds as usize, || {
        format!("unconstrained fit violates monotonicity in only {violated}/{seeds} seeds")
    })?;
    for w in medians.windows(2) {
        ensure(w[1].1 >= w[0].1 && w[1].2 >= w[0].2, || format!("medians not non-decreasing: {}", summary.join(", ")))?;
    }
    Ok(format!("unconstrained violation in {violated}/{seeds} seeds; {}", summary.join(", ")))
}

fn eta_closed_form() -> Outcome {
    let mut worst = 0.0_f64;
    let id = DifferentialOperator::identity(1);
    let d1 = DifferentialOperator::partial(1, 0, 1).map_err(|e| e.to_string())?;
    for delta in [0.01, 0.1, 0.5] {
        for sigma in [0.5, 1.0, 2.0] {
            let spec = KernelSpec::gaussian(sigma).map_err(|e| e.to_string())?;
            for (op, oracle) in [(&id, eta_identity(delta, sigma)), (&d1, eta_first_derivative(delta, sigma))] {
                let eta = compute_eta(&spec, op, &[0.3], delta, Norm::L2, SPHERE).map_err(|e| e.to_string())?;
                let err = (eta - oracle).abs();
                worst = worst.max(err);
                ensure(err <= 1e-6, || {
                    format!("delta {delta}, sigma {sigma}, order {}: {eta} vs {oracle}", op.order())
                })?;
            }
        }
    }
    Ok(format!("18 cases, largest deviation {worst:.2e}"))
}

fn aposteriori_bound_validity() -> Outcome {
    // 400 / 16 is odd, so the midpoints of the 16-cell net are among those of the 400-cell net.
    let m = 16;
    let lambda = 1e-4;
    let mut details = Vec::new();
    for inst in 0..10u64 {
        let p = parabola(30, 1.0, 0.5, lambda, 500 + inst);
        let tight = p.fit(m, Mode::Tightened).map_err(|e| format!("instance {inst}: {e}"))?;
        let disc = p.fit(m, Mode::Discretized).map_err(|e| format!("instance {inst}: {e}"))?;
        let reference = brute_force_reference(&p.data, &p.objective, &p.system, &p.spec, 400, &FitOptions::default())
            .map_err(|e| format!("instance {inst}: {e}"))?;
        let radius = aposteriori_bound(tight.value, disc.value, 2.0 * lambda).map_err(|e| e.to_string())?;
        let dist = rkhs_distance(&tight, &reference, 0).map_err(|e| e.to_string())?;
        ensure(dist <= radius + 1e-6, || format!("instance {inst}: distance {dist} exceeds bound {radius}"))?;
        details.push(dist / radius.max(f64::MIN_POSITIVE));
    }
    let tightest = details.iter().copied().fold(0.0, f64::max);
    Ok(format!("10 instances, largest distance/bound ratio {tightest:.3}"))
}

fn solver_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let dim = rng.random_range(2..12);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let v: Vec<f64> = (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let pv = project_soc(&v);
        let tol = 1e-10 * (1.0 + scale);
        let again = project_soc(&pv);
        let idem = pv.iter().zip(&again).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let pw = project_soc(&w);
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let expansion = dist(&pv, &pw) - dist(&v, &w);
        // v = P_K(v) + P_{K polar}(v) with P_{K polar}(v) = -P_K(-v), and the two parts are orthogonal.
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let polar: Vec<f64> = project_soc(&neg).iter().map(|x| -x).collect();
        let moreau = v.iter().zip(pv.iter().zip(&polar)).map(|(x, (a, b))| (x - a - b).abs()).fold(0.0, f64::max);
        let inner: f64 = pv.iter().zip(&polar).map(|(a, b)| a * b).sum();
        worst = worst.max(idem).max(expansion).max(moreau).max(inner.abs() / (1.0 + scale));
        ensure(idem <= tol && expansion <= tol && moreau <= tol && inner.abs() <= tol * (1.0 + scale), || {
            format!("projection property violated for {v:?}: idem {idem:e}, expansion {expansion:e}, moreau {moreau:e}, inner {inner:e}")
        })?;
    }

    let opts = SolverOptions::default();
    let lp =
        ConicProgram::new(vec![1.0], socp::CsrMatrix::from_dense(&[vec![-1.0]]), vec![-1.0], vec![Cone::NonNeg(1)])
            .map_err(|e| e.to_string())?;
    let r = solve_with(&lp, &opts).map_err(|e| e.to_string())?;
    ensure(
        r.status == SolveStatus::Optimal && (r.primal[0] - 1.0).abs() <= 1e-5 && (r.objective - 1.0).abs() <= 1e-5,
        || format!("min x s.t. x >= 1 gave {:?} {:?}", r.status, r.primal),
    )?;
    let a = socp::CsrMatrix::from_triplets(3, 1, &[(0, 0, -1.0)]);
    let soc = ConicProgram::new(vec![1.0], a, vec![0.0, 3.0, 4.0], vec![Cone::Soc(3)]).map_err(|e| e.to_string())?;
    let r = solve_with(&soc, &opts).map_err(|e| e.to_string())?;
    ensure(r.status == SolveStatus::Optimal && (r.primal[0] - 5.0).abs() <= 5e-5, || {
        format!("min t s.t. (t,3,4) in SOC gave {:?} {:?}", r.status, r.primal)
    })?;
    let eq = ConicProgram::new(vec![0.0], socp::CsrMatrix::from_dense(&[vec![1.0]]), vec![7.0], vec![Cone::Zero(1)])
        .map_err(|e| e.to_string())?;
    let r = solve_with(&eq, &opts).map_err(|e| e.to_string())?;
    ensure(r.status == SolveStatus::Optimal && (r.primal[0] - 7.0).abs() <= 7e-5, || {
        format!("equality example gave {:?} {:?}", r.status, r.primal)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst_rel = 0.0_f64;
    for k in 0..20 {
        let (c, a, b) = random_lp(&mut rng);
        let oracle = simplex(&c, &a, &b);
        let r = solve_with(&lp_as_conic(&c, &a, &b), &opts).map_err(|e| e.to_string())?;
        ensure(r.status == SolveStatus::Optimal, || format!("LP {k}: status {:?}", r.status))?;
        let rel = (r.objective - oracle).abs() / oracle.abs().max(1.0);
        worst_rel = worst_rel.max(rel);
        ensure(rel <= 1e-5, || format!("LP {k}: {} vs simplex {oracle}", r.objective))?;
    }
    Ok(format!("projection deviation {worst:.1e}, LP relative error {worst_rel:.1e}"))
}

fn derivative_gram_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    let mut pairs = 0;
    let (mut strict, mut total) = (0usize, 0usize);
    let specs = [
        KernelSpec::gaussian(0.5).unwrap(),
        KernelSpec::gaussian(1.0).unwrap(),
        KernelSpec::gaussian(2.0).unwrap(),
        KernelSpec::new(KernelFamily::Polynomial { degree: 4, offset: 1.0 }, 2).unwrap(),
    ];
    for dim in [1usize, 2] {
        let mut indices: Vec<Vec<u32>> = Vec::new();
        for a in 0..=2u32 {
            for b in 0..=2u32 {
                let idx: Vec<u32> = if dim == 1 { vec![a] } else { vec![a, b] };
                if idx.iter().sum::<u32>() <= 2 && !indices.contains(&idx) {
                    indices.push(idx);
                }
            }
        }
        let ops: Vec<DifferentialOperator> = indices
            .iter()
            .map(|idx| DifferentialOperator::new(vec![OperatorTerm { gamma: 1.0, multi_index: idx.clone() }]).unwrap())
            .collect();
        for spec in &specs {
            let h = match spec.family {
                KernelFamily::Gaussian { bandwidth } => 0.2 * bandwidth,
                KernelFamily::Polynomial { .. } => 0.2,
            };
            for (ia, a) in ops.iter().enumerate() {
                for (ib, b) in ops.iter().enumerate() {
                    pairs += 1;
                    let mut orders = indices[ia].clone();
                    orders.extend(&indices[ib]);
                    for _ in 0..100 {
                        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                        let mut z = x.clone();
                        z.extend(&y);
                        let k = |z: &[f64]| eval_kernel(spec, &z[..dim], &z[dim..]).unwrap();
                        let fd = finite_difference(&k, &z, &orders, h);
                        let exact = eval_derivative_kernel(spec, a, b, &x, &y).map_err(|e| e.to_string())?;
                        // |D_a D_b k(x, y)| <= |D_a k(x, .)|_k |D_b k(y, .)|_k, so errors are measured against that product.
                        let diagonal = |p: &[f64], idx: &[u32]| {
                            let mut zz = p.to_vec();
                            zz.extend(p);
                            let mut oo = idx.to_vec();
                            oo.extend(idx);
                            finite_difference(&k, &zz, &oo, h).abs()
                        };
                        let magnitude = (diagonal(&x, &indices[ia]) * diagonal(&y, &indices[ib])).sqrt();
                        let rel = (fd - exact).abs() / magnitude.max(exact.abs());
                        if (fd - exact).abs() <= 1e-5 * exact.abs() {
                            strict += 1;
                        }
                        total += 1;
                        worst = worst.max(rel);
                        ensure(rel <= 1e-5, || {
                            format!(
                                "{:?}, orders {:?}/{:?} at {x:?}, {y:?}: {exact} vs {fd}",
                                spec.family, indices[ia], indices[ib]
                            )
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{pairs} operator pairs x 100 points, largest error relative to the kernel magnitude {worst:.2e}, \
         {strict}/{total} within 1e-5 of the value itself"
    ))
}

fn joint_quantile_non_crossing() -> Outcome {
    let levels = vec![0.1, 0.3, 0.5, 0.7, 0.9];
    let data = synthetic::heteroscedastic_line(300, 2024).map_err(|e| e.to_string())?;
    let domain = CompactBox::interval(0.0, 1.0).map_err(|e| e.to_string())?;
    let system = non_crossing_system(levels.len(), domain).map_err(|e| e.to_string())?;
    let spec = KernelSpec::gaussian(0.5).map_err(|e| e.to_string())?;
    let covering = Covering::recycled(&system, &spec, &data.x, 15, Norm::L2, SPHERE).map_err(|e| e.to_string())?;
    let objective = ObjectiveSpec::quantiles(levels.clone(), 10.0, &data.y);
    let model = fit(&data, &objective, &system, &covering, &spec, Mode::Tightened, &FitOptions::default())
        .map_err(|e| e.to_string())?;

    let report = check_constraints(&model, &system, 999).map_err(|e| e.to_string())?;
    ensure(report.worst_gap() >= -1e-6, || format!("curves cross: worst margin {:e}", report.worst_gap()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let test: Vec<(f64, f64)> = (0..10_000)
        .map(|_| {
            let x: f64 = rng.random_range(0.0..=1.0);
            (x, x + (0.5 + x) * normal.sample(&mut rng))
        })
        .collect();
    let points: Vec<Vec<f64>> = test.iter().map(|(x, _)| vec![*x]).collect();
    let fitted = predict(&model, &DifferentialOperator::identity(1), &points, true).map_err(|e| e.to_string())?;
    let mut coverage = Vec::new();
    for (q, &tau) in levels.iter().enumerate() {
        let below = test.iter().zip(&fitted[q]).filter(|((_, y), f)| y <= f).count();
        let cov = below as f64 / test.len() as f64;
        coverage.push(format!("{tau}: {cov:.3}"));
        ensure((cov - tau).abs() <= 0.08, || format!("coverage of level {tau} is {cov}"))?;
    }
    Ok(format!("worst margin {:.2e}, coverage {}", report.worst_gap(), coverage.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 8] = [
        ("1 hard-constraint certification", hard_constraint_certification, Some(Duration::from_secs(60))),
        ("2 sandwich and refinement", sandwich_and_refinement, Some(Duration::from_secs(120))),
        ("3 synthetic replication", synthetic_replication, Some(Duration::from_secs(300))),
        ("4 buffer closed form", eta_closed_form, None),
        ("5 a-posteriori bound validity", aposteriori_bound_validity, None),
        ("6 solver correctness", solver_correctness, None),
        ("7 derivative Gram correctness", derivative_gram_correctness, None),
        ("8 joint quantile non-crossing", joint_quantile_non_crossing, Some(Duration::from_secs(180))),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.1?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name} ({elapsed:.1?}): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name} ({elapsed:.1?}): {detail}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
