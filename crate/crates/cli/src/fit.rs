//! Fitting pipeline: data preparation, cross-validation and the final fit.

use kshape_core::{fit, CompactBox, Dataset, FittedModel, Loss, ObjectiveSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Bandwidth, KernelConfig, RegularizationConfig, RunConfig, SigmaGrid};
use crate::data::{read_columns, read_file, sha256_hex, Standardization};
use crate::error::{CliError, CliResult};
use crate::model::{build_covering, build_system, CvEntry, ModelFile, Selection};

/// Training data in model coordinates, with what is needed to map back.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub standardization: Option<Standardization>,
    pub domain: CompactBox,
    pub data_sha256: String,
}

impl Prepared {
    pub fn transform(&self) -> Standardization {
        self.standardization.clone().unwrap_or_else(|| Standardization::identity(self.domain.dim()))
    }
}

pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let bytes = read_file(&config.data)?;
    let mut columns = config.features.clone();
    columns.push(config.target.clone());
    let table = read_columns(&bytes, &columns, &config.data.display().to_string())?;
    if table.rows.is_empty() {
        return Err(CliError::data(format!("{} has no data rows", config.data.display())));
    }
    let d = config.features.len();
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r[..d].to_vec()).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r[d]).collect();
    let domain = CompactBox::bounding(&x)?;
    let standardization = config.standardize.then(|| Standardization::fit(&x));
    let x = match &standardization {
        Some(s) => x.iter().map(|r| s.forward(r)).collect(),
        None => x,
    };
    Ok(Prepared { data: Dataset::new(x, y)?, standardization, domain, data_sha256: sha256_hex(&bytes) })
}

/// One fit with the configured constraints and covering for a given bandwidth and regularization.
pub fn fit_with(
    config: &RunConfig,
    prepared: &Prepared,
    data: &Dataset,
    bandwidth: Option<f64>,
    reg: RegularizationConfig,
) -> CliResult<FittedModel> {
    let spec = config.kernel.spec(bandwidth)?;
    let system = build_system(config, &prepared.domain, &prepared.transform(), &spec)?;
    let covering = build_covering(config, &system, &spec, &data.x)?;
    let objective = config.objective_spec(reg, &data.y);
    Ok(fit(data, &objective, &system, &covering, &spec, config.mode, &config.solver.fit_options())?)
}

/// Mean loss of `model` on `data`: squared error, or pinball loss summed over levels.
pub fn held_out_loss(model: &FittedModel, objective: &ObjectiveSpec, data: &Dataset) -> CliResult<f64> {
    let id = kshape_core::DifferentialOperator::identity(data.x[0].len());
    let fitted = kshape_core::predict(model, &id, &data.x, true)?;
    Ok(mean_loss(&objective.loss, &fitted, &data.y))
}

/// `(1/N) sum_q sum_n loss_q(y_n - fitted[q][n])`.
pub fn mean_loss(loss: &Loss, fitted: &[Vec<f64>], y: &[f64]) -> f64 {
    let total: f64 = match loss {
        Loss::SquaredError => fitted[0].iter().zip(y).map(|(f, y)| (y - f).powi(2)).sum(),
        Loss::Pinball { levels } => levels
            .iter()
            .zip(fitted)
            .map(|(&tau, f)| {
                f.iter()
                    .zip(y)
                    .map(|(f, y)| {
                        let e = y - f;
                        (tau * e).max((tau - 1.0) * e)
                    })
                    .sum::<f64>()
            })
            .sum(),
    };
    total / y.len() as f64
}

/// Square roots of the 10%, ..., 90% quantiles (linear interpolation) of the squared
/// pairwise distances, distinct, positive and in decreasing order.
pub fn decile_bandwidths(x: &[Vec<f64>]) -> Vec<f64> {
    let mut sq: Vec<f64> = Vec::new();
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            sq.push(x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum());
        }
    }
    if sq.is_empty() {
        return Vec::new();
    }
    sq.sort_by(f64::total_cmp);
    let n = sq.len();
    let mut out: Vec<f64> = (1..=9)
        .map(|k| {
            let pos = k as f64 / 10.0 * (n - 1) as f64;
            let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
            let hi = (lo + 1).min(n - 1);
            (sq[lo] + frac * (sq[hi] - sq[lo])).sqrt()
        })
        .filter(|s| *s > 0.0)
        .collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out.dedup();
    out
}

/// Fold index of every sample: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

fn subset(data: &Dataset, keep: impl Fn(usize) -> bool) -> Dataset {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| keep(i)).collect();
    Dataset { x: idx.iter().map(|&i| data.x[i].clone()).collect(), y: idx.iter().map(|&i| data.y[i]).collect() }
}

/// Grid search over bandwidths and regularization by k-fold cross-validation.
/// Candidates are ordered by decreasing bandwidth, then by decreasing regularization
/// strength, and the first one attaining the smallest score wins.
pub fn cross_validate(config: &RunConfig, prepared: &Prepared) -> CliResult<Option<Selection>> {
    let Some(cv) = &config.cv else { return Ok(None) };
    let n = prepared.data.len();
    if cv.folds > n {
        return Err(CliError::usage(format!("{} folds for {n} samples", cv.folds)));
    }
    let bandwidths: Vec<Option<f64>> = match config.kernel {
        KernelConfig::Gaussian { bandwidth: Bandwidth::Fixed(s) } => vec![Some(s)],
        KernelConfig::Gaussian { bandwidth: Bandwidth::Grid(_) } => {
            let mut v = match &cv.sigma_grid {
                SigmaGrid::Values(v) => v.clone(),
                SigmaGrid::Keyword(_) => decile_bandwidths(&prepared.data.x),
            };
            v.sort_by(|a, b| b.total_cmp(a));
            v.dedup();
            if v.is_empty() {
                return Err(CliError::data("all pairwise distances vanish; no bandwidth candidates"));
            }
            v.into_iter().map(Some).collect()
        }
        KernelConfig::Polynomial { .. } => vec![None],
    };
    let base = config.regularization();
    let mut strengths = cv.lambda_grid.values();
    if base.stronger_when_larger() {
        strengths.reverse();
    }

    let fold = fold_assignment(n, cv.folds, config.seed);
    let splits: Vec<(Dataset, Dataset)> = (0..cv.folds)
        .map(|k| (subset(&prepared.data, |i| fold[i] != k), subset(&prepared.data, |i| fold[i] == k)))
        .collect();

    let mut table = Vec::new();
    for &bandwidth in &bandwidths {
        for &value in &strengths {
            let reg = base.with_primary(value);
            let scores: Vec<CliResult<f64>> = std::thread::scope(|scope| {
                let handles: Vec<_> = splits
                    .iter()
                    .map(|(train, test)| {
                        scope.spawn(move || {
                            let model = fit_with(config, prepared, train, bandwidth, reg)?;
                            held_out_loss(&model, &config.objective_spec(reg, &train.y), test)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
            });
            let mut total = 0.0;
            let mut ok = true;
            for s in scores {
                match s {
                    Ok(v) => total += v,
                    Err(CliError::Solver(_)) => ok = false,
                    Err(e) => return Err(e),
                }
            }
            let score = ok.then(|| total / cv.folds as f64);
            table.push(CvEntry { bandwidth, regularization: value, score });
        }
    }
    let mut chosen: Option<&CvEntry> = None;
    for entry in &table {
        if let Some(s) = entry.score {
            if chosen.is_none_or(|c| s < c.score.expect("chosen entries have scores")) {
                chosen = Some(entry);
            }
        }
    }
    let chosen =
        chosen.cloned().ok_or_else(|| CliError::Solver("no grid point could be fitted on every fold".into()))?;
    Ok(Some(Selection { folds: cv.folds, chosen, table }))
}

/// Cross-validates if requested, then fits on all training data.
pub fn run_fit(config: &RunConfig) -> CliResult<ModelFile> {
    let prepared = prepare(config)?;
    let selection = cross_validate(config, &prepared)?;
    let (bandwidth, reg) = match &selection {
        Some(s) => (s.chosen.bandwidth, config.regularization().with_primary(s.chosen.regularization)),
        None => (None, config.regularization()),
    };
    let model = fit_with(config, &prepared, &prepared.data, bandwidth, reg)?;
    Ok(ModelFile::new(
        config.features.clone(),
        config.target.clone(),
        prepared.standardization.clone(),
        prepared.domain.clone(),
        prepared.data_sha256.clone(),
        selection,
        model,
    ))
}

/// Human-readable description of a fitted model, with a grid check of its constraints.
pub fn summary(file: &ModelFile) -> CliResult<String> {
    let m = &file.model;
    let mut out = String::new();
    let push = |out: &mut String, line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push(&mut out, format!("mode: {:?}", m.mode).to_lowercase());
    push(&mut out, format!("samples: {}, features: {}, functions: {}", m.n_samples, file.dim(), m.n_functions()));
    push(&mut out, format!("kernel: {:?}", m.spec.family));
    push(&mut out, format!("objective value v: {:.10e}", m.value));
    push(&mut out, format!("data fit: {:.10e}", m.data_fit));
    for (q, b) in m.bias.iter().enumerate() {
        push(&mut out, format!("bias b{q}: {b:.10e}"));
    }
    for (i, net) in m.covering.nets.iter().enumerate() {
        push(
            &mut out,
            format!(
                "constraint {i}: M = {}, max delta = {:.4e}, max eta = {:.4e}",
                net.len(),
                net.max_radius(),
                net.max_eta()
            ),
        );
    }
    let s = &m.solver;
    push(
        &mut out,
        format!(
            "solver: {:?} after {} iterations ({:?}), residuals {:.2e}/{:.2e}, gap {:.2e}",
            s.status, s.iterations, s.backend, s.primal_residual, s.dual_residual, s.gap
        ),
    );
    if let Some(sel) = &file.selection {
        let bw = sel.chosen.bandwidth.map_or(String::from("fixed"), |b| format!("{b:.6}"));
        push(
            &mut out,
            format!(
                "cross-validation: {} folds, {} candidates, chosen bandwidth {bw}, regularization {:.6}, score {:.6}",
                sel.folds,
                sel.table.len(),
                sel.chosen.regularization,
                sel.chosen.score.unwrap_or(f64::NAN)
            ),
        );
    }
    if !m.system.is_empty() {
        let report = kshape_core::check_constraints(m, &m.system, SUMMARY_GRID)?;
        let violated = report.constraints.iter().filter(|c| c.worst_gap < 0.0).count();
        push(
            &mut out,
            format!(
                "grid check ({SUMMARY_GRID} intervals per axis): worst margin {:.4e}, {violated} of {} constraints violated",
                report.worst_gap(),
                report.constraints.len()
            ),
        );
    }
    Ok(out)
}

/// Intervals per axis of the grid check in the fit summary.
pub const SUMMARY_GRID: usize = 1000;
