//! The subcommands, as functions from parsed arguments to output text.

use std::path::Path;

use kshape_core::shapes::tensor_product;
use kshape_core::verify::margin_grid;
use kshape_core::{
    aposteriori_bound, check_constraints, strong_convexity, BiasSet, DifferentialOperator, OperatorTerm,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{read_columns, read_file, write_csv};
use crate::error::{CliError, CliResult};
use crate::fit::{run_fit, summary};
use crate::model::{build_system, ModelFile};

/// Fits the configured model; returns the model JSON and its summary.
pub fn fit(config: &RunConfig) -> CliResult<(String, String)> {
    let file = run_fit(config)?;
    let text = summary(&file)?;
    Ok((file.to_json(), text))
}

/// `lo:hi:n`: `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn parse_axis(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::usage(format!("grid axis '{spec}' is not of the form lo:hi:n"));
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(bad());
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        n => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    })
}

/// Comma-separated derivative orders per feature, e.g. `1` or `0,2`.
pub fn parse_derivative(spec: &str, dim: usize) -> CliResult<DifferentialOperator> {
    let orders: Vec<u32> = spec
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("derivative '{spec}' must list nonnegative integers")))?;
    if orders.len() != dim {
        return Err(CliError::usage(format!("derivative '{spec}' needs {dim} orders, one per feature")));
    }
    if orders.iter().all(|&o| o == 0) {
        return Err(CliError::usage("a derivative needs a positive order"));
    }
    DifferentialOperator::new(vec![OperatorTerm { gamma: 1.0, multi_index: orders }])
        .map_err(|e| CliError::usage(e.to_string()))
}

pub enum PointSource<'a> {
    Csv(&'a Path),
    Grid(&'a [String]),
}

/// Prediction CSV: feature columns, one value column per function, then one
/// column per function and requested derivative.
pub fn predict(
    model: &ModelFile,
    points: PointSource<'_>,
    derivatives: &[String],
    with_bias: bool,
) -> CliResult<String> {
    let d = model.dim();
    let pts: Vec<Vec<f64>> = match points {
        PointSource::Csv(path) => read_columns(&read_file(path)?, &model.features, &path.display().to_string())?.rows,
        PointSource::Grid(axes) => {
            if axes.len() != d {
                return Err(CliError::usage(format!("{} grid axes for a {d}-feature model", axes.len())));
            }
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<CliResult<Vec<_>>>()?;
            if axes.iter().any(Vec::is_empty) {
                Vec::new()
            } else {
                tensor_product(&axes)
            }
        }
    };
    let q_count = model.model.n_functions();
    let mut header = model.features.clone();
    header.extend((0..q_count).map(|q| format!("f{q}")));
    let mut columns = vec![model.predict(&DifferentialOperator::identity(d), &pts, with_bias)?];
    for spec in derivatives {
        let op = parse_derivative(spec, d)?;
        let tag = spec.split(',').map(str::trim).collect::<Vec<_>>().join("-");
        header.extend((0..q_count).map(|q| format!("f{q}_d{tag}")));
        columns.push(model.predict(&op, &pts, false)?);
    }
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut row = p.clone();
            for block in &columns {
                row.extend(block.iter().map(|values| values[k]));
            }
            row
        })
        .collect();
    Ok(write_csv(&header, &rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub worst_gap: f64,
    /// In original feature units.
    pub worst_point: Vec<f64>,
    pub proportion_violated: f64,
    /// Integral of the violation over the box, in original feature units.
    pub integrated_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub grid_intervals: usize,
    pub worst_gap: Option<f64>,
    pub constraints: Vec<ConstraintReport>,
}

/// Grid check of the model's own constraints, or of those declared in `config`.
/// With `margins_dir`, also writes `margins_<i>.csv` for every constraint.
pub fn verify(
    model: &ModelFile,
    config: Option<&RunConfig>,
    intervals: usize,
    margins_dir: Option<&Path>,
) -> CliResult<String> {
    let system = match config {
        Some(c) => build_system(c, &model.domain, &model.transform(), &model.model.spec)?,
        None => model.model.system.clone(),
    };
    let t = model.transform();
    let report = check_constraints(&model.model, &system, intervals).map_err(|e| CliError::usage(e.to_string()))?;
    let constraints = report
        .constraints
        .iter()
        .map(|c| ConstraintReport {
            worst_gap: c.worst_gap,
            worst_point: t.inverse(&c.worst_point),
            proportion_violated: c.proportion_violated,
            integrated_violation: c.integrated_violation * t.jacobian(),
        })
        .collect();
    let out = VerifyReport {
        grid_intervals: intervals,
        worst_gap: (!report.is_empty()).then(|| report.worst_gap()),
        constraints,
    };
    if let Some(dir) = margins_dir {
        std::fs::create_dir_all(dir)?;
        for i in 0..system.len() {
            let grid = margin_grid(&model.model, &system, i, intervals)?;
            let mut header = model.features.clone();
            header.push("margin".into());
            let rows: Vec<Vec<f64>> = grid
                .into_iter()
                .map(|(x, m)| {
                    let mut row = t.inverse(&x);
                    row.push(m);
                    row
                })
                .collect();
            std::fs::write(dir.join(format!("margins_{i}.csv")), write_csv(&header, &rows))?;
        }
    }
    Ok(serde_json::to_string_pretty(&out).expect("reports serialize"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub v_eta: f64,
    pub v_disc: f64,
    pub mu: f64,
    /// Bound on `|f_eta - f|_k` for the solution `f` of the continuum-constrained problem.
    pub radius: f64,
}

/// Strong-convexity modulus of a ridge objective in the variables it actually has.
pub fn default_mu(model: &ModelFile) -> Option<f64> {
    let (mu_f, mu_b) = strong_convexity(&model.model.objective)?;
    let has_bias = !matches!(model.model.system.bias_set, BiasSet::Zero) && !model.model.bias.is_empty();
    let mu = if has_bias { mu_f.min(mu_b) } else { mu_f };
    (mu > 0.0).then_some(mu)
}

/// A-posteriori radius from a tightened and a discretized fit of the same problem.
pub fn bounds(tightened: &ModelFile, discretized: &ModelFile, mu: Option<f64>) -> CliResult<String> {
    if tightened.provenance != discretized.provenance {
        let (a, b) = (&tightened.provenance, &discretized.provenance);
        let which: Vec<&str> = [
            (a.data_sha256 != b.data_sha256, "data"),
            (a.kernel_sha256 != b.kernel_sha256, "kernel"),
            (a.constraints_sha256 != b.constraints_sha256, "constraints"),
        ]
        .iter()
        .filter(|(differ, _)| *differ)
        .map(|(_, name)| *name)
        .collect();
        return Err(CliError::data(format!("the models differ in their {} checksums", which.join(", "))));
    }
    let mu = match mu {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(CliError::usage(format!("mu must be positive, got {m}"))),
        None => default_mu(tightened)
            .ok_or_else(|| CliError::usage("the objective is not strongly convex in every variable; pass --mu"))?,
    };
    let (v_eta, v_disc) = (tightened.model.value, discretized.model.value);
    let radius = aposteriori_bound(v_eta, v_disc, mu)?;
    let report = BoundReport { v_eta, v_disc, mu, radius };
    Ok(serde_json::to_string_pretty(&report).expect("reports serialize"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SyntheticKind {
    /// `x ~ U[-2, 2]`, `y = x^2 + noise * N(0, 1)`.
    Parabola,
    /// `x ~ U[0, 1]`, `y = x + (0.5 + x) * N(0, 1)`.
    Heteroscedastic,
}

/// Seeded synthetic data as CSV with columns `x,y`.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> CliResult<String> {
    let data = match kind {
        SyntheticKind::Parabola => kshape_core::synthetic::noisy_parabola(n, noise, seed),
        SyntheticKind::Heteroscedastic => kshape_core::synthetic::heteroscedastic_line(n, seed),
    }
    .map_err(|e| CliError::usage(e.to_string()))?;
    let rows: Vec<Vec<f64>> = data.x.iter().zip(&data.y).map(|(x, y)| vec![x[0], *y]).collect();
    Ok(write_csv(&["x".to_string(), "y".to_string()], &rows))
}
