//! JSON run configuration.

use std::path::{Path, PathBuf};

use kshape_core::covering::Norm;
use kshape_core::socp::Backend;
use kshape_core::{
    AnchorFunction, BiasSet, CatalogShape, CompactBox, DifferentialOperator, FitOptions, KernelSpec, Loss, Mode,
    ObjectiveSpec, Regularization, SolverOptions,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV file with a header row; relative paths are resolved against the config file.
    pub data: PathBuf,
    pub target: String,
    pub features: Vec<String>,
    /// Rescale every feature to zero mean and unit variance before fitting.
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub objective: ObjectiveConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub constraints: ConstraintsConfig,
    pub covering: CoveringConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Squared { regularization: RegularizationConfig },
    Pinball { levels: Vec<f64>, regularization: RegularizationConfig },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizationConfig {
    Ridge {
        lambda_f: f64,
        #[serde(default)]
        lambda_b: f64,
    },
    /// `radius_b` defaults to ten times the largest absolute target value.
    NormBall {
        radius_f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius_b: Option<f64>,
    },
}

impl RegularizationConfig {
    /// The parameter scanned by cross-validation: `lambda_f` or `radius_f`.
    pub fn primary(&self) -> f64 {
        match *self {
            RegularizationConfig::Ridge { lambda_f, .. } => lambda_f,
            RegularizationConfig::NormBall { radius_f, .. } => radius_f,
        }
    }

    pub fn with_primary(&self, value: f64) -> Self {
        match *self {
            RegularizationConfig::Ridge { lambda_b, .. } => RegularizationConfig::Ridge { lambda_f: value, lambda_b },
            RegularizationConfig::NormBall { radius_b, .. } => {
                RegularizationConfig::NormBall { radius_f: value, radius_b }
            }
        }
    }

    /// Larger values of the primary parameter regularize more strongly for ridge and less for norm balls.
    pub fn stronger_when_larger(&self) -> bool {
        matches!(self, RegularizationConfig::Ridge { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKeyword {
    /// Square roots of the deciles of the squared pairwise distances of the features.
    #[serde(rename = "decile-grid")]
    DecileGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Grid(GridKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian { bandwidth: Bandwidth },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelConfig {
    pub fn spec(&self, bandwidth: Option<f64>) -> CliResult<KernelSpec> {
        let spec = match *self {
            KernelConfig::Gaussian { bandwidth: Bandwidth::Fixed(s) } => KernelSpec::gaussian(s),
            KernelConfig::Gaussian { bandwidth: Bandwidth::Grid(_) } => {
                let s = bandwidth.ok_or_else(|| CliError::usage("a bandwidth grid needs cross-validation"))?;
                KernelSpec::gaussian(s)
            }
            KernelConfig::Polynomial { degree, offset } => KernelSpec::polynomial(degree, offset),
        };
        spec.map_err(|e| CliError::usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintsConfig {
    /// Admissible biases; free when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_set: Option<BiasSet>,
    /// Add `f_{q+1} + b_{q+1} >= f_q + b_q` for consecutive functions.
    pub non_crossing: bool,
    pub shapes: Vec<ShapeDecl>,
    pub custom: Vec<CustomConstraint>,
}

/// A catalog shape imposed on one function, or on every function when `function` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeDecl {
    pub shape: CatalogShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<usize>,
    /// Box in original feature units; the bounding box of the training features when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<CompactBox>,
}

/// `(b0 - U b) <= D (W f - f0)(x)` on `domain`, in original feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConstraint {
    pub operator: DifferentialOperator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<CompactBox>,
    #[serde(default)]
    pub b0: f64,
    #[serde(default)]
    pub f0: AnchorFunction,
    /// Zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_row: Option<Vec<f64>>,
    /// Selects the first function when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_row: Option<Vec<f64>>,
}

fn default_sphere_samples() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoveringConfig {
    /// Uniform net with either a radius `delta` or `per_axis` cells along each axis.
    Uniform {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_axis: Option<usize>,
        #[serde(default)]
        norm: Norm,
        #[serde(default = "default_sphere_samples")]
        sphere_samples: usize,
    },
    /// Training points inside each box become centers, plus at most `max_added` new ones.
    Recycled {
        max_added: usize,
        #[serde(default)]
        norm: Norm,
        #[serde(default = "default_sphere_samples")]
        sphere_samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub eps_tol: f64,
    pub backend: Backend,
    pub equilibrate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            tol: f.solver.tol,
            max_iter: f.solver.max_iter,
            eps_tol: f.eps_tol,
            backend: f.solver.backend,
            equilibrate: f.solver.equilibrate,
        }
    }
}

impl SolverConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            solver: SolverOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                backend: self.backend,
                equilibrate: self.equilibrate,
            },
            eps_tol: self.eps_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaGrid {
    Values(Vec<f64>),
    Keyword(GridKeyword),
}

impl Default for SigmaGrid {
    fn default() -> Self {
        SigmaGrid::Keyword(GridKeyword::DecileGrid)
    }
}

/// `count` points evenly spaced in `[start, end]`, used as base-10 exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogGrid {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        Self { start: -1.0, end: 2.0, count: 7 }
    }
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![10f64.powf(self.start)],
            n => (0..n).map(|k| 10f64.powf(self.start + (self.end - self.start) * k as f64 / (n - 1) as f64)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Bandwidths tried when the kernel bandwidth is `"decile-grid"`.
    #[serde(default)]
    pub sigma_grid: SigmaGrid,
    /// Exponents of the regularization parameter (`lambda_f` or `radius_f`).
    #[serde(default)]
    pub lambda_grid: LogGrid,
}

impl RunConfig {
    /// Parses a config file, reporting JSON errors with their line and column,
    /// and resolves the data path against the directory of the file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if config.data.is_relative() {
            if let Some(dir) = path.parent() {
                config.data = dir.join(&config.data);
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| CliError::usage(format!("config line {}, column {}: {e}", e.line(), e.column())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn n_functions(&self) -> usize {
        match &self.objective {
            ObjectiveConfig::Squared { .. } => 1,
            ObjectiveConfig::Pinball { levels, .. } => levels.len(),
        }
    }

    pub fn regularization(&self) -> RegularizationConfig {
        match &self.objective {
            ObjectiveConfig::Squared { regularization } | ObjectiveConfig::Pinball { regularization, .. } => {
                *regularization
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.features.is_empty() {
            return Err(CliError::usage("at least one feature column is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f) {
                return Err(CliError::usage(format!("feature column '{f}' listed twice")));
            }
            if *f == self.target {
                return Err(CliError::usage(format!("column '{f}' is both a feature and the target")));
            }
        }
        if let ObjectiveConfig::Pinball { levels, .. } = &self.objective {
            if levels.is_empty() {
                return Err(CliError::usage("pinball loss needs at least one level"));
            }
            if levels.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(CliError::usage("quantile levels must lie strictly between 0 and 1"));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::usage("quantile levels must be strictly increasing"));
            }
        }
        let reg = self.regularization();
        let ok = match reg {
            RegularizationConfig::Ridge { lambda_f, lambda_b } => lambda_f >= 0.0 && lambda_b >= 0.0,
            RegularizationConfig::NormBall { radius_f, radius_b } => radius_f > 0.0 && radius_b.is_none_or(|r| r > 0.0),
        };
        if !ok {
            return Err(CliError::usage("regularization parameters must be nonnegative (radii positive)"));
        }
        if self.constraints.non_crossing && self.n_functions() < 2 {
            return Err(CliError::usage("non-crossing constraints need at least two functions"));
        }
        for s in &self.constraints.shapes {
            if let Some(q) = s.function {
                if q >= self.n_functions() {
                    return Err(CliError::usage(format!(
                        "shape targets function {q}, but there are {}",
                        self.n_functions()
                    )));
                }
            }
        }
        match self.covering {
            CoveringConfig::Uniform { delta, per_axis, .. } => match (delta, per_axis) {
                (Some(d), None) if d > 0.0 => {}
                (None, Some(m)) if m > 0 => {}
                _ => {
                    return Err(CliError::usage("a uniform covering needs exactly one of a positive delta or per_axis"))
                }
            },
            CoveringConfig::Recycled { .. } => {}
        }
        if matches!(self.kernel, KernelConfig::Gaussian { bandwidth: Bandwidth::Grid(_) }) && self.cv.is_none() {
            return Err(CliError::usage("a \"decile-grid\" bandwidth requires a cv section"));
        }
        if let Some(cv) = &self.cv {
            if cv.folds < 2 {
                return Err(CliError::usage("cross-validation needs at least 2 folds"));
            }
            if cv.lambda_grid.count == 0 {
                return Err(CliError::usage("the regularization grid is empty"));
            }
            if let SigmaGrid::Values(v) = &cv.sigma_grid {
                if v.is_empty() || v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(CliError::usage("bandwidth grid values must be positive"));
                }
            }
        }
        Ok(())
    }

    /// The objective for given data targets and a regularization override.
    pub fn objective_spec(&self, reg: RegularizationConfig, y: &[f64]) -> ObjectiveSpec {
        let regularization = match reg {
            RegularizationConfig::Ridge { lambda_f, lambda_b } => Regularization::Ridge { lambda_f, lambda_b },
            RegularizationConfig::NormBall { radius_f, radius_b } => {
                let default_b = 10.0 * y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                Regularization::NormBall { radius_f, radius_b: radius_b.unwrap_or(default_b).max(f64::MIN_POSITIVE) }
            }
        };
        let loss = match &self.objective {
            ObjectiveConfig::Squared { .. } => Loss::SquaredError,
            ObjectiveConfig::Pinball { levels, .. } => Loss::Pinball { levels: levels.clone() },
        };
        ObjectiveSpec { loss, regularization }
    }
}
