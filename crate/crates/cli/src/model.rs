//! Model files and the translation of configured constraints into model coordinates.

use kshape_core::{
    catalog, non_crossing_system, predict, AnchorFunction, BiasSet, CompactBox, ConstraintSystem, Covering,
    DifferentialOperator, FittedModel, KernelSpec, ShapeConstraint,
};
use serde::{Deserialize, Serialize};

use crate::config::{CoveringConfig, RunConfig};
use crate::data::{sha256_hex, Standardization};
use crate::error::{CliError, CliResult};

pub const MODEL_FORMAT: &str = "kshape-model/1";

/// Checksums identifying what a model was fitted to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub data_sha256: String,
    pub kernel_sha256: String,
    pub constraints_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub regularization: f64,
    /// Mean held-out loss; absent when some fold failed to solve.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub folds: usize,
    pub chosen: CvEntry,
    pub table: Vec<CvEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub features: Vec<String>,
    pub target: String,
    /// Map from original feature units to the coordinates of `model`; absent when features are used as is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
    /// Smallest box containing the training features, in original units.
    pub domain: CompactBox,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(
        features: Vec<String>,
        target: String,
        standardization: Option<Standardization>,
        domain: CompactBox,
        data_sha256: String,
        selection: Option<Selection>,
        model: FittedModel,
    ) -> Self {
        let provenance = Provenance {
            data_sha256,
            kernel_sha256: sha256_hex(serde_json::to_string(&model.spec).expect("specs serialize").as_bytes()),
            constraints_sha256: sha256_hex(serde_json::to_string(&model.system).expect("systems serialize").as_bytes()),
        };
        Self {
            format: MODEL_FORMAT.to_string(),
            features,
            target,
            standardization,
            domain,
            provenance,
            selection,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models serialize")
    }

    pub fn from_json(text: &str, source: &str) -> CliResult<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("{source}, line {}, column {}: {e}", e.line(), e.column())))?;
        if file.format != MODEL_FORMAT {
            return Err(CliError::data(format!("{source}: unsupported model format '{}'", file.format)));
        }
        Ok(file)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read model {}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn transform(&self) -> Standardization {
        self.standardization.clone().unwrap_or_else(|| Standardization::identity(self.dim()))
    }

    /// Values of `op` applied to every function at `points`, all in original feature units;
    /// `values[q][k]` for function `q` at point `k`.
    pub fn predict(&self, op: &DifferentialOperator, points: &[Vec<f64>], with_bias: bool) -> CliResult<Vec<Vec<f64>>> {
        if op.dim() != self.dim() {
            return Err(CliError::data(format!(
                "operator acts on {} variables, the model has {} features",
                op.dim(),
                self.dim()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != self.dim()) {
            return Err(CliError::data(format!(
                "point with {} coordinates for a {}-feature model",
                p.len(),
                self.dim()
            )));
        }
        let t = self.transform();
        let inner = op.rescaled_axes(&t.scale)?;
        let mapped: Vec<Vec<f64>> = points.iter().map(|p| t.forward(p)).collect();
        Ok(predict(&self.model, &inner, &mapped, with_bias)?)
    }
}

/// The configured constraints, in the coordinates of the standardized features.
pub fn build_system(
    config: &RunConfig,
    domain: &CompactBox,
    transform: &Standardization,
    spec: &KernelSpec,
) -> CliResult<ConstraintSystem> {
    let q_count = config.n_functions();
    let d = domain.dim();
    let to_model = |c: ShapeConstraint| -> CliResult<ShapeConstraint> {
        let lower = transform.forward(c.domain.lower());
        let upper = transform.forward(c.domain.upper());
        let f0 = match c.f0 {
            AnchorFunction::Expansion { .. }
                if transform.scale.iter().any(|&s| s != 1.0) || transform.mean.iter().any(|&m| m != 0.0) =>
            {
                return Err(CliError::usage("anchor expansions need \"standardize\": false"));
            }
            other => other,
        };
        Ok(ShapeConstraint {
            operator: c.operator.rescaled_axes(&transform.scale).map_err(|e| CliError::usage(e.to_string()))?,
            domain: CompactBox::new(lower, upper)?,
            f0,
            ..c
        })
    };
    let check_box = |b: &CompactBox| -> CliResult<()> {
        if b.dim() != d {
            return Err(CliError::usage(format!("constraint box has {} axes, the data has {d} features", b.dim())));
        }
        Ok(())
    };

    let mut constraints = Vec::new();
    for decl in &config.constraints.shapes {
        let b = decl.domain.clone().unwrap_or_else(|| domain.clone());
        check_box(&b)?;
        let base = catalog(decl.shape, &b, spec.smoothness).map_err(|e| CliError::usage(e.to_string()))?;
        let targets: Vec<usize> = match decl.function {
            Some(q) => vec![q],
            None => (0..q_count).collect(),
        };
        for &q in &targets {
            for c in &base {
                constraints.push(to_model(c.clone().for_function(q, q_count, q_count)?)?);
            }
        }
    }
    for custom in &config.constraints.custom {
        let b = custom.domain.clone().unwrap_or_else(|| domain.clone());
        check_box(&b)?;
        let w_row = custom.w_row.clone().unwrap_or_else(|| {
            let mut w = vec![0.0; q_count];
            w[0] = 1.0;
            w
        });
        let c = ShapeConstraint {
            operator: custom.operator.clone(),
            domain: b,
            b0: custom.b0,
            f0: custom.f0.clone(),
            u_row: custom.u_row.clone().unwrap_or_else(|| vec![0.0; q_count]),
            w_row,
        };
        constraints.push(to_model(c)?);
    }
    if config.constraints.non_crossing {
        let nc = non_crossing_system(q_count, domain.clone()).map_err(|e| CliError::usage(e.to_string()))?;
        for c in nc.constraints {
            constraints.push(to_model(c)?);
        }
    }
    let bias_set = config.constraints.bias_set.clone().unwrap_or(BiasSet::Free);
    ConstraintSystem::new(constraints, q_count, q_count, bias_set).map_err(|e| CliError::usage(e.to_string()))
}

/// Covering of every constraint box of `system`, built in model coordinates.
pub fn build_covering(
    config: &RunConfig,
    system: &ConstraintSystem,
    spec: &KernelSpec,
    samples: &[Vec<f64>],
) -> CliResult<Covering> {
    let covering = match config.covering {
        CoveringConfig::Uniform { delta: Some(delta), norm, sphere_samples, .. } => {
            Covering::uniform(system, spec, delta, norm, sphere_samples)
        }
        CoveringConfig::Uniform { per_axis, norm, sphere_samples, .. } => {
            Covering::uniform_count(system, spec, per_axis.unwrap_or(1), norm, sphere_samples)
        }
        CoveringConfig::Recycled { max_added, norm, sphere_samples } => {
            Covering::recycled(system, spec, samples, max_added, norm, sphere_samples)
        }
    };
    covering.map_err(|e| CliError::usage(format!("covering: {e}")))
}
