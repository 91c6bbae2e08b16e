use nalgebra::DMatrix;

use super::{ObjectiveSpec, Regularization};
use crate::error::{invalid, Result};

/// Strong convexity constants `(mu_f, mu_b)` contributed by ridge penalties.
/// Norm-ball objectives have none.
pub fn strong_convexity(objective: &ObjectiveSpec) -> Option<(f64, f64)> {
    match objective.regularization {
        Regularization::Ridge { lambda_f, lambda_b } => Some((2.0 * lambda_f, 2.0 * lambda_b)),
        Regularization::NormBall { .. } => None,
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid(format!("strong convexity constant must be positive, got {mu}")));
    }
    Ok(())
}

/// `sqrt(2 max(0, v_eta - v_disc) / mu)`: RKHS distance between the tightened
/// solution and the solution of the constrained problem.
pub fn aposteriori_bound(v_eta: f64, v_disc: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if !v_eta.is_finite() || !v_disc.is_finite() {
        return Err(invalid("optimal values must be finite"));
    }
    Ok((2.0 * (v_eta - v_disc).max(0.0) / mu).sqrt())
}

/// `sqrt(2 L_b c_f eta_inf / mu)`.
pub fn apriori_bound(eta_inf: f64, l_b: f64, c_f: f64, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    for (name, v) in [("eta_inf", eta_inf), ("L_b", l_b), ("c_f", c_f)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be a nonnegative number, got {v}")));
        }
    }
    Ok((2.0 * l_b * c_f * eta_inf / mu).sqrt())
}

/// `c_f = sqrt(I) |U^+| max_i |(W f - f0)_i|_k` for an `I x P` matrix `U`
/// of full row rank, where `|U^+| = 1 / sigma_min(U)`.
pub fn apriori_constant(u: &[Vec<f64>], constraint_norms: &[f64]) -> Result<f64> {
    let rows = u.len();
    if rows == 0 {
        return Err(invalid("U has no rows"));
    }
    if constraint_norms.len() != rows {
        return Err(invalid(format!("{} norms for {rows} constraints", constraint_norms.len())));
    }
    let cols = u[0].len();
    if cols < rows || u.iter().any(|r| r.len() != cols) {
        return Err(invalid("U must be a full row rank matrix with at least as many columns as rows"));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| u[i][j]);
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(invalid("U is not of full row rank"));
    }
    let max_norm = constraint_norms.iter().copied().fold(0.0, f64::max);
    Ok((rows as f64).sqrt() / smin * max_norm)
}
