//! Conic programs over zero, nonnegative and second-order cones.
//!
//! Standard form: `min c'x  s.t.  A x + s = b,  s in K`, where `K` is the
//! product of the cones listed in order over the rows of `A`. The dual is
//! `max -b'z  s.t.  A'z + c = 0,  z in K*`.

mod admm;
mod cones;
mod equilibrate;
mod ipm;
mod kkt;
pub mod sparse;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use cones::{project_soc, Cone};
pub use sparse::CsrMatrix;

use crate::error::{invalid, Error, Result};
use equilibrate::{ruiz, Equilibration, RUIZ_SWEEPS};
use sparse::{dot, inf_norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn new(c: Vec<f64>, a: CsrMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self> {
        let prog = Self { c, a, b, cones };
        prog.validate()?;
        Ok(prog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.ncols() != self.c.len() {
            return Err(Error::DimensionMismatch { expected: self.c.len(), got: self.a.ncols() });
        }
        if self.a.nrows() != self.b.len() {
            return Err(Error::DimensionMismatch { expected: self.b.len(), got: self.a.nrows() });
        }
        let rows: usize = self.cones.iter().map(Cone::dim).sum();
        if rows != self.b.len() {
            return Err(invalid(format!("cone dimensions sum to {rows}, program has {} rows", self.b.len())));
        }
        if self.cones.iter().any(|k| k.dim() == 0) {
            return Err(invalid("cone blocks must have positive dimension"));
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite()) || self.a.triplets().iter().any(|t| !t.2.is_finite()) {
            return Err(Error::NonFinite("conic program data"));
        }
        Ok(())
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    /// Plain-text sparse dump: a header line `n m nnz`, the objective, the
    /// right-hand side, the cone list and one `row col value` line per entry.
    pub fn to_triplet_string(&self) -> String {
        let mut out = String::new();
        let trip = self.a.triplets();
        let _ = writeln!(out, "{} {} {}", self.n_vars(), self.n_rows(), trip.len());
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "c {}", join(&self.c));
        let _ = writeln!(out, "b {}", join(&self.b));
        let cones: Vec<String> = self
            .cones
            .iter()
            .map(|k| match k {
                Cone::Zero(d) => format!("z{d}"),
                Cone::NonNeg(d) => format!("l{d}"),
                Cone::Soc(d) => format!("q{d}"),
            })
            .collect();
        let _ = writeln!(out, "cones {}", cones.join(" "));
        for (r, c, v) in trip {
            let _ = writeln!(out, "{r} {c} {v:e}");
        }
        out
    }

    pub fn from_triplet_str(text: &str) -> Result<Self> {
        let bad = |what: &str| invalid(format!("triplet dump: {what}"));
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("header")))
            .collect::<Result<_>>()?;
        let [n, m, nnz] = header[..] else { return Err(bad("header needs three fields")) };
        let mut floats = |tag: &str| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad(tag))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(bad(tag));
            }
            parts.map(|t| t.parse().map_err(|_| bad(tag))).collect()
        };
        let c = floats("c")?;
        let b = floats("b")?;
        let cone_line = lines.next().ok_or_else(|| bad("cones"))?;
        let mut cones = Vec::new();
        for tok in cone_line.split_whitespace().skip(1) {
            let (kind, dim) = tok.split_at(1);
            let dim: usize = dim.parse().map_err(|_| bad("cone dimension"))?;
            cones.push(match kind {
                "z" => Cone::Zero(dim),
                "l" => Cone::NonNeg(dim),
                "q" => Cone::Soc(dim),
                _ => return Err(bad("cone kind")),
            });
        }
        let mut trip = Vec::with_capacity(nnz);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("entry line"));
            }
            let r: usize = f[0].parse().map_err(|_| bad("row"))?;
            let col: usize = f[1].parse().map_err(|_| bad("col"))?;
            let v: f64 = f[2].parse().map_err(|_| bad("value"))?;
            if r >= m || col >= n {
                return Err(bad("entry out of range"));
            }
            trip.push((r, col, v));
        }
        Self::new(c, CsrMatrix::from_triplets(m, n, &trip), b, cones)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Homogeneous self-dual primal-dual interior point method.
    #[default]
    InteriorPoint,
    /// Operator splitting with a cached factorization.
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub backend: Backend,
    pub equilibrate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 100_000, backend: Backend::InteriorPoint, equilibrate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub slack: Vec<f64>,
    pub dual: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub backend: Backend,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Convergence measures of an (unscaled) iterate, all relative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Measures {
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
    /// `|A'z|_inf / (-b'z)` when `b'z < 0`, otherwise infinite.
    pub primal_infeasibility: f64,
    /// `|Ax + s|_inf / (-c'x)` when `c'x < 0`, otherwise infinite.
    pub dual_infeasibility: f64,
}

impl Measures {
    pub fn worst(&self) -> f64 {
        self.pres.max(self.dres).max(self.gap)
    }
}

pub(crate) fn measure(prog: &ConicProgram, x: &[f64], s: &[f64], z: &[f64]) -> Measures {
    let ax = prog.a.mul_vec(x);
    let atz = prog.a.tmul_vec(z);
    let r_p: Vec<f64> = ax.iter().zip(s).zip(&prog.b).map(|((a, s), b)| a + s - b).collect();
    let r_d: Vec<f64> = atz.iter().zip(&prog.c).map(|(a, c)| a + c).collect();
    let cx = dot(&prog.c, x);
    let bz = dot(&prog.b, z);
    let pres = inf_norm(&r_p) / (1.0 + inf_norm(&prog.b).max(inf_norm(&ax)).max(inf_norm(s)));
    let dres = inf_norm(&r_d) / (1.0 + inf_norm(&prog.c).max(inf_norm(&atz)));
    let gap = (cx + bz).abs() / (1.0 + cx.abs().max(bz.abs()));
    let primal_infeasibility = if bz < 0.0 { inf_norm(&atz) / -bz } else { f64::INFINITY };
    let axs: Vec<f64> = ax.iter().zip(s).map(|(a, s)| a + s).collect();
    let dual_infeasibility = if cx < 0.0 { inf_norm(&axs) / -cx } else { f64::INFINITY };
    Measures { pres, dres, gap, primal_infeasibility, dual_infeasibility }
}

/// Raw solver output in the scaled space.
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
}

/// Solves `prog` with the default backend.
pub fn solve(prog: &ConicProgram, tol: f64, max_iter: usize) -> Result<SolveReport> {
    solve_with(prog, &SolverOptions { tol, max_iter, ..SolverOptions::default() })
}

pub fn solve_with(prog: &ConicProgram, opts: &SolverOptions) -> Result<SolveReport> {
    prog.validate()?;
    if !(opts.tol > 0.0) {
        return Err(invalid(format!("solver tolerance must be positive, got {}", opts.tol)));
    }
    let (scaled, eq) = if opts.equilibrate {
        let (a, eq) = ruiz(&prog.a, &prog.cones, RUIZ_SWEEPS);
        let c = prog.c.iter().zip(&eq.col).map(|(c, d)| c * d).collect();
        let b = prog.b.iter().zip(&eq.row).map(|(b, e)| b * e).collect();
        (ConicProgram { c, a, b, cones: prog.cones.clone() }, eq)
    } else {
        (prog.clone(), Equilibration::identity(prog.n_rows(), prog.n_vars()))
    };
    let unscaled = |x: &[f64], s: &[f64], z: &[f64]| -> Measures {
        measure(prog, &eq.unscale_x(x), &eq.unscale_s(s), &eq.unscale_z(z))
    };
    let raw = match opts.backend {
        Backend::InteriorPoint => ipm::solve(&scaled, opts, &unscaled),
        Backend::Admm => admm::solve(&scaled, opts, &unscaled),
    };
    let x = eq.unscale_x(&raw.x);
    let s = eq.unscale_s(&raw.s);
    let z = eq.unscale_z(&raw.z);
    let m = measure(prog, &x, &s, &z);
    Ok(SolveReport {
        status: raw.status,
        objective: dot(&prog.c, &x),
        dual_objective: -dot(&prog.b, &z),
        primal: x,
        slack: s,
        dual: z,
        primal_residual: m.pres,
        dual_residual: m.dres,
        gap: m.gap,
        iterations: raw.iterations,
        backend: opts.backend,
    })
}
