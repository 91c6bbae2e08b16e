//! Kernel machines with hard affine shape constraints on derivatives.
//!
//! The crate fits functions in a reproducing kernel Hilbert space under
//! constraints of the form `(b0 - U b)_i <= D_i (W f - f0)_i (x)` for every `x`
//! in a box. The infinitely many constraints are replaced by finitely many
//! constraints at the centers of a covering, each strengthened by a
//! second-order cone buffer so that the fitted model satisfies the original
//! constraints everywhere.
//!
//! Modules, bottom-up: [`kernels`] (kernels, derivatives, Gram matrices),
//! [`shapes`] (constraint declarations), [`covering`] (nets and buffers),
//! [`socp`] (conic solvers), [`estimator`] (program assembly, fitting and
//! bounds) and [`verify`] (grid certification and reference fits).
//! [`synthetic`] generates the seeded data sets used in tests and benchmarks.

pub mod covering;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod shapes;
pub mod socp;
pub mod synthetic;
pub mod verify;

pub use covering::{compute_eta, eta_lipschitz_bound, recycled_net, uniform_box_net, Covering, Net, Norm};
pub use error::{Error, Result};
pub use estimator::{
    aposteriori_bound, apriori_bound, apriori_constant, assemble, fit, predict, strong_convexity, AssembledProgram,
    Dataset, FitOptions, FittedModel, Loss, Mode, ObjectiveSpec, Regularization,
};
pub use kernels::{
    build_gram_bundle, eval_derivative_kernel, eval_kernel, AnchorFunction, DifferentialOperator, GramBundle,
    KernelFamily, KernelSpec, OperatorTerm,
};
pub use shapes::{
    catalog, monotone_increasing, non_crossing_system, BiasSet, CatalogShape, CompactBox, ConstraintSystem,
    ShapeConstraint,
};
pub use socp::{project_soc, solve, solve_with, Backend, Cone, ConicProgram, SolveReport, SolveStatus, SolverOptions};
pub use verify::{
    brute_force_reference, check_constraints, margins_csv, monotonicity_metrics, rkhs_distance, ConstraintViolation,
    ViolationReport,
};
