//! Lasso estimation with certified solutions and exact homotopy paths, design-matrix
//! diagnostics for sparse recovery, the hard-thresholded two-step estimator, and the
//! simulation studies built on them.
//!
//! Objective: `‖Y − Xβ‖₂² + λ‖β‖₁`. Logarithms are natural throughout. Indices are 0-based
//! in the API and 1-based in files written by [`io`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod denoised;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod two_stage;

pub use denoised::{bias_report, denoise, variance_bound_check, xi_path, BiasReport, VarianceReport, XiPath};
pub use diagnostics::{
    irrepresentable_check, multiplier_search, sparse_eig, EigMode, IncoherenceReport, IrrepresentableReport,
    SparseEigReport,
};
pub use error::{Error, Result};
pub use model::{
    build_gram, minimal_l1_representation, CoefficientVector, DesignMatrix, GramMatrix, RegressionProblem, SignPattern,
    TruthSpec,
};
pub use solver::{
    kkt_check, lasso_path, solve_at, KktReport, LassoFit, LassoPath, PathOptions, PathSegment, SolverOptions,
};
pub use two_stage::{hard_threshold, sign_consistent, two_step_recover, ThresholdRule, TwoStepOutcome};
