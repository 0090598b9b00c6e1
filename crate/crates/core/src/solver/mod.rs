//! Lasso solvers: pointwise coordinate descent and the exact homotopy path.

mod coordinate;
mod kkt;
mod path;

pub use coordinate::{geometric_grid, lambda_max, solve_at, solve_from, solve_grid, LassoFit, SolverOptions};
pub use kkt::{kkt_check, objective, KktReport, ACTIVE_TOL_REL};
pub use path::{lasso_path, EventKind, LassoPath, PathEvent, PathOptions, PathSegment};
