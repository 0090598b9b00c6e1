use nalgebra::DVector;
use serde::Serialize;

use crate::linalg::least_squares;
use crate::model::{CoefficientVector, RegressionProblem};

/// Floor on the tolerance used to decide membership in the active set.
pub const ACTIVE_TOL_REL: f64 = 1e-7;

/// Optimality certificate for a candidate solution of
/// `min ‖Y − Xβ‖² + λ‖β‖₁`.
///
/// The gradient convention is `G = 2Xᵀ(Y − Xβ)`, so stationarity reads
/// `G_k = λ·sign(β_k)` on the support and `|G_k| ≤ λ` elsewhere.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    #[serde(skip)]
    pub gradient: DVector<f64>,
    pub max_violation: f64,
    pub active_set: Vec<usize>,
    pub duality_gap: f64,
    pub objective: f64,
}

pub fn objective(problem: &RegressionProblem, beta: &CoefficientVector, lambda: f64) -> f64 {
    let r = problem.response() - problem.design().times(beta.as_vector());
    r.norm_squared() + lambda * beta.l1_norm()
}

pub fn kkt_check(problem: &RegressionProblem, beta: &CoefficientVector, lambda: f64) -> KktReport {
    let residual = problem.response() - problem.design().times(beta.as_vector());
    kkt_from_residual(problem, beta, lambda, &residual)
}

pub(crate) fn kkt_from_residual(
    problem: &RegressionProblem,
    beta: &CoefficientVector,
    lambda: f64,
    residual: &DVector<f64>,
) -> KktReport {
    let gradient = problem.design().tr_times(residual) * 2.0;
    let mut max_violation = 0.0f64;
    for (&g, &b) in gradient.iter().zip(beta.iter()) {
        let v = if b != 0.0 { (g - lambda * b.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
        max_violation = max_violation.max(v);
    }

    // dual point ν = 2R·min(1, λ/‖G‖∞) is feasible: ‖Xᵀν‖∞ ≤ λ.
    // At λ = 0 scaling collapses ν to 0, so project R off the column space instead.
    let gmax = gradient.amax();
    let nu = if lambda == 0.0 && gmax > 0.0 {
        let x = problem.design().matrix();
        (residual - x * least_squares(x, residual)) * 2.0
    } else {
        let scale = if gmax > lambda && gmax > 0.0 { lambda / gmax } else { 1.0 };
        residual * (2.0 * scale)
    };
    let dual = nu.dot(problem.response()) - 0.25 * nu.norm_squared();
    let primal = residual.norm_squared() + lambda * beta.l1_norm();
    let duality_gap = (primal - dual).max(0.0);

    let tol = (ACTIVE_TOL_REL * (1.0 + lambda)).max(max_violation);
    let active_set = gradient.iter().enumerate().filter(|(_, g)| g.abs() >= lambda - tol).map(|(k, _)| k).collect();
    KktReport { gradient, max_violation, active_set, duality_gap, objective: primal }
}
