//! Cyclic coordinate minimisation for a single penalty value, stopped on a duality-gap
//! certificate.

use nalgebra::DVector;
use serde::Serialize;

use super::kkt::{kkt_from_residual, KktReport};
use crate::error::{Error, Result};
use crate::model::{CoefficientVector, RegressionProblem};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality gap and KKT tolerance.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Run on designs with flagged collinear columns.
    pub force: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_sweeps: 200_000, force: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: CoefficientVector,
    #[serde(skip)]
    pub residual: DVector<f64>,
    pub kkt: KktReport,
    pub sweeps: usize,
}

/// `2·max_k |X_kᵀY|`: the smallest penalty at which β̂ = 0.
pub fn lambda_max(problem: &RegressionProblem) -> f64 {
    2.0 * problem.design().tr_times(problem.response()).amax()
}

/// `count` log-spaced values from `top` down to `top·ratio`.
pub fn geometric_grid(top: f64, ratio: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![top],
        _ => (0..count).map(|i| top * ratio.powf(i as f64 / (count - 1) as f64)).collect(),
    }
}

pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn solve_at(problem: &RegressionProblem, lambda: f64, opts: &SolverOptions) -> Result<LassoFit> {
    solve_from(problem, lambda, opts, None)
}

/// Warm-started variant of [`solve_at`].
pub fn solve_from(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &SolverOptions,
    start: Option<&CoefficientVector>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    let design = problem.design();
    if design.is_flagged() && !opts.force {
        return Err(Error::CollinearDesign { pairs: design.collinear_pairs().to_vec() });
    }
    let p = design.p();
    let x = design.matrix();
    let sq = design.column_sq_norms();
    let mut beta = match start {
        Some(b) if b.len() == p => b.as_vector().clone(),
        _ => DVector::zeros(p),
    };
    let mut residual = problem.response() - x * &beta;
    let half = 0.5 * lambda;

    let mut last_gap = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        for k in 0..p {
            let col = x.column(k);
            let old = beta[k];
            let rho = col.dot(&residual) + sq[k] * old;
            let new = soft_threshold(rho, half) / sq[k];
            if new != old {
                residual.axpy(old - new, &col, 1.0);
                beta[k] = new;
            }
        }
        let coef = CoefficientVector::new(beta.clone());
        let kkt = kkt_from_residual(problem, &coef, lambda, &residual);
        last_gap = kkt.duality_gap / (1.0 + kkt.objective);
        if last_gap <= opts.tol && kkt.max_violation <= opts.tol * (1.0 + lambda) {
            // refresh the residual so the reported certificate is free of update drift
            let residual = problem.response() - x * &beta;
            let kkt = kkt_from_residual(problem, &coef, lambda, &residual);
            return Ok(LassoFit { lambda, coefficients: coef, residual, kkt, sweeps: sweep });
        }
    }
    Err(Error::Convergence { sweeps: opts.max_sweeps, gap: last_gap })
}

/// Pointwise solutions along a decreasing grid, each warm-started from the previous.
pub fn solve_grid(problem: &RegressionProblem, lambdas: &[f64], opts: &SolverOptions) -> Result<Vec<LassoFit>> {
    let mut fits: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let start = fits.last().map(|f| &f.coefficients);
        fits.push(solve_from(problem, lambda, opts, start)?);
    }
    Ok(fits)
}
