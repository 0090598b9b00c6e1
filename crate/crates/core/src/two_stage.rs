//! Hard-thresholded Lasso and sign-pattern recovery.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{sign_of, CoefficientVector, RegressionProblem};
use crate::solver::{solve_at, SolverOptions};

/// Keeps coefficients with `|β̂_k| ≥ σ·t·√(ln p / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdRule {
    pub sigma: f64,
    pub t: f64,
    pub n: usize,
    pub p: usize,
}

impl ThresholdRule {
    pub fn new(sigma: f64, t: f64, n: usize, p: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma and t must be positive, got {sigma} and {t}")));
        }
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        Ok(Self { sigma, t, n, p })
    }

    pub fn cutoff(&self) -> f64 {
        self.sigma * self.t * ((self.p as f64).ln() / self.n as f64).sqrt()
    }
}

pub fn hard_threshold(fit: &CoefficientVector, rule: &ThresholdRule) -> CoefficientVector {
    let cutoff = rule.cutoff();
    CoefficientVector::new(fit.map(|v| if v.abs() >= cutoff { v } else { 0.0 }))
}

/// Componentwise equality of sign patterns.
pub fn sign_consistent(estimate: &CoefficientVector, truth: &CoefficientVector) -> bool {
    estimate.len() == truth.len() && sign_of(estimate) == sign_of(truth)
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStepOutcome {
    pub lambda: f64,
    pub cutoff: f64,
    pub lasso: CoefficientVector,
    pub thresholded: CoefficientVector,
    pub lasso_support: Vec<usize>,
    pub thresholded_support: Vec<usize>,
    pub lasso_sign_consistent: bool,
    pub recovered: bool,
}

pub fn two_step_recover(problem: &RegressionProblem, lambda: f64, rule: &ThresholdRule) -> Result<TwoStepOutcome> {
    two_step_recover_with(problem, lambda, rule, &SolverOptions::default())
}

pub fn two_step_recover_with(
    problem: &RegressionProblem,
    lambda: f64,
    rule: &ThresholdRule,
    opts: &SolverOptions,
) -> Result<TwoStepOutcome> {
    let truth = problem.truth().ok_or(Error::MissingTruth)?;
    let fit = solve_at(problem, lambda, opts)?;
    let thresholded = hard_threshold(&fit.coefficients, rule);
    Ok(TwoStepOutcome {
        lambda,
        cutoff: rule.cutoff(),
        lasso_support: fit.coefficients.support(),
        thresholded_support: thresholded.support(),
        lasso_sign_consistent: sign_consistent(&fit.coefficients, truth.beta()),
        recovered: sign_consistent(&thresholded, truth.beta()),
        lasso: fit.coefficients,
        thresholded,
    })
}
