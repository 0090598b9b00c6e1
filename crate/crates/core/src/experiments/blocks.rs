//! Two-step thresholding on a design whose 3-column blocks violate the irrepresentable
//! condition, embedded among orthonormal filler columns.
//!
//! Each block has Gram matrix `[[1, .5, .8], [.5, 1, .8], [.8, .8, 1]]` and truth
//! `(b, b, 0)`; filler columns carry no signal. The design is `√n·Q·B` with `Q` an
//! orthonormal basis drawn from `replication_rng(seed, 0)` and `BᵀB` the block Gram
//! matrix, so `XᵀX/n` equals it exactly. Replication `r` draws noise from stream `r + 1`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{gaussian_vector, replication_rng, theory_lambda};
use crate::diagnostics::irrepresentable_check;
use crate::error::{Error, Result};
use crate::model::{build_gram, sign_of, CoefficientVector, DesignMatrix, RegressionProblem, SignPattern, TruthSpec};
use crate::solver::SolverOptions;
use crate::solver::{lasso_path, PathOptions};
use crate::two_stage::{two_step_recover_with, ThresholdRule};

#[derive(Debug, Clone, Serialize)]
pub struct BlockScenario {
    pub n: usize,
    pub blocks: usize,
    pub filler: usize,
    /// Signal on the first two columns of every block.
    pub b: f64,
    pub sigma: f64,
    pub t: f64,
    pub multiplier: f64,
    pub e: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for BlockScenario {
    fn default() -> Self {
        Self {
            n: 200,
            blocks: 12,
            filler: 84,
            b: 0.5,
            sigma: 0.05,
            t: 5.0,
            multiplier: 2.0,
            e: 1.0,
            replications: 200,
            seed: 1,
        }
    }
}

impl BlockScenario {
    pub fn p(&self) -> usize {
        3 * self.blocks + self.filler
    }

    pub fn lambda(&self) -> f64 {
        theory_lambda(self.multiplier, self.sigma, self.e, self.n, self.p())
    }

    pub fn rule(&self) -> Result<ThresholdRule> {
        ThresholdRule::new(self.sigma, self.t, self.n, self.p())
    }

    pub fn block_gram() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.8, 0.5, 1.0, 0.8, 0.8, 0.8, 1.0])
    }

    pub fn truth(&self) -> Result<TruthSpec> {
        let mut beta = vec![0.0; self.p()];
        for k in 0..self.blocks {
            beta[3 * k] = self.b;
            beta[3 * k + 1] = self.b;
        }
        TruthSpec::new(CoefficientVector::from_vec(beta), self.sigma)
    }
}

pub fn embedded_block_design(scenario: &BlockScenario) -> Result<Arc<DesignMatrix>> {
    let (n, p) = (scenario.n, scenario.p());
    if scenario.blocks == 0 || p > n {
        return Err(Error::InvalidInput(format!("need at least one block and p <= n, got p={p} n={n}")));
    }
    let mut rng = replication_rng(scenario.seed, 0);
    let g = DMatrix::from_fn(n, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let q = g.qr().q();
    let upper = BlockScenario::block_gram().cholesky().expect("block Gram is positive definite").l().transpose();
    let mut b = DMatrix::identity(p, p);
    for k in 0..scenario.blocks {
        b.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&upper);
    }
    Ok(Arc::new(DesignMatrix::new(q * b * (n as f64).sqrt())?))
}

pub fn block_problem(
    scenario: &BlockScenario,
    design: &Arc<DesignMatrix>,
    replication: usize,
) -> Result<RegressionProblem> {
    let mut rng = replication_rng(scenario.seed, replication as u64 + 1);
    let noise = gaussian_vector(&mut rng, scenario.n, scenario.sigma);
    RegressionProblem::simulated(design.clone(), scenario.truth()?, noise)
}

/// Sign consistency of the plain Lasso over the whole path.
#[derive(Debug, Clone, Serialize)]
pub struct PathSignScan {
    /// Penalties examined: every breakpoint, every segment midpoint and `lambda_max`.
    pub checked: usize,
    pub consistent_at: Vec<f64>,
}

impl PathSignScan {
    pub fn ever_consistent(&self) -> bool {
        !self.consistent_at.is_empty()
    }
}

/// Signs are constant on the open interior of each segment, so breakpoints and midpoints
/// cover every sign pattern the path takes.
pub fn path_sign_scan(problem: &RegressionProblem) -> Result<PathSignScan> {
    let truth = sign_of(problem.truth().ok_or(Error::MissingTruth)?.beta());
    let path = lasso_path(problem, 0.0, &PathOptions { force: true, ..Default::default() })?;
    let mut lambdas = vec![path.lambda_max];
    for seg in &path.segments {
        lambdas.push(0.5 * (seg.lambda_high + seg.lambda_low));
        lambdas.push(seg.lambda_low);
    }
    let consistent_at = lambdas.iter().copied().filter(|&l| sign_of(&path.coefficients_at(l)) == truth).collect();
    Ok(PathSignScan { checked: lambdas.len(), consistent_at })
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStepReplication {
    pub replication: usize,
    pub lasso_ever_consistent: bool,
    pub lasso_consistent_at_lambda: bool,
    pub recovered: bool,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoStepReport {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    pub cutoff: f64,
    /// Smallest nonzero |β_k| divided by the cutoff.
    pub signal_to_cutoff: f64,
    /// Irrepresentable value of one block with support of the first two columns.
    pub irrepresentable_value: f64,
    pub lasso_never_consistent: usize,
    pub recovered: usize,
    pub recovery_rate: f64,
    pub replications: Vec<TwoStepReplication>,
}

pub fn two_step_experiment(scenario: &BlockScenario) -> Result<TwoStepReport> {
    if scenario.replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let design = embedded_block_design(scenario)?;
    let rule = scenario.rule()?;
    let lambda = scenario.lambda();
    let gram = build_gram(&design);
    let irr = irrepresentable_check(&gram, &[0, 1], &SignPattern::new(vec![1, 1])?)?;
    let truth = scenario.truth()?;
    let support = truth.support().to_vec();
    let opts = SolverOptions { tol: 1e-10, ..Default::default() };

    let replications: Vec<TwoStepReplication> = (0..scenario.replications)
        .into_par_iter()
        .map(|r| {
            let problem = block_problem(scenario, &design, r)?;
            let scan = path_sign_scan(&problem)?;
            let out = two_step_recover_with(&problem, lambda, &rule, &opts)?;
            let chosen = &out.thresholded_support;
            Ok(TwoStepReplication {
                replication: r,
                lasso_ever_consistent: scan.ever_consistent(),
                lasso_consistent_at_lambda: out.lasso_sign_consistent,
                recovered: out.recovered,
                false_positives: chosen.iter().filter(|k| !support.contains(k)).count(),
                false_negatives: support.iter().filter(|k| !chosen.contains(k)).count(),
            })
        })
        .collect::<Result<_>>()?;
    let recovered = replications.iter().filter(|r| r.recovered).count();
    Ok(TwoStepReport {
        n: scenario.n,
        p: scenario.p(),
        lambda,
        cutoff: rule.cutoff(),
        signal_to_cutoff: scenario.b.abs() / rule.cutoff(),
        irrepresentable_value: irr.value,
        lasso_never_consistent: replications.iter().filter(|r| !r.lasso_ever_consistent).count(),
        recovered,
        recovery_rate: recovered as f64 / replications.len() as f64,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_is_exactly_block_diagonal() {
        let sc = BlockScenario::default();
        let design = embedded_block_design(&sc).unwrap();
        let c = build_gram(&design);
        let c0 = BlockScenario::block_gram();
        for i in 0..sc.p() {
            for j in 0..sc.p() {
                let want = if i < 3 * sc.blocks && j < 3 * sc.blocks && i / 3 == j / 3 {
                    c0[(i % 3, j % 3)]
                } else if i == j {
                    1.0
                } else {
                    0.0
                };
                assert!((c.get(i, j) - want).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn block_violates_irrepresentable() {
        let c = crate::model::GramMatrix::from_matrix(BlockScenario::block_gram(), None).unwrap();
        let r = irrepresentable_check(&c, &[0, 1], &SignPattern::new(vec![1, 1]).unwrap()).unwrap();
        assert!((r.value - 16.0 / 15.0).abs() < 1e-12);
        assert!(!r.holds);
    }

    #[test]
    fn noiseless_lasso_never_sign_consistent() {
        let sc = BlockScenario { sigma: 0.05, ..Default::default() };
        let design = embedded_block_design(&sc).unwrap();
        let noiseless =
            RegressionProblem::simulated(design.clone(), sc.truth().unwrap(), nalgebra::DVector::zeros(sc.n)).unwrap();
        let scan = path_sign_scan(&noiseless).unwrap();
        assert!(!scan.ever_consistent());
        assert!(scan.checked > 3);
    }

    #[test]
    fn signal_clears_four_cutoffs() {
        let sc = BlockScenario::default();
        assert!(sc.b >= 4.0 * sc.rule().unwrap().cutoff());
    }

    #[test]
    fn small_run_recovers() {
        let sc = BlockScenario { replications: 8, ..Default::default() };
        let r = two_step_experiment(&sc).unwrap();
        assert_eq!(r.lasso_never_consistent, 8);
        assert!(r.recovered >= 7);
    }
}
