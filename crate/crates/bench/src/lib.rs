//! Shared fixtures for the benchmarks.

use lasso_recovery::experiments::{cell_design, gaussian_vector, replication_rng, ScalingScenario};
use lasso_recovery::{CoefficientVector, RegressionProblem, TruthSpec};

/// Normalized Gaussian design with `p = 2n`, five unit coefficients and unit noise.
pub fn gaussian_problem(n: usize, seed: u64) -> RegressionProblem {
    let scenario = ScalingScenario { ns: vec![n], seed, ..Default::default() };
    let design = cell_design(&scenario, 0).expect("valid scenario");
    let p = design.p();
    let mut beta = vec![0.0; p];
    for (i, b) in beta.iter_mut().step_by(p / 5).take(5).enumerate() {
        *b = if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let noise = gaussian_vector(&mut replication_rng(seed, 1), n, 1.0);
    let truth = TruthSpec::new(CoefficientVector::from_vec(beta), 1.0).expect("finite truth");
    RegressionProblem::simulated(design, truth, noise).expect("consistent dimensions")
}
