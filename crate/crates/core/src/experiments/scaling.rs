//! Monte Carlo study of the best-λ ℓ2 error as n grows, and of active-set sizes at the
//! theory penalty.
//!
//! Each cell `(n, p)` owns one design, drawn from `replication_rng(cell_seed, 0)` with
//! `cell_seed = seed + 1_000_003·(cell index + 1)`; replication `r` of that cell draws its
//! support, signs and noise from stream `r + 1` of the same key.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{best_error_on_path, gaussian_vector, median, replication_rng, theory_lambda};
use crate::denoised::xi_path;
use crate::diagnostics::{multiplier_size, sparse_eig_with, EigMode, SparseEigOptions};
use crate::error::{Error, Result};
use crate::model::{build_gram, CoefficientVector, DesignMatrix, RegressionProblem, TruthSpec};
use crate::solver::{lasso_path, PathOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignFamily {
    /// Independent standard normal entries, columns rescaled to `‖X_k‖² = n`.
    Gaussian,
    /// `√n·[I; 0]`, requires `p ≤ n`.
    Orthogonal,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingScenario {
    pub family: DesignFamily,
    pub ns: Vec<usize>,
    /// `p = round(p_ratio·n)` in every cell.
    pub p_ratio: f64,
    pub s: usize,
    pub sigma: f64,
    pub beta_min: f64,
    /// Penalty rule `multiplier·σ·e·√(n·ln p)`.
    pub multiplier: f64,
    pub e: f64,
    pub replications: usize,
    pub seed: u64,
    /// The path is followed down to `path_floor·σ·√(n·ln p)` (to 0 when σ = 0).
    pub path_floor: f64,
    /// Report `φ_min(⌈e²s⌉)` per cell and the matching rate bound.
    pub eigen: bool,
}

impl Default for ScalingScenario {
    fn default() -> Self {
        Self {
            family: DesignFamily::Gaussian,
            ns: vec![100, 200, 400, 800],
            p_ratio: 2.0,
            s: 5,
            sigma: 1.0,
            beta_min: 1.0,
            multiplier: 2.0,
            e: 1.0,
            replications: 50,
            seed: 1,
            path_floor: 0.25,
            eigen: false,
        }
    }
}

impl ScalingScenario {
    pub fn p_for(&self, n: usize) -> usize {
        ((self.p_ratio * n as f64).round() as usize).max(1)
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        theory_lambda(self.multiplier, self.sigma, self.e, n, self.p_for(n))
    }

    pub fn cell_seed(&self, cell: usize) -> u64 {
        self.seed.wrapping_add(1_000_003u64.wrapping_mul(cell as u64 + 1))
    }

    fn validate(&self) -> Result<()> {
        if self.ns.is_empty() || self.replications == 0 {
            return Err(Error::InvalidInput("need at least one cell and one replication".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !(self.beta_min > 0.0 && self.beta_min.is_finite()) {
            return Err(Error::InvalidInput("sigma must be >= 0 and beta_min > 0".into()));
        }
        if !(self.p_ratio > 0.0) || !(self.path_floor >= 0.0) || !(self.multiplier > 0.0) || !(self.e > 0.0) {
            return Err(Error::InvalidInput("p_ratio, multiplier and e must be positive".into()));
        }
        for &n in &self.ns {
            let p = self.p_for(n);
            if n < 2 || self.s == 0 || self.s > p {
                return Err(Error::InvalidInput(format!("need n >= 2 and 1 <= s <= p, got n={n} p={p} s={}", self.s)));
            }
            if self.family == DesignFamily::Orthogonal && p > n {
                return Err(Error::InvalidInput(format!("orthogonal design needs p <= n, got n={n} p={p}")));
            }
        }
        Ok(())
    }
}

pub fn cell_design(scenario: &ScalingScenario, cell: usize) -> Result<Arc<DesignMatrix>> {
    let n = scenario.ns[cell];
    let p = scenario.p_for(n);
    let x = match scenario.family {
        DesignFamily::Orthogonal => DMatrix::from_fn(n, p, |i, j| if i == j { (n as f64).sqrt() } else { 0.0 }),
        DesignFamily::Gaussian => {
            let mut rng = replication_rng(scenario.cell_seed(cell), 0);
            let mut x = DMatrix::from_fn(n, p, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            for mut col in x.column_iter_mut() {
                let scale = (n as f64).sqrt() / col.norm();
                col *= scale;
            }
            x
        }
    };
    Ok(Arc::new(DesignMatrix::new(x)?))
}

fn draw_truth(rng: &mut ChaCha8Rng, p: usize, s: usize, beta_min: f64, sigma: f64) -> Result<TruthSpec> {
    let mut support: Vec<usize> = sample(rng, p, s).into_vec();
    support.sort_unstable();
    let mut beta = vec![0.0; p];
    for k in support {
        beta[k] = if rng.random::<bool>() { beta_min } else { -beta_min };
    }
    TruthSpec::new(CoefficientVector::from_vec(beta), sigma)
}

fn replication_problem(
    scenario: &ScalingScenario,
    cell: usize,
    design: &Arc<DesignMatrix>,
    replication: usize,
) -> Result<RegressionProblem> {
    let mut rng = replication_rng(scenario.cell_seed(cell), replication as u64 + 1);
    let truth = draw_truth(&mut rng, design.p(), scenario.s, scenario.beta_min, scenario.sigma)?;
    let noise = gaussian_vector(&mut rng, design.n(), scenario.sigma);
    RegressionProblem::simulated(design.clone(), truth, noise)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReplication {
    pub n: usize,
    pub p: usize,
    pub replication: usize,
    pub best_lambda: f64,
    pub best_error_sq: f64,
    pub theory_lambda: f64,
    pub theory_error_sq: f64,
    pub theory_active: usize,
    /// `best_error_sq / (σ²·s·ln p/n)`; `None` when σ = 0.
    pub normalized: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub median_best_error_sq: f64,
    pub median_theory_error_sq: f64,
    pub median_normalized: Option<f64>,
    pub max_normalized: Option<f64>,
    /// `φ_min(⌈e²s⌉)` of the cell's Gram matrix (heuristic above the enumeration cap).
    pub phi_min: Option<f64>,
    pub phi_min_exact: Option<bool>,
    /// `σ²·s·ln p/n · e²/φ_min²`, the rate without its unspecified constant.
    pub rate_rhs: Option<f64>,
    /// Largest best-λ error over `rate_rhs` across replications.
    pub sup_ratio: Option<f64>,
    #[serde(skip)]
    pub replications: Vec<ScalingReplication>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub scenario: ScalingScenario,
    pub cells: Vec<CellReport>,
    /// Least-squares slope of ln(median best error) against ln n.
    pub slope: Option<f64>,
    /// Largest over smallest median normalized ratio across cells.
    pub band: Option<f64>,
}

fn run_replication(
    scenario: &ScalingScenario,
    cell: usize,
    design: &Arc<DesignMatrix>,
    replication: usize,
) -> Result<ScalingReplication> {
    let n = design.n();
    let p = design.p();
    let problem = replication_problem(scenario, cell, design, replication)?;
    let truth = problem.truth().expect("simulated").beta().clone();
    let theory = scenario.lambda_for(n);
    let floor = (scenario.path_floor * scenario.sigma * (n as f64 * (p as f64).ln()).sqrt()).min(theory);
    let path = lasso_path(&problem, floor, &PathOptions { force: true, ..Default::default() })?;
    let (best_lambda, best_error_sq) = best_error_on_path(&path, &truth);
    let at_theory = path.coefficients_at(theory);
    let theory_error_sq = (at_theory.as_vector() - truth.as_vector()).norm_squared();
    let scale = scenario.sigma * scenario.sigma * scenario.s as f64 * (p as f64).ln() / n as f64;
    Ok(ScalingReplication {
        n,
        p,
        replication,
        best_lambda,
        best_error_sq,
        theory_lambda: theory,
        theory_error_sq,
        theory_active: at_theory.support().len(),
        normalized: (scale > 0.0).then(|| best_error_sq / scale),
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn scaling_experiment(scenario: &ScalingScenario) -> Result<ScalingReport> {
    scenario.validate()?;
    let mut cells = Vec::with_capacity(scenario.ns.len());
    for (cell, &n) in scenario.ns.iter().enumerate() {
        let design = cell_design(scenario, cell)?;
        let p = design.p();
        let reps: Vec<ScalingReplication> = (0..scenario.replications)
            .into_par_iter()
            .map(|r| run_replication(scenario, cell, &design, r))
            .collect::<Result<_>>()?;
        let best: Vec<f64> = reps.iter().map(|r| r.best_error_sq).collect();
        let theory: Vec<f64> = reps.iter().map(|r| r.theory_error_sq).collect();
        let normalized: Vec<f64> = reps.iter().filter_map(|r| r.normalized).collect();

        let eig = if scenario.eigen {
            let m = multiplier_size(scenario.e, scenario.s, p);
            Some(sparse_eig_with(&build_gram(&design), m, &SparseEigOptions::with_mode(EigMode::Auto))?)
        } else {
            None
        };
        let rate_rhs = eig.as_ref().filter(|r| r.phi_min > 0.0).map(|r| {
            scenario.sigma.powi(2) * scenario.s as f64 * (p as f64).ln() / n as f64 * scenario.e.powi(2)
                / r.phi_min.powi(2)
        });
        let sup_ratio = rate_rhs.filter(|r| *r > 0.0).map(|rhs| best.iter().fold(0.0f64, |m, v| m.max(v / rhs)));
        cells.push(CellReport {
            n,
            p,
            s: scenario.s,
            median_best_error_sq: median(&best),
            median_theory_error_sq: median(&theory),
            median_normalized: (!normalized.is_empty()).then(|| median(&normalized)),
            max_normalized: normalized.iter().copied().reduce(f64::max),
            phi_min: eig.as_ref().map(|r| r.phi_min),
            phi_min_exact: eig.as_ref().map(|r| r.exact),
            rate_rhs,
            sup_ratio,
            replications: reps,
        });
    }
    let usable: Vec<&CellReport> = cells.iter().filter(|c| c.median_best_error_sq > 0.0).collect();
    let slope = least_squares_slope(
        &usable.iter().map(|c| (c.n as f64).ln()).collect::<Vec<_>>(),
        &usable.iter().map(|c| c.median_best_error_sq.ln()).collect::<Vec<_>>(),
    );
    let ratios: Vec<f64> = cells.iter().filter_map(|c| c.median_normalized).collect();
    let band = match (ratios.iter().copied().reduce(f64::min), ratios.iter().copied().reduce(f64::max)) {
        (Some(lo), Some(hi)) if lo > 0.0 => Some(hi / lo),
        _ => None,
    };
    Ok(ScalingReport { scenario: scenario.clone(), cells, slope, band })
}

#[derive(Debug, Clone, Serialize)]
pub struct CellActiveSet {
    pub n: usize,
    pub p: usize,
    pub lambda: f64,
    /// Per replication: largest active set along the ξ-path and active set of β̂^λ.
    pub xi_sup: Vec<usize>,
    pub lambda_active: Vec<usize>,
    pub violations: usize,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActiveSetReport {
    pub e: f64,
    /// `⌈e²s⌉`
    pub bound: usize,
    pub cells: Vec<CellActiveSet>,
    pub violation_rate: f64,
}

/// Compares active-set sizes at the scenario's theory penalty with `⌈e²s⌉`.
pub fn active_set_bound_check(scenario: &ScalingScenario, e: f64) -> Result<ActiveSetReport> {
    scenario.validate()?;
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::InvalidInput(format!("multiplier must be positive, got {e}")));
    }
    let bound = (e * e * scenario.s as f64 - 1e-9).ceil() as usize;
    let mut cells = Vec::new();
    let mut total = 0usize;
    let mut violations = 0usize;
    for (cell, &n) in scenario.ns.iter().enumerate() {
        let design = cell_design(scenario, cell)?;
        let lambda = scenario.lambda_for(n);
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput("theory penalty is zero; sigma must be positive".into()));
        }
        let sizes: Vec<(usize, usize)> = (0..scenario.replications)
            .into_par_iter()
            .map(|r| {
                let problem = replication_problem(scenario, cell, &design, r)?;
                let path = xi_path(&problem, lambda)?;
                let xi_sup = path.segments.iter().map(|s| s.active_set.len()).max().unwrap_or(0);
                let fit = lasso_path(&problem, lambda, &PathOptions { force: true, ..Default::default() })?;
                Ok((xi_sup, fit.coefficients_at(lambda).support().len()))
            })
            .collect::<Result<_>>()?;
        let v = sizes.iter().filter(|(a, b)| *a.max(b) > bound).count();
        total += sizes.len();
        violations += v;
        cells.push(CellActiveSet {
            n,
            p: design.p(),
            lambda,
            xi_sup: sizes.iter().map(|s| s.0).collect(),
            lambda_active: sizes.iter().map(|s| s.1).collect(),
            violations: v,
            violation_rate: v as f64 / sizes.len() as f64,
        });
    }
    Ok(ActiveSetReport { e, bound, cells, violation_rate: violations as f64 / total as f64 })
}

/// Soft-threshold solution on an orthogonal design `XᵀX = n·I`.
pub fn orthogonal_oracle(problem: &RegressionProblem, lambda: f64) -> DVector<f64> {
    let n = problem.n() as f64;
    let z = problem.design().tr_times(problem.response()) / n;
    let t = lambda / (2.0 * n);
    z.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::geometric_grid;

    fn small(family: DesignFamily) -> ScalingScenario {
        ScalingScenario {
            family,
            ns: vec![40, 80],
            p_ratio: if family == DesignFamily::Orthogonal { 0.5 } else { 2.0 },
            s: 3,
            replications: 6,
            ..Default::default()
        }
    }

    #[test]
    fn designs_are_normalized_and_fixed_per_cell() {
        let sc = small(DesignFamily::Gaussian);
        let a = cell_design(&sc, 0).unwrap();
        let b = cell_design(&sc, 0).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert!(a.column_sq_norms().iter().all(|v| (v - 40.0).abs() < 1e-9));
        let p1 = replication_problem(&sc, 0, &a, 1).unwrap();
        let p2 = replication_problem(&sc, 0, &a, 2).unwrap();
        assert_ne!(p1.response(), p2.response());
        assert_eq!(p1.truth().unwrap().sparsity(), 3);
    }

    #[test]
    fn noiseless_cells_recover_exactly() {
        let sc = ScalingScenario { sigma: 0.0, ..small(DesignFamily::Gaussian) };
        let r = scaling_experiment(&sc).unwrap();
        for c in &r.cells {
            assert!(c.replications.iter().all(|x| x.best_error_sq <= 1e-12), "{:?}", c.median_best_error_sq);
        }
    }

    #[test]
    fn orthogonal_cell_beats_soft_threshold_grid() {
        let sc = small(DesignFamily::Orthogonal);
        let design = cell_design(&sc, 1).unwrap();
        for r in 0..sc.replications {
            let prob = replication_problem(&sc, 1, &design, r).unwrap();
            let truth = prob.truth().unwrap().beta().as_vector().clone();
            let path = lasso_path(&prob, 0.0, &PathOptions::default()).unwrap();
            let (_, best) = best_error_on_path(&path, prob.truth().unwrap().beta());
            let top = crate::solver::lambda_max(&prob);
            let oracle = geometric_grid(top, 1e-4, 100)
                .into_iter()
                .map(|l| (orthogonal_oracle(&prob, l) - &truth).norm_squared())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= oracle + 1e-10, "{best} > {oracle}");
        }
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 3.0];
        assert!((least_squares_slope(&x, &[2.0, 0.0, -2.0]).unwrap() + 2.0).abs() < 1e-15);
        assert!(least_squares_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn active_sets_near_lambda_max_are_small() {
        let sc = ScalingScenario { replications: 4, ..small(DesignFamily::Gaussian) };
        let r = active_set_bound_check(&sc, 3.0).unwrap();
        assert_eq!(r.bound, 27);
        assert!(r.cells.iter().all(|c| c.lambda_active.iter().all(|&a| a <= c.p)));
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let sc = ScalingScenario { ns: vec![], ..Default::default() };
        assert!(scaling_experiment(&sc).is_err());
        let sc = ScalingScenario { p_ratio: 2.0, ..small(DesignFamily::Orthogonal) };
        assert!(scaling_experiment(&sc).is_err());
    }
}
