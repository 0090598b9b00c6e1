use std::sync::Arc;

use lasso_recovery::denoised::restricted_ols_noise;
use lasso_recovery::diagnostics::{sparse_eig_with, SparseEigOptions};
use lasso_recovery::experiments::{periodogram, replication_rng};
use lasso_recovery::model::sign_of;
use lasso_recovery::solver::lambda_max;
use lasso_recovery::{
    build_gram, irrepresentable_check, kkt_check, lasso_path, solve_at, xi_path, CoefficientVector, DesignMatrix,
    EigMode, GramMatrix, PathOptions, RegressionProblem, SignPattern, SolverOptions, TruthSpec,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
    let mut rng = replication_rng(seed, 0);
    DMatrix::from_fn(n, p, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    })
}

fn sparse_truth(seed: u64, p: usize, s: usize) -> CoefficientVector {
    let mut rng = replication_rng(seed, 1);
    let mut beta = vec![0.0; p];
    for b in beta.iter_mut().take(s) {
        *b = if rng.random::<bool>() { 1.0 + rng.random::<f64>() } else { -1.0 - rng.random::<f64>() };
    }
    CoefficientVector::from_vec(beta)
}

fn simulated(seed: u64, n: usize, p: usize, s: usize, sigma: f64) -> RegressionProblem {
    let design = Arc::new(DesignMatrix::new(gaussian(seed, n, p)).unwrap());
    let mut rng = replication_rng(seed, 2);
    let noise = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    RegressionProblem::simulated(design, TruthSpec::new(sparse_truth(seed, p, s), sigma).unwrap(), noise).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gram_ignores_row_order(seed in any::<u64>(), shift in 1usize..9) {
        let x = gaussian(seed, 10, 4);
        let permuted = DMatrix::from_fn(10, 4, |i, j| x[((i + shift) % 10, j)]);
        let a = build_gram(&DesignMatrix::new(x).unwrap());
        let b = build_gram(&DesignMatrix::new(permuted).unwrap());
        prop_assert!((a.matrix() - b.matrix()).amax() <= 1e-12 * a.matrix().amax());
    }

    #[test]
    fn signs_survive_positive_scaling(v in proptest::collection::vec(-5.0f64..5.0, 1..30), c in 1e-6f64..1e6) {
        let a = CoefficientVector::from_vec(v.clone());
        let b = CoefficientVector::from_vec(v.iter().map(|x| x * c).collect());
        prop_assert_eq!(sign_of(&a), sign_of(&b));
    }

    #[test]
    fn simulated_response_decomposes(seed in any::<u64>()) {
        let prob = simulated(seed, 12, 20, 3, 0.7);
        let truth = prob.truth().unwrap().beta().as_vector().clone();
        let rest = prob.response() - prob.design().times(&truth) - prob.noise().unwrap();
        prop_assert!(rest.amax() <= 1e-12 * prob.response().amax());
    }

    #[test]
    fn path_objective_decreases_and_segments_certify(seed in any::<u64>()) {
        let prob = simulated(seed, 20, 30, 3, 0.5);
        let path = lasso_path(&prob, 0.0, &PathOptions { force: true, ..Default::default() }).unwrap();
        let mut last = f64::INFINITY;
        for seg in &path.segments {
            for lambda in [seg.lambda_high, 0.5 * (seg.lambda_high + seg.lambda_low)] {
                let fit = path.fit_at(&prob, lambda);
                prop_assert!(fit.kkt.max_violation <= 1e-6 * (1.0 + lambda), "violation {}", fit.kkt.max_violation);
                prop_assert!(fit.kkt.objective <= last * (1.0 + 1e-10) + 1e-10);
                last = fit.kkt.objective;
            }
        }
    }

    #[test]
    fn noiseless_deviation_lies_in_cone(seed in any::<u64>(), frac in 0.01f64..0.5) {
        let prob = simulated(seed, 40, 60, 4, 0.0);
        let truth = prob.truth().unwrap();
        let lambda = frac * lambda_max(&prob);
        let fit = solve_at(&prob, lambda, &SolverOptions { tol: 1e-12, ..Default::default() }).unwrap();
        let gamma = fit.coefficients.as_vector() - truth.beta().as_vector();
        let on: f64 = truth.support().iter().map(|&k| gamma[k].abs()).sum();
        let off: f64 = truth.null_set().iter().map(|&k| gamma[k].abs()).sum();
        let tol = 1e-6 * (1.0 + gamma.norm());
        prop_assert!(off <= on + tol, "{off} > {on}");
        prop_assert!(gamma.lp_norm(1) <= 2.0 * (truth.sparsity() as f64).sqrt() * gamma.norm() + tol);
    }

    #[test]
    fn xi_path_is_continuous_and_orthogonal(seed in any::<u64>()) {
        let prob = simulated(seed, 30, 50, 3, 0.5);
        let lambda = 0.2 * lambda_max(&prob);
        let path = xi_path(&prob, lambda).unwrap();
        prop_assert!(path.continuity_gap() <= 1e-8);
        let noise = prob.noise().unwrap();
        for seg in &path.segments {
            let theta = restricted_ols_noise(prob.design(), noise, &seg.active_set).unwrap();
            let resid = noise - prob.design().times(theta.as_vector());
            let scale = noise.norm() * (prob.n() as f64).sqrt();
            for &k in &seg.active_set {
                prop_assert!(prob.design().column(k).dot(&resid).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn heuristic_brackets_exact(seed in any::<u64>(), m in 1usize..5) {
        let x = gaussian(seed, 12, 9);
        let c = build_gram(&DesignMatrix::new(x).unwrap());
        let exact = sparse_eig_with(&c, m, &SparseEigOptions::with_mode(EigMode::Exact)).unwrap();
        let heur = sparse_eig_with(&c, m, &SparseEigOptions::with_mode(EigMode::Heuristic)).unwrap();
        prop_assert!(heur.phi_min >= exact.phi_min - 1e-12);
        prop_assert!(heur.phi_max <= exact.phi_max + 1e-12);
    }

    #[test]
    fn sparse_eigenvalues_are_monotone(seed in any::<u64>()) {
        let c = build_gram(&DesignMatrix::new(gaussian(seed, 8, 7)).unwrap());
        let opts = SparseEigOptions::with_mode(EigMode::Exact);
        let reports: Vec<_> = (1..=7).map(|m| sparse_eig_with(&c, m, &opts).unwrap()).collect();
        for w in reports.windows(2) {
            prop_assert!(w[1].phi_min <= w[0].phi_min);
            prop_assert!(w[1].phi_max >= w[0].phi_max);
        }
    }

    #[test]
    fn irrepresentable_ignores_relabeling(seed in any::<u64>(), rot in 1usize..6) {
        let x = gaussian(seed, 20, 6);
        let c = build_gram(&DesignMatrix::new(x.clone()).unwrap());
        let support = [0usize, 2];
        let signs = SignPattern::new(vec![1, -1]).unwrap();
        let a = irrepresentable_check(&c, &support, &signs).unwrap();
        let perm: Vec<usize> = (0..6).map(|j| (j + rot) % 6).collect();
        let xp = DMatrix::from_fn(20, 6, |i, j| x[(i, perm[j])]);
        let cp = build_gram(&DesignMatrix::new(xp).unwrap());
        let inverse = |k: usize| perm.iter().position(|&q| q == k).unwrap();
        let b = irrepresentable_check(&cp, &[inverse(0), inverse(2)], &signs).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-10);
    }

    #[test]
    fn periodogram_is_a_projection(seed in any::<u64>(), omega in 0.01f64..0.49) {
        let times: Vec<f64> = (1..=60).map(|i| i as f64).collect();
        let y = DVector::from_column_slice(gaussian(seed, 60, 1).as_slice());
        let pt = &periodogram(&y, &times, &[omega]).unwrap()[0];
        let delta = pt.delta_e.unwrap();
        prop_assert!(delta >= -1e-10 * y.norm_squared());
        let basis = DMatrix::from_fn(60, 2, |i, j| {
            let a = 2.0 * std::f64::consts::PI * omega * times[i];
            if j == 0 { a.sin() } else { a.cos() }
        });
        let q = basis.qr().q();
        let proj = q.tr_mul(&y).norm_squared();
        prop_assert!((delta - proj).abs() <= 1e-8 * proj.max(1e-300));
    }
}

#[test]
fn soft_threshold_oracle_on_orthogonal_columns() {
    // X = diag(d) stacked on zeros: solution is soft(XᵀY, λ/2)/d²
    let d = [1.0, 2.0, 0.5, 3.0];
    let x = DMatrix::from_fn(6, 4, |i, j| if i == j { d[j] } else { 0.0 });
    let y = DVector::from_vec(vec![1.5, -0.2, 0.9, -4.0, 0.3, 0.1]);
    let prob = RegressionProblem::new(Arc::new(DesignMatrix::new(x).unwrap()), y.clone()).unwrap();
    for lambda in [0.0, 0.3, 1.0, 5.0] {
        let fit = solve_at(&prob, lambda, &SolverOptions { tol: 1e-14, ..Default::default() }).unwrap();
        for k in 0..4 {
            let z = d[k] * y[k];
            let want = z.signum() * (z.abs() - lambda / 2.0).max(0.0) / (d[k] * d[k]);
            assert!((fit.coefficients[k] - want).abs() <= 1e-10);
        }
        let report = kkt_check(&prob, &fit.coefficients, lambda);
        assert!(report.max_violation <= 1e-8);
    }
}

#[test]
fn gram_from_matrix_rejects_asymmetry() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 1.0]);
    assert!(GramMatrix::from_matrix(m, None).is_err());
}
