//! Noise-interpolated responses `Y(ξ) = Xβ + ξε` and the exact piecewise-linear path of
//! the Lasso solution in ξ at a fixed penalty.
//!
//! Between breakpoints the active coefficients move along the least-squares fit of the
//! noise on the active columns, and inactive gradients move linearly:
//! `G_k(ξ) = G_k(ξ_j) + 2(ξ − ξ_j)·X_kᵀ(ε − Xθ̂^M)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::{sparse_eig_with, SparseEigOptions};
use crate::error::{Error, Result};
use crate::model::{build_gram, CoefficientVector, DesignMatrix, RegressionProblem};
use crate::solver::{lasso_path, EventKind, PathOptions};

/// Relative tolerance on QR diagonal entries below which the active columns are rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenoisedProblem {
    base: RegressionProblem,
    xi: f64,
    problem: RegressionProblem,
}

impl DenoisedProblem {
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn base(&self) -> &RegressionProblem {
        &self.base
    }

    /// The regression problem with response `Y(ξ)`.
    pub fn problem(&self) -> &RegressionProblem {
        &self.problem
    }

    pub fn response(&self) -> &DVector<f64> {
        self.problem.response()
    }
}

pub fn denoise(problem: &RegressionProblem, xi: f64) -> Result<DenoisedProblem> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidInput(format!("noise fraction must lie in [0, 1], got {xi}")));
    }
    let noise = problem.noise().ok_or(Error::MissingNoise)?;
    let truth = problem.truth().ok_or(Error::MissingTruth)?;
    let response = if xi == 1.0 {
        problem.response().clone()
    } else {
        problem.design().times(truth.beta().as_vector()) + noise * xi
    };
    let inner =
        RegressionProblem::with_parts(problem.design_arc().clone(), response, Some(truth.clone()), Some(noise * xi));
    Ok(DenoisedProblem { base: problem.clone(), xi, problem: inner })
}

/// `θ̂^M = (X_MᵀX_M)⁻¹X_Mᵀε`, embedded in p coordinates.
pub fn restricted_ols_noise(design: &DesignMatrix, noise: &DVector<f64>, set: &[usize]) -> Result<CoefficientVector> {
    let p = design.p();
    if noise.len() != design.n() {
        return Err(Error::InvalidInput("noise length differs from design height".into()));
    }
    if let Some(&k) = set.iter().find(|&&k| k >= p) {
        return Err(Error::InvalidInput(format!("column {k} out of range")));
    }
    let mut out = DVector::zeros(p);
    if set.is_empty() {
        return Ok(CoefficientVector::new(out));
    }
    let singular = || {
        let mut columns = set.to_vec();
        columns.sort_unstable();
        Error::Singular { columns }
    };
    if set.len() > design.n() {
        return Err(singular());
    }
    let xm = DMatrix::from_fn(design.n(), set.len(), |i, j| design.matrix()[(i, set[j])]);
    let norms: Vec<f64> = xm.column_iter().map(|c| c.norm()).collect();
    let qr = xm.qr();
    let r = qr.r();
    if (0..set.len()).any(|i| !(r[(i, i)].abs() > RANK_TOL * norms[i])) {
        return Err(singular());
    }
    let qte = qr.q().tr_mul(noise);
    let theta = r.solve_upper_triangular(&qte).ok_or_else(singular)?;
    for (i, &k) in set.iter().enumerate() {
        out[k] = theta[i];
    }
    Ok(CoefficientVector::new(out))
}

#[derive(Debug, Clone, Serialize)]
pub struct XiEvent {
    pub xi: f64,
    pub column: usize,
    pub kind: EventKind,
    pub tied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct XiSegment {
    pub xi_start: f64,
    pub xi_end: f64,
    pub active_set: Vec<usize>,
    /// Restricted least-squares fit of the noise on `active_set`.
    pub direction: CoefficientVector,
    /// Solution at `xi_start`.
    pub anchor: CoefficientVector,
    pub events: Vec<XiEvent>,
}

impl XiSegment {
    pub fn at(&self, xi: f64) -> CoefficientVector {
        CoefficientVector::new(self.anchor.as_vector() + self.direction.as_vector() * (xi - self.xi_start))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct XiPath {
    pub lambda: f64,
    pub sigma: f64,
    pub segments: Vec<XiSegment>,
    #[serde(skip)]
    design: Arc<DesignMatrix>,
}

impl XiPath {
    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    /// `0 = ξ₁ < ξ₂ < … < 1`, ending with 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.xi_start).collect();
        out.push(1.0);
        out
    }

    pub fn at(&self, xi: f64) -> CoefficientVector {
        let xi = xi.clamp(0.0, 1.0);
        let seg = self.segments.iter().find(|s| xi < s.xi_end).unwrap_or_else(|| self.segments.last().unwrap());
        seg.at(xi)
    }

    pub fn start(&self) -> &CoefficientVector {
        &self.segments[0].anchor
    }

    pub fn end(&self) -> CoefficientVector {
        self.at(1.0)
    }

    /// Largest ℓ∞ jump between the end of one segment and the anchor of the next.
    pub fn continuity_gap(&self) -> f64 {
        self.segments.windows(2).map(|w| w[0].at(w[0].xi_end).linf_distance(&w[1].anchor)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct XiPathOptions {
    pub max_events: usize,
}

impl Default for XiPathOptions {
    fn default() -> Self {
        Self { max_events: 10_000 }
    }
}

pub fn xi_path(problem: &RegressionProblem, lambda: f64) -> Result<XiPath> {
    xi_path_with(problem, lambda, &XiPathOptions::default())
}

pub fn xi_path_with(problem: &RegressionProblem, lambda: f64, opts: &XiPathOptions) -> Result<XiPath> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("penalty must be positive, got {lambda}")));
    }
    let noise = problem.noise().ok_or(Error::MissingNoise)?.clone();
    let truth = problem.truth().ok_or(Error::MissingTruth)?;
    let design = problem.design_arc().clone();
    let p = design.p();
    let clean = design.times(truth.beta().as_vector());

    let noiseless = RegressionProblem::new(design.clone(), clean.clone())?;
    let start = lasso_path(&noiseless, lambda, &PathOptions::default())?.coefficients_at(lambda);
    let mut beta = start.into_inner();

    let grad_at = |xi: f64, beta: &DVector<f64>| -> DVector<f64> {
        let y = &clean + &noise * xi;
        design.tr_times(&(y - design.times(beta))) * 2.0
    };
    let grad_eps = 1e-10 * lambda;
    let tie_eps = 1e-12;

    let mut xi = 0.0;
    let mut grad = grad_at(xi, &beta);
    let mut in_set = vec![false; p];
    let mut signs = vec![0.0f64; p];
    for k in 0..p {
        if beta[k] != 0.0 || grad[k].abs() >= lambda - grad_eps {
            in_set[k] = true;
            signs[k] = if beta[k] != 0.0 { beta[k].signum() } else { grad[k].signum() };
        }
    }
    let mut just_dropped: Vec<(usize, f64)> = Vec::new();
    let mut pending: Vec<XiEvent> = Vec::new();
    let mut out = XiPath { lambda, sigma: truth.sigma(), segments: Vec::new(), design: design.clone() };
    let mut n_events = 0usize;

    loop {
        for k in 0..p {
            if !in_set[k] && grad[k].abs() >= lambda - grad_eps && !just_dropped.iter().any(|(j, _)| *j == k) {
                in_set[k] = true;
                signs[k] = grad[k].signum();
                pending.push(XiEvent { xi, column: k, kind: EventKind::Join, tied: false });
            }
        }

        // zero coefficients on the boundary must leave zero on the side of their gradient
        let theta = loop {
            let set: Vec<usize> = (0..p).filter(|&k| in_set[k]).collect();
            let theta = restricted_ols_noise(&design, &noise, &set).map_err(|e| match e {
                Error::Singular { columns } => Error::DegeneratePath { columns },
                other => other,
            })?;
            let wrong = set.iter().copied().find(|&k| beta[k] == 0.0 && theta[k] * signs[k] < 0.0);
            match wrong {
                Some(k) => {
                    in_set[k] = false;
                    pending.retain(|e| !(e.column == k && e.kind == EventKind::Join));
                    just_dropped.push((k, signs[k]));
                }
                None => break theta,
            }
        };
        let set: Vec<usize> = (0..p).filter(|&k| in_set[k]).collect();

        if pending.len() > 1 {
            pending.iter_mut().for_each(|e| e.tied = true);
        }
        n_events += pending.len();
        if n_events > opts.max_events {
            return Err(Error::DegeneratePath { columns: set });
        }

        let slope = design.tr_times(&(&noise - design.times(theta.as_vector()))) * 2.0;
        let mut candidates: Vec<(f64, usize, EventKind)> = Vec::new();
        for k in (0..p).filter(|&k| !in_set[k]) {
            let side = just_dropped.iter().find(|(j, _)| *j == k).map(|(_, s)| *s);
            let (g, b) = (grad[k], slope[k]);
            let tau = if b > 0.0 && side != Some(1.0) {
                (lambda - g) / b
            } else if b < 0.0 && side != Some(-1.0) {
                (-lambda - g) / b
            } else {
                continue;
            };
            if tau > tie_eps {
                candidates.push((tau, k, EventKind::Join));
            }
        }
        for &k in &set {
            if beta[k] != 0.0 && beta[k] * theta[k] < 0.0 {
                candidates.push((-beta[k] / theta[k], k, EventKind::Drop));
            }
        }
        let step = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let remaining = 1.0 - xi;

        let mut segment = XiSegment {
            xi_start: xi,
            xi_end: 1.0,
            active_set: set.clone(),
            direction: theta.clone(),
            anchor: CoefficientVector::new(beta.clone()),
            events: std::mem::take(&mut pending),
        };
        if step >= remaining - tie_eps {
            out.segments.push(segment);
            break;
        }
        segment.xi_end = xi + step;
        out.segments.push(segment);
        beta.axpy(step, theta.as_vector(), 1.0);
        xi += step;

        let mut fired: Vec<(usize, EventKind)> =
            candidates.iter().filter(|c| c.0 <= step + tie_eps).map(|c| (c.1, c.2)).collect();
        fired.sort_by_key(|(k, _)| *k);
        fired.dedup_by_key(|(k, _)| *k);
        just_dropped.clear();
        for (k, kind) in fired {
            if kind == EventKind::Drop {
                in_set[k] = false;
                beta[k] = 0.0;
                just_dropped.push((k, signs[k]));
                pending.push(XiEvent { xi, column: k, kind, tied: false });
            }
        }
        grad = grad_at(xi, &beta);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseLevelBound {
    pub largest_set: usize,
    pub phi_min: f64,
    pub phi_min_exact: bool,
    /// `2·log p/n · m̄/φ_min(m̄)² · σ²`
    pub rhs: f64,
    /// Largest `‖θ̂^M‖₂²` over the visited sets.
    pub realized: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    /// `sup_ξ ‖β̂(0) − β̂(ξ)‖₂`, attained at a breakpoint.
    pub sup_shift: f64,
    pub sup_at: f64,
    pub set_sizes: Vec<usize>,
    pub direction_norms: Vec<f64>,
    pub max_direction_norm: f64,
    /// `sup_shift ≤ max_direction_norm`
    pub holds: bool,
    /// Informational comparison with the high-probability noise bound.
    pub noise_bound: Option<NoiseLevelBound>,
}

/// Shift of the solution from its noiseless value, evaluated at every breakpoint.
/// The norm of an affine function is convex, so interval maxima sit at the ends.
pub fn shift_profile(path: &XiPath) -> Vec<(f64, f64)> {
    let p = path.start().len();
    let mut shift = DVector::<f64>::zeros(p);
    let mut out = vec![(0.0, 0.0)];
    for seg in &path.segments {
        shift.axpy(seg.xi_end - seg.xi_start, seg.direction.as_vector(), 1.0);
        out.push((seg.xi_end, shift.norm()));
    }
    out
}

pub fn variance_bound_check(path: &XiPath) -> VarianceReport {
    let (sup_at, sup_shift) =
        shift_profile(path).into_iter().fold((0.0, 0.0), |acc, (xi, v)| if v > acc.1 { (xi, v) } else { acc });
    let set_sizes: Vec<usize> = path.segments.iter().map(|s| s.active_set.len()).collect();
    let direction_norms: Vec<f64> = path.segments.iter().map(|s| s.direction.l2_norm()).collect();
    let max_direction_norm = direction_norms.iter().copied().fold(0.0, f64::max);
    let holds = sup_shift <= max_direction_norm * (1.0 + 1e-12);

    let design = path.design();
    let (n, p) = (design.n(), design.p());
    let largest = set_sizes.iter().copied().max().unwrap_or(0);
    let noise_bound = (largest > 0 && path.sigma > 0.0 && p > 1).then(|| {
        let gram = build_gram(design);
        sparse_eig_with(&gram, largest, &SparseEigOptions::default()).ok()
    });
    let noise_bound = noise_bound.flatten().filter(|r| r.phi_min > 0.0).map(|r| {
        let rhs = 2.0 * (p as f64).ln() / n as f64 * largest as f64 / (r.phi_min * r.phi_min) * path.sigma * path.sigma;
        let realized = max_direction_norm * max_direction_norm;
        NoiseLevelBound {
            largest_set: largest,
            phi_min: r.phi_min,
            phi_min_exact: r.exact,
            rhs,
            realized,
            within: realized <= rhs,
        }
    });
    VarianceReport { sup_shift, sup_at, set_sizes, direction_norms, max_direction_norm, holds, noise_bound }
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub lambda: f64,
    pub multiplier: f64,
    /// `γ = β^λ − β`, the deviation of the noiseless Lasso fit.
    pub gamma: CoefficientVector,
    pub l2_norm: f64,
    pub l1_norm: f64,
    pub eig_size: usize,
    pub phi_min: f64,
    pub phi_min_exact: bool,
    /// `17.5·(λ/n)·√s/φ_min(⌈e·s⌉)`
    pub bound_rhs: f64,
    pub bound_holds: bool,
    /// `‖γ_N‖₁` and `‖γ_K‖₁`.
    pub null_l1: f64,
    pub support_l1: f64,
    pub cone_holds: bool,
    /// `‖γ‖₁ ≤ 2√s‖γ‖₂`
    pub l1_l2_holds: bool,
    /// Penalized excess objective of γ; nonpositive at the noiseless optimum.
    pub excess_objective: f64,
    pub excess_nonpositive: bool,
}

pub fn bias_report(problem: &RegressionProblem, lambda: f64, multiplier: f64) -> Result<BiasReport> {
    bias_report_with(problem, lambda, multiplier, &SparseEigOptions::default())
}

pub fn bias_report_with(
    problem: &RegressionProblem,
    lambda: f64,
    multiplier: f64,
    eig_opts: &SparseEigOptions,
) -> Result<BiasReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::InvalidInput(format!("multiplier must be positive, got {multiplier}")));
    }
    let truth = problem.truth().ok_or(Error::MissingTruth)?;
    let design = problem.design_arc().clone();
    let (n, p) = (design.n(), design.p());
    let s = truth.sparsity();
    if s == 0 {
        return Err(Error::BoundUndefined("true coefficient vector is zero".into()));
    }
    let beta = truth.beta().as_vector();
    let noiseless = RegressionProblem::new(design.clone(), design.times(beta))?;
    let fit = lasso_path(&noiseless, lambda, &PathOptions::default())?.coefficients_at(lambda);
    let gamma = fit.as_vector() - beta;

    let eig_size = ((multiplier * s as f64 - 1e-9).ceil().max(1.0) as usize).min(p);
    let eig = sparse_eig_with(&build_gram(&design), eig_size, eig_opts)?;
    if !(eig.phi_min > 1e-12) {
        return Err(Error::BoundUndefined(format!("sparse minimal eigenvalue vanishes at size {eig_size}")));
    }

    let l2_norm = gamma.norm();
    let l1_norm = gamma.lp_norm(1);
    let sf = s as f64;
    let bound_rhs = 17.5 * (lambda / n as f64) * sf.sqrt() / eig.phi_min;
    let support = truth.support();
    let support_l1: f64 = support.iter().map(|&k| gamma[k].abs()).sum();
    let null_l1 = l1_norm - support_l1;
    let tol = 1e-9 * (1.0 + l1_norm);

    let xg = design.times(&gamma);
    let penalty: f64 =
        (0..p).map(|k| if beta[k] != 0.0 { (beta[k] + gamma[k]).abs() - beta[k].abs() } else { gamma[k].abs() }).sum();
    let excess_objective = xg.norm_squared() + lambda * penalty;
    let obj_scale = 1e-9 * (1.0 + lambda * beta.lp_norm(1));

    Ok(BiasReport {
        lambda,
        multiplier,
        l2_norm,
        l1_norm,
        eig_size,
        phi_min: eig.phi_min,
        phi_min_exact: eig.exact,
        bound_rhs,
        bound_holds: l2_norm <= bound_rhs,
        null_l1,
        support_l1,
        cone_holds: null_l1 <= support_l1 + tol,
        l1_l2_holds: l1_norm <= 2.0 * sf.sqrt() * l2_norm + tol,
        excess_objective,
        excess_nonpositive: excess_objective <= obj_scale,
        gamma: CoefficientVector::new(gamma),
    })
}
