//! Homotopy (active-set) construction of the full Lasso path in λ.
//!
//! Between events the solution is linear in λ:
//! `β̂(λ) = anchor + (λ_high − λ)·d`, with `d_A = ½ (X_AᵀX_A)⁻¹ s_A` on the active set.
//! Events are a variable joining (`|G_k|` reaches λ) or an active coefficient hitting 0.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DVector;
use serde::Serialize;

use super::coordinate::LassoFit;
use super::kkt::kkt_check;
use crate::error::{Error, Result};
use crate::linalg::GrowingCholesky;
use crate::model::{CoefficientVector, RegressionProblem};

#[derive(Debug, Clone, Copy)]
pub struct PathOptions {
    /// Skip columns whose addition would make the active system singular instead of failing.
    pub force: bool,
    pub max_events: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { force: false, max_events: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Join,
    Drop,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathEvent {
    pub lambda: f64,
    /// Zero-based column index.
    pub column: usize,
    pub kind: EventKind,
    /// Several events fired at the same breakpoint.
    pub tied: bool,
}

impl fmt::Display for PathEvent {
    /// `+k` for a join and `-k` for a drop, with one-based column numbers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.kind {
            EventKind::Join => '+',
            EventKind::Drop => '-',
        };
        write!(f, "{sign}{}", self.column + 1)?;
        if self.tied {
            f.write_str("*")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSegment {
    pub lambda_high: f64,
    pub lambda_low: f64,
    pub active_set: Vec<usize>,
    pub signs: Vec<i8>,
    pub direction: CoefficientVector,
    pub anchor: CoefficientVector,
    /// Events at `lambda_high` that produced this active set.
    pub events: Vec<PathEvent>,
}

impl PathSegment {
    pub fn at(&self, lambda: f64) -> CoefficientVector {
        let t = self.lambda_high - lambda;
        CoefficientVector::new(self.anchor.as_vector() + self.direction.as_vector() * t)
    }

    pub fn event_label(&self) -> String {
        self.events.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoPath {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub p: usize,
    pub segments: Vec<PathSegment>,
    /// Columns skipped under `force` because they were dependent on the active set.
    pub skipped: Vec<usize>,
}

impl LassoPath {
    /// Segment containing λ, if λ lies in `[lambda_min, lambda_max)`. At a breakpoint this is
    /// the segment starting there, whose anchor holds exact zeros for dropped columns.
    pub fn segment_at(&self, lambda: f64) -> Option<&PathSegment> {
        if lambda >= self.lambda_max {
            return None;
        }
        self.segments.iter().find(|s| lambda > s.lambda_low).or(self.segments.last())
    }

    /// β̂(λ). Values below `lambda_min` are clamped to `lambda_min`.
    pub fn coefficients_at(&self, lambda: f64) -> CoefficientVector {
        let lambda = lambda.max(self.lambda_min);
        match self.segment_at(lambda) {
            Some(seg) => seg.at(lambda),
            None => CoefficientVector::zeros(self.p),
        }
    }

    pub fn fit_at(&self, problem: &RegressionProblem, lambda: f64) -> LassoFit {
        let coefficients = self.coefficients_at(lambda);
        let residual = problem.response() - problem.design().times(coefficients.as_vector());
        let kkt = kkt_check(problem, &coefficients, lambda);
        LassoFit { lambda, coefficients, residual, kkt, sweeps: 0 }
    }

    /// Breakpoints from `lambda_max` down to `lambda_min`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.lambda_high).collect();
        if let Some(last) = self.segments.last() {
            out.push(last.lambda_low);
        }
        out
    }

    pub fn events(&self) -> impl Iterator<Item = &PathEvent> {
        self.segments.iter().flat_map(|s| s.events.iter())
    }
}

pub fn lasso_path(problem: &RegressionProblem, lambda_min: f64, opts: &PathOptions) -> Result<LassoPath> {
    if !(lambda_min >= 0.0 && lambda_min.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda_min must be finite and >= 0, got {lambda_min}")));
    }
    let design = problem.design();
    if design.is_flagged() && !opts.force {
        return Err(Error::CollinearDesign { pairs: design.collinear_pairs().to_vec() });
    }
    let p = design.p();
    let xtx = design.cross_product();
    let xty = design.tr_times(problem.response());
    let lmax = 2.0 * xty.amax();
    let mut path = LassoPath { lambda_max: lmax, lambda_min, p, segments: Vec::new(), skipped: Vec::new() };
    if lmax <= lambda_min || lmax == 0.0 {
        return Ok(path);
    }

    let grad_eps = 1e-11 * lmax;
    let tie_eps = 1e-12 * lmax;
    let mut lambda = lmax;
    let mut beta = DVector::<f64>::zeros(p);
    let mut grad = &xty * 2.0;
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut in_active = vec![false; p];
    let mut chol = GrowingCholesky::new();
    let mut skipped: BTreeSet<usize> = BTreeSet::new();
    let mut event_joins: Vec<usize> = Vec::new();
    // columns dropped at the current λ, with the side of the boundary they left from
    let mut just_dropped: Vec<(usize, f64)> = Vec::new();
    let mut events: Vec<PathEvent> = Vec::new();
    let mut n_events = 0usize;

    loop {
        let mut fresh: Vec<usize> = Vec::new();
        for k in 0..p {
            if in_active[k] || skipped.contains(&k) || just_dropped.iter().any(|(j, _)| *j == k) {
                continue;
            }
            if !(event_joins.contains(&k) || grad[k].abs() >= lambda - grad_eps) {
                continue;
            }
            let cross: Vec<f64> = active.iter().map(|&j| xtx[(k, j)]).collect();
            if chol.push(&cross, xtx[(k, k)]) {
                active.push(k);
                signs.push(grad[k].signum());
                in_active[k] = true;
                fresh.push(k);
                events.push(PathEvent { lambda, column: k, kind: EventKind::Join, tied: false });
            } else if opts.force {
                skipped.insert(k);
                path.skipped.push(k);
            } else {
                let mut columns = active.clone();
                columns.push(k);
                columns.sort_unstable();
                return Err(Error::DegeneratePath { columns });
            }
        }

        // a freshly joined column must leave zero in the direction of its gradient
        let mut direction = chol.solve(&signs);
        direction.iter_mut().for_each(|d| *d *= 0.5);
        loop {
            let wrong = active
                .iter()
                .enumerate()
                .find(|(i, k)| fresh.contains(*k) && direction[*i] * signs[*i] <= 0.0)
                .map(|(i, _)| i);
            let Some(i) = wrong else { break };
            let k = active.remove(i);
            signs.remove(i);
            in_active[k] = false;
            events.retain(|e| !(e.column == k && e.kind == EventKind::Join));
            just_dropped.push((k, grad[k].signum()));
            chol = rebuild(&active, xtx)?;
            direction = chol.solve(&signs);
            direction.iter_mut().for_each(|d| *d *= 0.5);
        }

        if events.len() > 1 {
            events.iter_mut().for_each(|e| e.tied = true);
        }
        n_events += events.len();
        if n_events > opts.max_events {
            return Err(Error::DegeneratePath { columns: active.clone() });
        }

        // gradient slope: G(λ − δ) = G(λ) − a·δ
        let mut slope = DVector::<f64>::zeros(p);
        for (i, &j) in active.iter().enumerate() {
            slope.axpy(2.0 * direction[i], &xtx.column(j), 1.0);
        }

        let floor = lambda - lambda_min;
        let mut candidates: Vec<(f64, usize, EventKind)> = Vec::new();
        for k in 0..p {
            if in_active[k] || skipped.contains(&k) {
                continue;
            }
            let dropped_side = just_dropped.iter().find(|(j, _)| *j == k).map(|(_, s)| *s);
            let (g, a) = (grad[k], slope[k]);
            if dropped_side != Some(1.0) && 1.0 - a > 0.0 {
                let delta = (lambda - g) / (1.0 - a);
                if delta > tie_eps {
                    candidates.push((delta, k, EventKind::Join));
                }
            }
            if dropped_side != Some(-1.0) && 1.0 + a > 0.0 {
                let delta = (lambda + g) / (1.0 + a);
                if delta > tie_eps {
                    candidates.push((delta, k, EventKind::Join));
                }
            }
        }
        for (i, &k) in active.iter().enumerate() {
            let (b, d) = (beta[k], direction[i]);
            if b != 0.0 && b * d < 0.0 {
                candidates.push((-b / d, k, EventKind::Drop));
            }
        }
        let step = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);

        let mut dir_full = DVector::<f64>::zeros(p);
        for (i, &k) in active.iter().enumerate() {
            dir_full[k] = direction[i];
        }
        let mut segment = PathSegment {
            lambda_high: lambda,
            lambda_low: lambda_min,
            active_set: active.clone(),
            signs: signs.iter().map(|s| *s as i8).collect(),
            direction: CoefficientVector::new(dir_full.clone()),
            anchor: CoefficientVector::new(beta.clone()),
            events: std::mem::take(&mut events),
        };

        if step >= floor - tie_eps {
            path.segments.push(segment);
            break;
        }

        segment.lambda_low = lambda - step;
        path.segments.push(segment);
        beta.axpy(step, &dir_full, 1.0);
        lambda -= step;

        let mut fired: Vec<(usize, EventKind)> =
            candidates.iter().filter(|c| c.0 <= step + tie_eps).map(|c| (c.1, c.2)).collect();
        fired.sort_by_key(|(k, _)| *k);
        fired.dedup_by_key(|(k, _)| *k);

        just_dropped.clear();
        event_joins.clear();
        let mut any_drop = false;
        for (k, kind) in fired {
            match kind {
                EventKind::Drop => {
                    let i = active.iter().position(|&j| j == k).expect("dropping an active column");
                    just_dropped.push((k, signs[i]));
                    active.remove(i);
                    signs.remove(i);
                    in_active[k] = false;
                    beta[k] = 0.0;
                    any_drop = true;
                    events.push(PathEvent { lambda, column: k, kind, tied: false });
                }
                EventKind::Join => event_joins.push(k),
            }
        }
        if any_drop {
            skipped.clear();
            chol = rebuild(&active, xtx)?;
        }
        grad = gradient(&xty, xtx, &beta, &active);
    }
    Ok(path)
}

fn rebuild(active: &[usize], xtx: &nalgebra::DMatrix<f64>) -> Result<GrowingCholesky> {
    GrowingCholesky::rebuild(active, |i, j| xtx[(i, j)]).map_err(|pos| {
        let mut columns = active[..=pos].to_vec();
        columns.sort_unstable();
        Error::DegeneratePath { columns }
    })
}

/// `G = 2(XᵀY − XᵀX·β)` using the support of β only.
fn gradient(xty: &DVector<f64>, xtx: &nalgebra::DMatrix<f64>, beta: &DVector<f64>, support: &[usize]) -> DVector<f64> {
    let mut g = xty.clone();
    for &j in support {
        g.axpy(-beta[j], &xtx.column(j), 1.0);
    }
    g * 2.0
}
