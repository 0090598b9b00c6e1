//! Simulation studies: sinusoid dictionary detection, error-rate scaling in n, active-set
//! size bounds and the two-step thresholding study on block designs.
//!
//! Randomness: every replication draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `replication` (see [`replication_rng`]); normals come from `rand_distr::StandardNormal`.

mod blocks;
mod frequency;
mod scaling;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::CoefficientVector;
use crate::solver::LassoPath;

pub use blocks::{
    block_problem, embedded_block_design, path_sign_scan, two_step_experiment, BlockScenario, PathSignScan,
    TwoStepReplication, TwoStepReport,
};
pub use frequency::{
    frequency_experiment, generate_frequency_problem, periodogram, AggregateRow, Category, FrequencyDictionary,
    FrequencyReport, FrequencyRow, FrequencyScenario, PeriodogramPoint, ReplicationResult, SigmaAggregate,
};
pub use scaling::{
    active_set_bound_check, cell_design, orthogonal_oracle, scaling_experiment, ActiveSetReport, CellActiveSet,
    CellReport, DesignFamily, ScalingReplication, ScalingReport, ScalingScenario,
};

/// Generator for one replication: the seed picks the key, the replication index the stream.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

/// `multiplier·σ·e·√(n·ln p)`
pub fn theory_lambda(multiplier: f64, sigma: f64, e: f64, n: usize, p: usize) -> f64 {
    multiplier * sigma * e * (n as f64 * (p as f64).ln()).sqrt()
}

/// Linear-interpolation quantile of `values` (sorted internally), `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Smallest `‖β̂(λ) − β‖₂²` over the whole computed path, and the λ attaining it.
///
/// Within a segment the error is a quadratic in λ, minimized in closed form.
pub fn best_error_on_path(path: &LassoPath, truth: &CoefficientVector) -> (f64, f64) {
    let beta = truth.as_vector();
    let mut best = (path.lambda_max.max(path.lambda_min), beta.norm_squared());
    for seg in &path.segments {
        let u = seg.anchor.as_vector() - beta;
        let d = seg.direction.as_vector();
        let width = seg.lambda_high - seg.lambda_low;
        let dd = d.norm_squared();
        let t = if dd > 0.0 { (-u.dot(d) / dd).clamp(0.0, width) } else { 0.0 };
        for t in [t, 0.0, width] {
            let err = (&u + d * t).norm_squared();
            if err < best.1 {
                best = (seg.lambda_high - t, err);
            }
        }
    }
    best
}
