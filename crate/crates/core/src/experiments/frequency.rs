//! Detection of two close sinusoids with a dictionary of sine columns sampled at integer times.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;

use super::{best_error_on_path, gaussian_vector, quantile, replication_rng, theory_lambda};
use crate::error::{Error, Result};
use crate::model::{CoefficientVector, DesignMatrix, RegressionProblem, TruthSpec};
use crate::solver::{geometric_grid, lasso_path, PathOptions};

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyScenario {
    pub n: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub amplitude: f64,
    pub sigmas: Vec<f64>,
    /// Regular grid `k/grid_denominator` for `k = grid_first..=grid_last`.
    pub grid_denominator: u32,
    pub grid_first: u32,
    pub grid_last: u32,
    pub replications: usize,
    pub seed: u64,
    pub lambda_points: usize,
    /// Smallest grid penalty as a fraction of the per-replication `lambda_max`.
    pub lambda_ratio: f64,
    pub multiplier: f64,
    pub e: f64,
}

impl Default for FrequencyScenario {
    fn default() -> Self {
        Self {
            n: 200,
            omega1: 0.0545,
            omega2: 0.0555,
            amplitude: 1.0,
            sigmas: vec![0.0, 0.1, 0.2, 1.0],
            grid_denominator: 600,
            grid_first: 3,
            grid_last: 300,
            replications: 100,
            seed: 1,
            lambda_points: 100,
            lambda_ratio: 1e-4,
            multiplier: 2.0,
            e: 1.0,
        }
    }
}

impl FrequencyScenario {
    pub fn times(&self) -> Vec<f64> {
        (1..=self.n).map(|i| i as f64).collect()
    }

    pub fn resonance(&self) -> f64 {
        0.5 * (self.omega1 + self.omega2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Signal,
    Resonance,
    Other,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Signal => "signal",
            Category::Resonance => "resonance",
            Category::Other => "other",
        }
    }
}

/// Sine dictionary on the scenario's times, with category labels.
#[derive(Debug, Clone)]
pub struct FrequencyDictionary {
    pub omegas: Vec<f64>,
    /// `true` for ω1 and ω2, which are not on the regular grid.
    pub inserted: Vec<bool>,
    pub categories: Vec<Category>,
    pub signal: [usize; 2],
    pub resonance: usize,
    /// Grid frequencies left out because their column vanishes at integer times.
    pub dropped: Vec<f64>,
    pub design: Arc<DesignMatrix>,
}

fn sine_column(omega: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| (2.0 * PI * omega * t).sin()).collect()
}

impl FrequencyDictionary {
    pub fn new(scenario: &FrequencyScenario) -> Result<Self> {
        let s = scenario;
        if s.n < 2 {
            return Err(Error::InvalidInput("need at least two time points".into()));
        }
        if s.grid_denominator == 0 || s.grid_first == 0 || s.grid_first > s.grid_last {
            return Err(Error::InvalidInput("frequency grid is empty".into()));
        }
        let times = s.times();
        let den = s.grid_denominator as f64;
        let mut entries: Vec<(f64, bool)> = Vec::new();
        let mut dropped = Vec::new();
        for k in s.grid_first..=s.grid_last {
            let omega = k as f64 / den;
            let col = sine_column(omega, &times);
            if col.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8 * (s.n as f64).sqrt() {
                dropped.push(omega);
            } else {
                entries.push((omega, false));
            }
        }
        for omega in [s.omega1, s.omega2] {
            if !(omega > 0.0 && omega < 0.5) {
                return Err(Error::InvalidInput(format!("signal frequency {omega} outside (0, 1/2)")));
            }
            if entries.iter().any(|(w, _)| (w - omega).abs() < 1e-12) {
                return Err(Error::InvalidInput(format!("signal frequency {omega} coincides with a grid point")));
            }
            entries.push((omega, true));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[1].0 - w[0].0 < 1e-12) {
            return Err(Error::InvalidInput("dictionary frequencies must be distinct".into()));
        }
        let res = s.resonance();
        let resonance = entries
            .iter()
            .position(|(w, ins)| !ins && (w - res).abs() < 1e-12)
            .ok_or_else(|| Error::InvalidInput(format!("midpoint frequency {res} is not on the grid")))?;
        let find = |omega: f64| entries.iter().position(|(w, ins)| *ins && *w == omega).unwrap();
        let signal = [find(s.omega1), find(s.omega2)];
        let categories = (0..entries.len())
            .map(|i| {
                if signal.contains(&i) {
                    Category::Signal
                } else if i == resonance {
                    Category::Resonance
                } else {
                    Category::Other
                }
            })
            .collect();
        let p = entries.len();
        let mut x = DMatrix::zeros(s.n, p);
        for (j, (w, _)) in entries.iter().enumerate() {
            x.set_column(j, &DVector::from_vec(sine_column(*w, &times)));
        }
        let labels = entries.iter().map(|(w, _)| format!("{w}")).collect();
        let design = Arc::new(DesignMatrix::new(x)?.with_labels(labels)?);
        Ok(Self {
            omegas: entries.iter().map(|e| e.0).collect(),
            inserted: entries.iter().map(|e| e.1).collect(),
            categories,
            signal,
            resonance,
            dropped,
            design,
        })
    }

    pub fn p(&self) -> usize {
        self.omegas.len()
    }

    pub fn truth(&self, amplitude: f64, sigma: f64) -> Result<TruthSpec> {
        let mut beta = vec![0.0; self.p()];
        for &k in &self.signal {
            beta[k] = amplitude;
        }
        TruthSpec::new(CoefficientVector::from_vec(beta), sigma)
    }

    pub fn problem(
        &self,
        scenario: &FrequencyScenario,
        sigma: f64,
        seed: u64,
        replication: u64,
    ) -> Result<RegressionProblem> {
        let mut rng = replication_rng(seed, replication);
        let noise = gaussian_vector(&mut rng, scenario.n, sigma);
        RegressionProblem::simulated(self.design.clone(), self.truth(scenario.amplitude, sigma)?, noise)
    }

    pub fn category_size(&self, c: Category) -> usize {
        self.categories.iter().filter(|&&x| x == c).count()
    }
}

/// One noisy draw from the scenario at noise level `sigma` (replication 0 of `seed`).
pub fn generate_frequency_problem(scenario: &FrequencyScenario, sigma: f64, seed: u64) -> Result<RegressionProblem> {
    FrequencyDictionary::new(scenario)?.problem(scenario, sigma, seed, 0)
}

#[derive(Debug, Clone, Serialize)]
pub struct PeriodogramPoint {
    pub omega: f64,
    /// `ΣY² − Σ(Y − Ŷ)²` for the sine/cosine fit at ω; `None` when that fit is degenerate.
    pub delta_e: Option<f64>,
}

pub fn periodogram(y: &DVector<f64>, times: &[f64], omegas: &[f64]) -> Result<Vec<PeriodogramPoint>> {
    if omegas.is_empty() {
        return Err(Error::InvalidInput("frequency grid is empty".into()));
    }
    if y.len() != times.len() {
        return Err(Error::InvalidInput("response and time vectors differ in length".into()));
    }
    let total = y.norm_squared();
    Ok(omegas
        .iter()
        .map(|&omega| {
            let s = DVector::from_iterator(times.len(), times.iter().map(|t| (2.0 * PI * omega * t).sin()));
            let c = DVector::from_iterator(times.len(), times.iter().map(|t| (2.0 * PI * omega * t).cos()));
            let g = Matrix2::new(s.dot(&s), s.dot(&c), s.dot(&c), c.dot(&c));
            let trace = g.trace();
            if !(g.determinant() > 1e-10 * trace * trace) {
                return PeriodogramPoint { omega, delta_e: None };
            }
            let coef = g.try_inverse().unwrap() * Vector2::new(s.dot(y), c.dot(y));
            let resid = y - s * coef[0] - c * coef[1];
            PeriodogramPoint { omega, delta_e: Some(total - resid.norm_squared()) }
        })
        .collect())
}

/// Path statistics of one replication at one penalty value.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyRow {
    pub lambda: f64,
    /// Position on the log grid, or `None` for the theory penalty.
    pub grid_index: Option<usize>,
    /// `√Σ(β_k − β̂_k)²` over each category, in `Category` order.
    pub error: [f64; 3],
    pub selected: [usize; 3],
    pub coef_omega1: f64,
    pub coef_omega2: f64,
    pub coef_resonance: f64,
    pub other_max_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationResult {
    pub sigma: f64,
    pub replication: usize,
    pub lambda_max: f64,
    pub rows: Vec<FrequencyRow>,
    pub best_lambda: f64,
    pub best_error_sq: f64,
    pub best_coefficients: [f64; 3],
    pub max_active: usize,
    pub resonance_always_selected: bool,
    pub periodogram_argmax: f64,
    pub periodogram_peak_at_resonance: bool,
    pub skipped_columns: usize,
    #[serde(skip)]
    pub periodogram: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub grid_index: Option<usize>,
    pub lambda_fraction_median: f64,
    pub mean_selected: [f64; 3],
    pub mean_error: [f64; 3],
    /// 5% and 95% quantiles across replications.
    pub omega1_band: [f64; 2],
    pub omega2_band: [f64; 2],
    pub resonance_band: [f64; 2],
    pub other_max_band: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaAggregate {
    pub sigma: f64,
    pub replications: usize,
    pub resonance_always_selected: usize,
    pub periodogram_peak_at_resonance: usize,
    pub best_error_sq_median: f64,
    pub max_active: usize,
    pub rows: Vec<AggregateRow>,
    /// Mean periodogram over replications, aligned with the dictionary.
    pub mean_periodogram: Vec<Option<f64>>,
    /// Replications whose periodogram peak is at each dictionary frequency.
    pub argmax_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyReport {
    pub p: usize,
    pub omegas: Vec<f64>,
    pub inserted: Vec<bool>,
    pub dropped: Vec<f64>,
    pub resonance: f64,
    pub sigmas: Vec<SigmaAggregate>,
    #[serde(skip)]
    pub replications: Vec<ReplicationResult>,
}

fn run_replication(
    dict: &FrequencyDictionary,
    scenario: &FrequencyScenario,
    sigma: f64,
    replication: usize,
) -> Result<ReplicationResult> {
    let problem = dict.problem(scenario, sigma, scenario.seed, replication as u64)?;
    let truth = problem.truth().expect("simulated").beta().clone();
    let lambda_max = crate::solver::lambda_max(&problem);
    let mut lambdas: Vec<(f64, Option<usize>)> =
        geometric_grid(lambda_max, scenario.lambda_ratio, scenario.lambda_points)
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, Some(i)))
            .collect();
    let theory = theory_lambda(scenario.multiplier, sigma, scenario.e, scenario.n, dict.p());
    if theory > 0.0 {
        lambdas.push((theory, None));
    }
    let floor = lambdas.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    let path = lasso_path(&problem, floor, &PathOptions { force: true, ..Default::default() })?;

    let res = dict.resonance;
    let rows = lambdas
        .iter()
        .map(|&(lambda, grid_index)| {
            let b = path.coefficients_at(lambda);
            let mut error = [0.0f64; 3];
            let mut selected = [0usize; 3];
            let mut other_max_abs = 0.0f64;
            for k in 0..dict.p() {
                let slot = dict.categories[k] as usize;
                error[slot] += (truth[k] - b[k]).powi(2);
                if b[k] != 0.0 {
                    selected[slot] += 1;
                }
                if dict.categories[k] == Category::Other {
                    other_max_abs = other_max_abs.max(b[k].abs());
                }
            }
            FrequencyRow {
                lambda,
                grid_index,
                error: error.map(f64::sqrt),
                selected,
                coef_omega1: b[dict.signal[0]],
                coef_omega2: b[dict.signal[1]],
                coef_resonance: b[res],
                other_max_abs,
            }
        })
        .collect();

    let (best_lambda, best_error_sq) = best_error_on_path(&path, &truth);
    let best = path.coefficients_at(best_lambda);
    let resonance_always_selected = !path.segments.is_empty()
        && path.segments.iter().all(|seg| {
            let mid = 0.5 * (seg.lambda_high + seg.lambda_low);
            seg.active_set.contains(&res) && seg.at(mid)[res] != 0.0
        });
    let max_active = path.segments.iter().map(|s| s.active_set.len()).max().unwrap_or(0);

    let times = scenario.times();
    let pg = periodogram(problem.response(), &times, &dict.omegas)?;
    let (argmax, _) = pg
        .iter()
        .enumerate()
        .filter(|(i, _)| !dict.inserted[*i])
        .filter_map(|(i, pt)| pt.delta_e.map(|v| (i, v)))
        .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Ok(ReplicationResult {
        sigma,
        replication,
        lambda_max,
        rows,
        best_lambda,
        best_error_sq,
        best_coefficients: [best[dict.signal[0]], best[dict.signal[1]], best[res]],
        max_active,
        resonance_always_selected,
        periodogram_argmax: dict.omegas.get(argmax).copied().unwrap_or(f64::NAN),
        periodogram_peak_at_resonance: argmax == res,
        skipped_columns: path.skipped.len(),
        periodogram: pg.iter().map(|pt| pt.delta_e).collect(),
    })
}

fn aggregate(dict: &FrequencyDictionary, sigma: f64, reps: &[ReplicationResult]) -> SigmaAggregate {
    let nrows = reps.first().map_or(0, |r| r.rows.len());
    let count = reps.len() as f64;
    let band = |f: &dyn Fn(&FrequencyRow) -> f64, i: usize| -> [f64; 2] {
        let v: Vec<f64> = reps.iter().map(|r| f(&r.rows[i])).collect();
        [quantile(&v, 0.05), quantile(&v, 0.95)]
    };
    let rows = (0..nrows)
        .map(|i| {
            let mut mean_selected = [0.0; 3];
            let mut mean_error = [0.0; 3];
            for r in reps {
                for c in 0..3 {
                    mean_selected[c] += r.rows[i].selected[c] as f64 / count;
                    mean_error[c] += r.rows[i].error[c] / count;
                }
            }
            let fractions: Vec<f64> = reps.iter().map(|r| r.rows[i].lambda / r.lambda_max).collect();
            AggregateRow {
                grid_index: reps[0].rows[i].grid_index,
                lambda_fraction_median: quantile(&fractions, 0.5),
                mean_selected,
                mean_error,
                omega1_band: band(&|r| r.coef_omega1, i),
                omega2_band: band(&|r| r.coef_omega2, i),
                resonance_band: band(&|r| r.coef_resonance, i),
                other_max_band: band(&|r| r.other_max_abs, i),
            }
        })
        .collect();
    let p = dict.p();
    let mean_periodogram = (0..p)
        .map(|k| {
            let vals: Option<Vec<f64>> = reps.iter().map(|r| r.periodogram[k]).collect();
            vals.map(|v| v.iter().sum::<f64>() / count)
        })
        .collect();
    let mut argmax_counts = vec![0usize; p];
    for r in reps {
        if let Some(k) = dict.omegas.iter().position(|&w| w == r.periodogram_argmax) {
            argmax_counts[k] += 1;
        }
    }
    let best: Vec<f64> = reps.iter().map(|r| r.best_error_sq).collect();
    SigmaAggregate {
        sigma,
        replications: reps.len(),
        resonance_always_selected: reps.iter().filter(|r| r.resonance_always_selected).count(),
        periodogram_peak_at_resonance: reps.iter().filter(|r| r.periodogram_peak_at_resonance).count(),
        best_error_sq_median: quantile(&best, 0.5),
        max_active: reps.iter().map(|r| r.max_active).max().unwrap_or(0),
        rows,
        mean_periodogram,
        argmax_counts,
    }
}

pub fn frequency_experiment(scenario: &FrequencyScenario) -> Result<FrequencyReport> {
    if scenario.replications == 0 || scenario.lambda_points == 0 {
        return Err(Error::InvalidInput("need at least one replication and one grid point".into()));
    }
    if !(scenario.lambda_ratio > 0.0 && scenario.lambda_ratio < 1.0) {
        return Err(Error::InvalidInput(format!("lambda_ratio must lie in (0, 1), got {}", scenario.lambda_ratio)));
    }
    if scenario.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput("noise levels must be finite and >= 0".into()));
    }
    let dict = FrequencyDictionary::new(scenario)?;
    let mut sigmas = Vec::new();
    let mut replications = Vec::new();
    for &sigma in &scenario.sigmas {
        let reps: Vec<ReplicationResult> = (0..scenario.replications)
            .into_par_iter()
            .map(|r| run_replication(&dict, scenario, sigma, r))
            .collect::<Result<_>>()?;
        sigmas.push(aggregate(&dict, sigma, &reps));
        replications.extend(reps);
    }
    Ok(FrequencyReport {
        p: dict.p(),
        omegas: dict.omegas.clone(),
        inserted: dict.inserted.clone(),
        dropped: dict.dropped.clone(),
        resonance: dict.omegas[dict.resonance],
        sigmas,
        replications,
    })
}
