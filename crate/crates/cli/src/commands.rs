//! Subcommand implementations. Every command returns the files it produces; `main` writes
//! them under `--out` or prints the primary one.

use std::path::PathBuf;
use std::sync::Arc;

use lasso_recovery::diagnostics::{sparse_eig_curve, SparseEigOptions, DEFAULT_ENUMERATION_CAP};
use lasso_recovery::experiments::{
    active_set_bound_check, frequency_experiment, gaussian_vector, replication_rng, scaling_experiment,
    two_step_experiment, BlockScenario, DesignFamily, FrequencyScenario, ScalingScenario,
};
use lasso_recovery::io::{coefficient_table, format_real, read_design_csv, read_vector_csv, to_json_string, CsvTable};
use lasso_recovery::{
    build_gram, irrepresentable_check, lasso_path, solve_at, two_step_recover, variance_bound_check, xi_path,
    CoefficientVector, DesignMatrix, EigMode, PathOptions, RegressionProblem, SignPattern, SolverOptions,
    ThresholdRule, TruthSpec,
};
use serde::Serialize;

use crate::config::{check, List, Settings};
use crate::{CliError, Output};

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|k| k + 1).collect()
}

fn design(settings: &mut Settings, flag: Option<String>) -> Result<Arc<DesignMatrix>, CliError> {
    let path: String = settings.required("design", flag)?;
    Ok(Arc::new(read_design_csv(&PathBuf::from(path))?))
}

fn vector(settings: &mut Settings, key: &str, flag: Option<String>, len: usize) -> Result<CoefficientVector, CliError> {
    let path: String = settings.required(key, flag)?;
    let v = read_vector_csv(&PathBuf::from(&path))?;
    if v.len() != len {
        return Err(CliError::Usage(format!("`{key}` file {path} has {} entries, expected {len}", v.len())));
    }
    Ok(CoefficientVector::new(v))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    check(key, v > 0.0 && v.is_finite(), "a positive finite number")?;
    Ok(v)
}

fn non_negative(key: &str, v: f64) -> Result<f64, CliError> {
    check(key, v >= 0.0 && v.is_finite(), "a finite number >= 0")?;
    Ok(v)
}

#[derive(Debug, Default)]
pub struct SolveArgs {
    pub design: Option<String>,
    pub response: Option<String>,
    pub lambda: Option<f64>,
    pub tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub force: bool,
}

#[derive(Serialize)]
struct SolveReport {
    lambda: f64,
    objective: f64,
    duality_gap: f64,
    max_violation: f64,
    sweeps: usize,
    active_set: Vec<usize>,
    coefficients: CoefficientVector,
}

fn load_problem(
    s: &mut Settings,
    design_flag: Option<String>,
    response_flag: Option<String>,
) -> Result<RegressionProblem, CliError> {
    let design = design(s, design_flag)?;
    let path: String = s.required("response", response_flag)?;
    let y = read_vector_csv(&PathBuf::from(&path))?;
    if y.len() != design.n() {
        return Err(CliError::Usage(format!("response has {} rows, design has {}", y.len(), design.n())));
    }
    Ok(RegressionProblem::new(design, y)?)
}

pub fn solve(s: &mut Settings, a: SolveArgs) -> Result<Output, CliError> {
    let lambda = non_negative("lambda", s.required("lambda", a.lambda)?)?;
    let tol = positive("tol", s.value("tol", a.tol, 1e-8)?)?;
    let max_sweeps = s.value("max_sweeps", a.max_sweeps, SolverOptions::default().max_sweeps)?;
    check("max_sweeps", max_sweeps > 0, "at least 1")?;
    let force = s.switch("force", a.force)?;
    let problem = load_problem(s, a.design, a.response)?;
    let fit = solve_at(&problem, lambda, &SolverOptions { tol, max_sweeps, force })?;
    let report = SolveReport {
        lambda,
        objective: fit.kkt.objective,
        duality_gap: fit.kkt.duality_gap,
        max_violation: fit.kkt.max_violation,
        sweeps: fit.sweeps,
        active_set: one_based(&fit.kkt.active_set),
        coefficients: fit.coefficients.clone(),
    };
    Ok(Output::new()
        .file("fit.json", to_json_string(&report)?)
        .file("coefficients.csv", coefficient_table(&fit.coefficients)?.to_csv_string()))
}

#[derive(Debug, Default)]
pub struct PathArgs {
    pub design: Option<String>,
    pub response: Option<String>,
    pub lambda_min: Option<f64>,
    pub at: Option<List<f64>>,
    pub max_events: Option<usize>,
    pub force: bool,
}

#[derive(Serialize)]
struct PathPoint {
    lambda: f64,
    objective: f64,
    duality_gap: f64,
    max_violation: f64,
    coefficients: CoefficientVector,
}

#[derive(Serialize)]
struct PathReport {
    lambda_max: f64,
    lambda_min: f64,
    breakpoints: Vec<f64>,
    skipped: Vec<usize>,
    at: Vec<PathPoint>,
}

pub fn path(s: &mut Settings, a: PathArgs) -> Result<Output, CliError> {
    let lambda_min = non_negative("lambda_min", s.required("lambda_min", a.lambda_min)?)?;
    let at = s.value("at", a.at, List(Vec::new()))?;
    for &l in &at.0 {
        non_negative("at", l)?;
    }
    let max_events = s.value("max_events", a.max_events, PathOptions::default().max_events)?;
    let force = s.switch("force", a.force)?;
    let problem = load_problem(s, a.design, a.response)?;
    let path = lasso_path(&problem, lambda_min, &PathOptions { force, max_events })?;

    let mut table = CsvTable::new(&["lambda_high", "lambda_low", "event", "active_size"]);
    for seg in &path.segments {
        table.push(vec![
            format_real(seg.lambda_high),
            format_real(seg.lambda_low),
            seg.event_label(),
            seg.active_set.len().to_string(),
        ]);
    }
    let points =
        at.0.iter()
            .map(|&l| {
                let fit = path.fit_at(&problem, l);
                PathPoint {
                    lambda: l,
                    objective: fit.kkt.objective,
                    duality_gap: fit.kkt.duality_gap,
                    max_violation: fit.kkt.max_violation,
                    coefficients: fit.coefficients,
                }
            })
            .collect();
    let report = PathReport {
        lambda_max: path.lambda_max,
        lambda_min: path.lambda_min,
        breakpoints: path.breakpoints(),
        skipped: one_based(&path.skipped),
        at: points,
    };
    Ok(Output::new().file("segments.csv", table.to_csv_string()).file("path.json", to_json_string(&report)?))
}

#[derive(Debug, Default)]
pub struct XiArgs {
    pub design: Option<String>,
    pub truth: Option<String>,
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
}

pub fn xi(s: &mut Settings, a: XiArgs) -> Result<Output, CliError> {
    let lambda = positive("lambda", s.required("lambda", a.lambda)?)?;
    let sigma = non_negative("sigma", s.required("sigma", a.sigma)?)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    let design = design(s, a.design)?;
    let beta = vector(s, "truth", a.truth, design.p())?;
    let noise = gaussian_vector(&mut replication_rng(seed, 0), design.n(), sigma);
    let problem = RegressionProblem::simulated(design, TruthSpec::new(beta, sigma)?, noise)?;
    let path = xi_path(&problem, lambda)?;

    let start = path.start().clone();
    let mut table = CsvTable::new(&["xi", "set_size", "l1_norm", "shift"]);
    let mut row = |xi: f64, size: usize, b: &CoefficientVector| {
        table.push(vec![
            format_real(xi),
            size.to_string(),
            format_real(b.l1_norm()),
            format_real((b.as_vector() - start.as_vector()).norm()),
        ])
    };
    for seg in &path.segments {
        row(seg.xi_start, seg.active_set.len(), &seg.anchor);
    }
    let last = path.segments.last().map_or(0, |s| s.active_set.len());
    row(1.0, last, &path.end());
    let report = variance_bound_check(&path);
    Ok(Output::new().file("xi_path.csv", table.to_csv_string()).file("variance.json", to_json_string(&report)?))
}

#[derive(Debug, Default)]
pub struct DiagnoseArgs {
    pub design: Option<String>,
    pub support: Option<List<usize>>,
    pub signs: Option<List<String>>,
    pub sparse_eig_max: Option<usize>,
    pub mode: Option<String>,
    pub cap: Option<u128>,
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct IrrOut {
    support: Vec<usize>,
    signs: Vec<i8>,
    value: f64,
    holds: bool,
    margin: f64,
    erc: f64,
    worst_column: Option<usize>,
    violating: Vec<usize>,
    condition_number: f64,
}

#[derive(Serialize)]
struct EigOut {
    m: usize,
    phi_min: f64,
    phi_max: f64,
    exact: bool,
    witness_min: Vec<usize>,
    witness_max: Vec<usize>,
}

#[derive(Serialize)]
struct DiagnoseReport {
    n: usize,
    p: usize,
    collinear_pairs: Vec<[usize; 2]>,
    irrepresentable: Option<IrrOut>,
    sparse_eigenvalues: Vec<EigOut>,
}

fn parse_sign(raw: &str) -> Result<i8, CliError> {
    match raw {
        "+" | "+1" | "1" => Ok(1),
        "-" | "-1" => Ok(-1),
        other => Err(CliError::Usage(format!("setting `signs`: expected + or -, got {other:?}"))),
    }
}

pub fn diagnose(s: &mut Settings, a: DiagnoseArgs) -> Result<Output, CliError> {
    let design = design(s, a.design)?;
    let p = design.p();
    let support = s.optional("support", a.support)?;
    let signs = s.optional("signs", a.signs)?;
    let m_max = s.value("sparse_eig_max", a.sparse_eig_max, p.min(3))?;
    check("sparse_eig_max", m_max <= p, &format!("at most p = {p}"))?;
    let mode_name = s.value("mode", a.mode, "auto".to_string())?;
    let mode = match mode_name.as_str() {
        "exact" => EigMode::Exact,
        "heuristic" => EigMode::Heuristic,
        "auto" => EigMode::Auto,
        _ => {
            return Err(CliError::Usage(format!(
                "setting `mode`: expected exact, heuristic or auto, got {mode_name:?}"
            )))
        }
    };
    let cap = s.value("cap", a.cap, DEFAULT_ENUMERATION_CAP)?;
    let seed = s.value("seed", a.seed, 0u64)?;
    let gram = build_gram(&design);

    let irrepresentable = match support {
        None => {
            if signs.is_some() {
                return Err(CliError::Usage("setting `signs` requires `support`".into()));
            }
            None
        }
        Some(List(support)) => {
            check("support", support.iter().all(|&k| k >= 1 && k <= p), &format!("indices in 1..={p}"))?;
            let idx: Vec<usize> = support.iter().map(|k| k - 1).collect();
            let signs = match signs {
                Some(List(raw)) => raw.iter().map(|r| parse_sign(r)).collect::<Result<Vec<_>, _>>()?,
                None => vec![1; idx.len()],
            };
            check("signs", signs.len() == idx.len(), "one sign per support index")?;
            let r = irrepresentable_check(&gram, &idx, &SignPattern::new(signs)?)?;
            Some(IrrOut {
                support: one_based(&r.support),
                signs: r.signs,
                value: r.value,
                holds: r.holds,
                margin: r.margin,
                erc: r.erc,
                worst_column: r.worst_column.map(|k| k + 1),
                violating: one_based(&r.violating),
                condition_number: r.condition_number,
            })
        }
    };
    let opts = SparseEigOptions { mode, cap, seed, ..Default::default() };
    let sizes: Vec<usize> = (1..=m_max).collect();
    let sparse_eigenvalues = sparse_eig_curve(&gram, &sizes, &opts)?
        .into_iter()
        .map(|r| EigOut {
            m: r.m,
            phi_min: r.phi_min,
            phi_max: r.phi_max,
            exact: r.exact,
            witness_min: one_based(&r.witness_min),
            witness_max: one_based(&r.witness_max),
        })
        .collect();
    let report = DiagnoseReport {
        n: design.n(),
        p,
        collinear_pairs: design.collinear_pairs().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        irrepresentable,
        sparse_eigenvalues,
    };
    Ok(Output::new().file("diagnose.json", to_json_string(&report)?))
}

#[derive(Debug, Default)]
pub struct TwoStepArgs {
    pub design: Option<String>,
    pub response: Option<String>,
    pub truth: Option<String>,
    pub lambda: Option<f64>,
    pub sigma: Option<f64>,
    pub t: Option<f64>,
}

#[derive(Serialize)]
struct TwoStepOut {
    lambda: f64,
    cutoff: f64,
    lasso_support: Vec<usize>,
    thresholded_support: Vec<usize>,
    lasso_sign_consistent: bool,
    recovered: bool,
    lasso: CoefficientVector,
    thresholded: CoefficientVector,
}

pub fn two_step(s: &mut Settings, a: TwoStepArgs) -> Result<Output, CliError> {
    let lambda = non_negative("lambda", s.required("lambda", a.lambda)?)?;
    let sigma = positive("sigma", s.required("sigma", a.sigma)?)?;
    let t = positive("t", s.required("t", a.t)?)?;
    let problem = load_problem(s, a.design, a.response)?;
    let beta = vector(s, "truth", a.truth, problem.p())?;
    let problem = problem.with_truth(TruthSpec::new(beta, sigma)?)?;
    let rule = ThresholdRule::new(sigma, t, problem.n(), problem.p())?;
    let out = two_step_recover(&problem, lambda, &rule)?;
    let report = TwoStepOut {
        lambda,
        cutoff: out.cutoff,
        lasso_support: one_based(&out.lasso_support),
        thresholded_support: one_based(&out.thresholded_support),
        lasso_sign_consistent: out.lasso_sign_consistent,
        recovered: out.recovered,
        lasso: out.lasso,
        thresholded: out.thresholded,
    };
    Ok(Output::new().file("two_step.json", to_json_string(&report)?))
}

#[derive(Debug, Default)]
pub struct ExperimentArgs {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn freq(s: &mut Settings, a: ExperimentArgs) -> Result<Output, CliError> {
    let d = FrequencyScenario::default();
    let sc = FrequencyScenario {
        n: s.value("n", None, d.n)?,
        omega1: s.value("omega1", None, d.omega1)?,
        omega2: s.value("omega2", None, d.omega2)?,
        amplitude: s.value("amplitude", None, d.amplitude)?,
        sigmas: s.value("sigmas", None, List(d.sigmas))?.0,
        grid_denominator: s.value("grid_denominator", None, d.grid_denominator)?,
        grid_first: s.value("grid_first", None, d.grid_first)?,
        grid_last: s.value("grid_last", None, d.grid_last)?,
        replications: s.value("replications", a.replications, d.replications)?,
        seed: s.value("seed", a.seed, d.seed)?,
        lambda_points: s.value("lambda_points", None, d.lambda_points)?,
        lambda_ratio: s.value("lambda_ratio", None, d.lambda_ratio)?,
        multiplier: s.value("multiplier", None, d.multiplier)?,
        e: s.value("e", None, d.e)?,
    };
    let report = frequency_experiment(&sc)?;

    let mut reps = CsvTable::new(&[
        "sigma",
        "replication",
        "grid_index",
        "lambda",
        "error_signal",
        "error_resonance",
        "error_other",
        "selected_signal",
        "selected_resonance",
        "selected_other",
        "coef_omega1",
        "coef_omega2",
        "coef_resonance",
        "other_max_abs",
    ]);
    for r in &report.replications {
        for row in &r.rows {
            reps.push(vec![
                format_real(r.sigma),
                (r.replication + 1).to_string(),
                row.grid_index.map_or("theory".to_string(), |i| (i + 1).to_string()),
                format_real(row.lambda),
                format_real(row.error[0]),
                format_real(row.error[1]),
                format_real(row.error[2]),
                row.selected[0].to_string(),
                row.selected[1].to_string(),
                row.selected[2].to_string(),
                format_real(row.coef_omega1),
                format_real(row.coef_omega2),
                format_real(row.coef_resonance),
                format_real(row.other_max_abs),
            ]);
        }
    }
    let mut pg = CsvTable::new(&["sigma", "omega", "inserted", "mean_delta_e", "argmax_count"]);
    for agg in &report.sigmas {
        for (k, omega) in report.omegas.iter().enumerate() {
            pg.push(vec![
                format_real(agg.sigma),
                format_real(*omega),
                report.inserted[k].to_string(),
                opt_real(agg.mean_periodogram[k]),
                agg.argmax_counts[k].to_string(),
            ]);
        }
    }
    Ok(Output::new()
        .file("aggregate.json", to_json_string(&report)?)
        .file("replications.csv", reps.to_csv_string())
        .file("periodogram.csv", pg.to_csv_string()))
}

fn scaling_scenario(s: &mut Settings, a: &ExperimentArgs) -> Result<ScalingScenario, CliError> {
    let d = ScalingScenario::default();
    let family = match s.value("family", None, "gaussian".to_string())?.as_str() {
        "gaussian" => DesignFamily::Gaussian,
        "orthogonal" => DesignFamily::Orthogonal,
        other => {
            return Err(CliError::Usage(format!("setting `family`: expected gaussian or orthogonal, got {other:?}")))
        }
    };
    Ok(ScalingScenario {
        family,
        ns: s.value("ns", None, List(d.ns))?.0,
        p_ratio: s.value("p_ratio", None, d.p_ratio)?,
        s: s.value("s", None, d.s)?,
        sigma: s.value("sigma", None, d.sigma)?,
        beta_min: s.value("beta_min", None, d.beta_min)?,
        multiplier: s.value("multiplier", None, d.multiplier)?,
        e: s.value("e", None, d.e)?,
        replications: s.value("replications", a.replications, d.replications)?,
        seed: s.value("seed", a.seed, d.seed)?,
        path_floor: s.value("path_floor", None, d.path_floor)?,
        eigen: s.value("eigen", None, d.eigen)?,
    })
}

pub fn scaling(s: &mut Settings, a: ExperimentArgs) -> Result<Output, CliError> {
    let sc = scaling_scenario(s, &a)?;
    let report = scaling_experiment(&sc)?;
    let mut reps = CsvTable::new(&[
        "n",
        "p",
        "replication",
        "best_lambda",
        "best_error_sq",
        "theory_lambda",
        "theory_error_sq",
        "theory_active",
        "normalized",
    ]);
    for cell in &report.cells {
        for r in &cell.replications {
            reps.push(vec![
                r.n.to_string(),
                r.p.to_string(),
                (r.replication + 1).to_string(),
                format_real(r.best_lambda),
                format_real(r.best_error_sq),
                format_real(r.theory_lambda),
                format_real(r.theory_error_sq),
                r.theory_active.to_string(),
                opt_real(r.normalized),
            ]);
        }
    }
    Ok(Output::new().file("aggregate.json", to_json_string(&report)?).file("replications.csv", reps.to_csv_string()))
}

pub fn active_set(s: &mut Settings, a: ExperimentArgs) -> Result<Output, CliError> {
    let sc = scaling_scenario(s, &a)?;
    let bound_e = positive("bound_e", s.value("bound_e", None, 2.0)?)?;
    let report = active_set_bound_check(&sc, bound_e)?;
    let mut reps = CsvTable::new(&["n", "p", "replication", "lambda", "xi_sup", "lambda_active", "bound"]);
    for cell in &report.cells {
        for (r, (xi, act)) in cell.xi_sup.iter().zip(&cell.lambda_active).enumerate() {
            reps.push(vec![
                cell.n.to_string(),
                cell.p.to_string(),
                (r + 1).to_string(),
                format_real(cell.lambda),
                xi.to_string(),
                act.to_string(),
                report.bound.to_string(),
            ]);
        }
    }
    Ok(Output::new().file("aggregate.json", to_json_string(&report)?).file("replications.csv", reps.to_csv_string()))
}

pub fn blocks(s: &mut Settings, a: ExperimentArgs) -> Result<Output, CliError> {
    let d = BlockScenario::default();
    let sc = BlockScenario {
        n: s.value("n", None, d.n)?,
        blocks: s.value("blocks", None, d.blocks)?,
        filler: s.value("filler", None, d.filler)?,
        b: s.value("b", None, d.b)?,
        sigma: s.value("sigma", None, d.sigma)?,
        t: s.value("t", None, d.t)?,
        multiplier: s.value("multiplier", None, d.multiplier)?,
        e: s.value("e", None, d.e)?,
        replications: s.value("replications", a.replications, d.replications)?,
        seed: s.value("seed", a.seed, d.seed)?,
    };
    let report = two_step_experiment(&sc)?;
    let mut reps = CsvTable::new(&[
        "replication",
        "lasso_ever_consistent",
        "lasso_consistent_at_lambda",
        "recovered",
        "false_positives",
        "false_negatives",
    ]);
    for r in &report.replications {
        reps.push(vec![
            (r.replication + 1).to_string(),
            r.lasso_ever_consistent.to_string(),
            r.lasso_consistent_at_lambda.to_string(),
            r.recovered.to_string(),
            r.false_positives.to_string(),
            r.false_negatives.to_string(),
        ]);
    }
    Ok(Output::new().file("aggregate.json", to_json_string(&report)?).file("replications.csv", reps.to_csv_string()))
}
