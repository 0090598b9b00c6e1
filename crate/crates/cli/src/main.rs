//! `lasso-recovery`: Lasso fits, exact paths, design diagnostics, two-step recovery and the
//! simulation studies from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 IO failure.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lasso_recovery::io::{to_json_string, write_text};

use commands::{DiagnoseArgs, ExperimentArgs, PathArgs, SolveArgs, TwoStepArgs, XiArgs};
use config::{List, Settings};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lasso_recovery::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_io() => 3,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Named output files; the first one is printed when no output directory is given.
#[derive(Debug, Default)]
pub struct Output {
    files: Vec<(String, String)>,
}

impl Output {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(mut self, name: &str, contents: String) -> Self {
        self.files.push((name.to_string(), contents));
        self
    }
}

const ABOUT: &str = "Lasso fits with duality-gap certificates, exact homotopy paths, design diagnostics \
and recovery experiments. Objective ‖Y − Xβ‖² + λ‖β‖₁; logarithms are natural; indices in inputs and \
outputs are 1-based.";

#[derive(Parser, Debug)]
#[command(name = "lasso-recovery", version, about = ABOUT)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` settings file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write all outputs and run_config.json here instead of printing the main output.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve at one penalty value by coordinate descent.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        design: Option<String>,
        #[arg(long, value_name = "CSV")]
        response: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Relative duality-gap tolerance [default: 1e-8].
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        /// Proceed on designs with collinear columns.
        #[arg(long)]
        force: bool,
    },
    /// Exact piecewise-linear path from lambda_max down to --lambda-min.
    Path {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        design: Option<String>,
        #[arg(long, value_name = "CSV")]
        response: Option<String>,
        #[arg(long)]
        lambda_min: Option<f64>,
        /// Comma-separated penalties at which to report full coefficient vectors.
        #[arg(long, value_name = "L1,L2,...")]
        at: Option<List<f64>>,
        #[arg(long)]
        max_events: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Path in the noise fraction ξ at fixed λ, for a simulated response.
    XiPath {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        design: Option<String>,
        /// True coefficient vector, one column.
        #[arg(long, value_name = "CSV")]
        truth: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Irrepresentable condition and sparse eigenvalues of the design.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        design: Option<String>,
        /// Support indices, e.g. "1,5,9".
        #[arg(long, value_name = "LIST")]
        support: Option<List<usize>>,
        /// Signs on the support, e.g. "+,+,-" [default: all +].
        #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
        signs: Option<List<String>>,
        /// Report φ_min(m), φ_max(m) for m = 1..=this [default: min(p, 3)].
        #[arg(long)]
        sparse_eig_max: Option<usize>,
        /// exact, heuristic or auto [default: auto].
        #[arg(long)]
        mode: Option<String>,
        /// Largest subset count enumerated in exact mode.
        #[arg(long)]
        cap: Option<u128>,
        /// Seed for heuristic restarts.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Lasso followed by hard thresholding at σ·t·√(ln p / n).
    TwoStep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        design: Option<String>,
        #[arg(long, value_name = "CSV")]
        response: Option<String>,
        #[arg(long, value_name = "CSV")]
        truth: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Simulation studies; scenario fields are set in the --config file.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
}

#[derive(Args, Debug)]
struct ExperimentFlags {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Worker threads for replications [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum ExperimentKind {
    /// Two close sinusoids in a sine dictionary.
    Freq(ExperimentFlags),
    /// Best-λ ℓ2 error as n doubles.
    Scaling(ExperimentFlags),
    /// Active-set sizes at the theory penalty against ⌈e²s⌉ (key `bound_e`).
    ActiveSet(ExperimentFlags),
    /// Two-step recovery on designs violating the irrepresentable condition.
    Blocks(ExperimentFlags),
}

fn experiment(
    name: &str,
    flags: ExperimentFlags,
    run: fn(&mut Settings, ExperimentArgs) -> Result<Output, CliError>,
) -> Result<(Common, String, Settings, Output), CliError> {
    let mut s = Settings::load(flags.common.config.as_deref())?;
    if let Some(n) = s.optional::<usize>("threads", flags.threads)? {
        config::check("threads", n > 0, "at least 1")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    let out = run(&mut s, ExperimentArgs { seed: flags.seed, replications: flags.replications })?;
    Ok((flags.common, format!("experiment {name}"), s, out))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, name, settings, output) = match cli.command {
        Command::Solve { common, design, response, lambda, tol, max_sweeps, force } => {
            let mut s = Settings::load(common.config.as_deref())?;
            let out = commands::solve(&mut s, SolveArgs { design, response, lambda, tol, max_sweeps, force })?;
            (common, "solve".to_string(), s, out)
        }
        Command::Path { common, design, response, lambda_min, at, max_events, force } => {
            let mut s = Settings::load(common.config.as_deref())?;
            let out = commands::path(&mut s, PathArgs { design, response, lambda_min, at, max_events, force })?;
            (common, "path".to_string(), s, out)
        }
        Command::XiPath { common, design, truth, sigma, lambda, seed } => {
            let mut s = Settings::load(common.config.as_deref())?;
            let out = commands::xi(&mut s, XiArgs { design, truth, sigma, lambda, seed })?;
            (common, "xi-path".to_string(), s, out)
        }
        Command::Diagnose { common, design, support, signs, sparse_eig_max, mode, cap, seed } => {
            let mut s = Settings::load(common.config.as_deref())?;
            let args = DiagnoseArgs { design, support, signs, sparse_eig_max, mode, cap, seed };
            let out = commands::diagnose(&mut s, args)?;
            (common, "diagnose".to_string(), s, out)
        }
        Command::TwoStep { common, design, response, truth, lambda, sigma, t } => {
            let mut s = Settings::load(common.config.as_deref())?;
            let out = commands::two_step(&mut s, TwoStepArgs { design, response, truth, lambda, sigma, t })?;
            (common, "two-step".to_string(), s, out)
        }
        Command::Experiment { kind } => match kind {
            ExperimentKind::Freq(f) => experiment("freq", f, commands::freq)?,
            ExperimentKind::Scaling(f) => experiment("scaling", f, commands::scaling)?,
            ExperimentKind::ActiveSet(f) => experiment("active-set", f, commands::active_set)?,
            ExperimentKind::Blocks(f) => experiment("blocks", f, commands::blocks)?,
        },
    };
    let run_config = settings.finish(&name)?;
    match common.out {
        Some(dir) => {
            for (file, contents) in &output.files {
                write_text(&dir.join(file), contents)?;
            }
            write_text(&dir.join("run_config.json"), &to_json_string(&run_config)?)?;
        }
        None => {
            if let Some((_, contents)) = output.files.first() {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(contents.as_bytes())
                    .map_err(|e| lasso_recovery::Error::Io { path: PathBuf::from("<stdout>"), source: e })?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
