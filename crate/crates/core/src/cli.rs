//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 usage or configuration error, 3 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{
    render_report, run_experiment_with, ExecOptions, ExperimentConfig, ModelSource, ReportFormat,
};
use crate::error::Error;
use crate::filters::{run_filter, FilterKind, FilterSpec, KernelStrategy, PreparedModel};
use crate::linalg::Mat;
use crate::model::{LtiModel, Pi0Choice};
use crate::sim::{load_trajectory, save_trajectory, simulate};
use crate::verify::{steady_state_covariance, verify_model, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mcckf",
    version,
    about = "Maximum-correntropy Kalman filtering with Chandrasekhar recursions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one trajectory and write it as JSON.
    Simulate(SimulateArgs),
    /// Run one filter over a trajectory file.
    Filter(FilterArgs),
    /// Run the Monte-Carlo experiment.
    Bench(BenchArgs),
    /// Cross-check the Chandrasekhar filters against the Riccati filter.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Pi0Arg {
    /// diag(1, 1, 1, 1e-2) (satellite preset only)
    Paper,
    Zero,
    /// Stationary covariance of the filter for the chosen lambda
    Steady,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => ReportFormat::Table,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Process noise variance of the last state (satellite preset)
    #[arg(long)]
    pub q4: Option<f64>,
    #[arg(long, value_enum)]
    pub pi0: Option<Pi0Arg>,
    /// Constant lambda, `adaptive`, or `sigma=<kernel size>`
    #[arg(long)]
    pub lambda: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (stdout if omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trajectory produced by `simulate`
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, default_value = "imcc-riccati")]
    pub filter: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Monte-Carlo runs; fewer than the default lowers fidelity
    #[arg(long)]
    pub runs: Option<usize>,
    /// Filter to include (repeatable); replaces the configured list
    #[arg(long = "filter")]
    pub filters: Vec<String>,
    /// Worker threads for the accuracy pass; does not change results
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use a different lambda for the Riccati reference (fault injection)
    #[arg(long)]
    pub oracle_lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Error annotated with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        CliError {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

/// Configuration problems are usage errors; everything else that goes wrong
/// while processing data is a data error.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidModel(_)
            | Error::Io { .. }
            | Error::Json { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<i32> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a, out).map(|_| EXIT_OK),
        Command::Filter(a) => cmd_filter(&a, out).map(|_| EXIT_OK),
        Command::Bench(a) => cmd_bench(&a, out).map(|_| EXIT_OK),
        Command::Verify(a) => cmd_verify(&a, out),
    }
}

fn parse_strategy(s: &str) -> CliResult<KernelStrategy> {
    s.parse().map_err(CliError::usage)
}

/// Loads the config and applies `--q4`, `--pi0` and `--lambda`.
fn load_config(a: &ModelArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config).map_err(CliError::usage)?;
    let strategy = a.lambda.as_deref().map(parse_strategy).transpose()?;
    if let Some(q4) = a.q4 {
        match &mut cfg.model {
            ModelSource::Preset(p) => p.q4 = q4,
            _ => return Err(CliError::usage("--q4 applies only to the satellite preset")),
        }
    }
    match a.pi0 {
        None => {}
        Some(Pi0Arg::Paper) => match &mut cfg.model {
            ModelSource::Preset(p) => p.pi0 = Pi0Choice::Paper,
            _ => {
                return Err(CliError::usage(
                    "--pi0 paper applies only to the satellite preset",
                ))
            }
        },
        Some(Pi0Arg::Zero) => match &mut cfg.model {
            ModelSource::Preset(p) => p.pi0 = Pi0Choice::Zero,
            other => {
                let m = other.resolve(None).map_err(CliError::usage)?;
                let n = m.state_dim();
                *other =
                    ModelSource::Inline(m.with_pi0(Mat::zeros(n, n)).map_err(CliError::usage)?);
            }
        },
        Some(Pi0Arg::Steady) => {
            let lambda = strategy
                .unwrap_or_default()
                .constant_lambda()
                .ok_or_else(|| CliError::usage("--pi0 steady needs a constant lambda"))?;
            let m = cfg.model.resolve(None).map_err(CliError::usage)?;
            let p = steady_state_covariance(&m, lambda)?;
            cfg.model = ModelSource::Inline(m.with_pi0(p).map_err(CliError::usage)?);
        }
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn resolve_model(cfg: &ExperimentConfig) -> CliResult<LtiModel> {
    cfg.resolve_model().map_err(CliError::usage)
}

fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> CliResult {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
        None => out.write_all(text.as_bytes()).map_err(CliError::usage),
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(&a.model)?;
    let model = resolve_model(&cfg)?;
    let seed = a.seed.unwrap_or(cfg.base_seed);
    let traj = simulate(&model, cfg.n_steps, cfg.shot.as_ref(), seed)?;
    let summary = format!(
        "N={} n={} m={} corrupted={}\n",
        traj.n_steps,
        traj.state_dim(),
        traj.meas_dim(),
        traj.corrupted_instants.len()
    );
    match &a.out {
        Some(p) => {
            save_trajectory(&traj, p).map_err(CliError::usage)?;
            emit(None, &summary, out)
        }
        None => {
            let text = serde_json::to_string(&traj).expect("trajectory serializes");
            emit(None, &(text + "\n"), out)
        }
    }
}

fn cmd_filter(a: &FilterArgs, out: &mut dyn Write) -> CliResult {
    let cfg = load_config(&a.model)?;
    let model = resolve_model(&cfg)?;
    let kind: FilterKind = a.filter.parse().map_err(CliError::usage)?;
    let strategy = match &a.model.lambda {
        Some(s) => parse_strategy(s)?,
        None => KernelStrategy::default(),
    };
    let spec = FilterSpec::new(kind, strategy).map_err(CliError::usage)?;
    let traj = load_trajectory(&a.trajectory).map_err(CliError::data)?;
    traj.check_compatible(&model).map_err(CliError::data)?;
    let ys: Vec<Mat> = (0..=traj.n_steps).map(|k| traj.measurement(k)).collect();
    let prep = PreparedModel::new(&model).map_err(CliError::usage)?;
    let result = run_filter(spec, &prep, &ys)?;
    let text = serde_json::to_string(&result).expect("output serializes") + "\n";
    match &a.out {
        Some(p) => {
            emit(Some(p), &text, out)?;
            let mut line = format!("filter={} lambda={}", result.filter, result.lambda);
            if let Some(alpha) = result.alpha {
                line += &format!(" alpha={alpha}");
            }
            emit(None, &(line + "\n"), out)
        }
        None => {
            if let Some(alpha) = result.alpha {
                emit(None, &format!("alpha={alpha}\n"), out)?;
            }
            emit(None, &text, out)
        }
    }
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg = load_config(&a.model)?;
    if let Some(runs) = a.runs {
        cfg.runs = runs;
    }
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    let strategy = a.model.lambda.as_deref().map(parse_strategy).transpose()?;
    if let Some(strategy) = strategy {
        for f in &mut cfg.filters {
            *f = FilterSpec::new(f.kind, strategy).map_err(CliError::usage)?;
        }
    }
    if !a.filters.is_empty() {
        let strategy = strategy.unwrap_or_default();
        cfg.filters = a
            .filters
            .iter()
            .map(|name| {
                let kind: FilterKind = name.parse()?;
                FilterSpec::new(kind, strategy)
            })
            .collect::<Result<_, _>>()
            .map_err(CliError::usage)?;
    }
    cfg.validate().map_err(CliError::usage)?;
    let opts = ExecOptions {
        threads: a.parallel.unwrap_or(1),
    };
    let report = run_experiment_with(&cfg, opts)?;
    emit(
        a.out.as_deref(),
        &render_report(&report, a.format.into()),
        out,
    )
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> CliResult<i32> {
    let cfg = load_config(&a.model)?;
    let model = resolve_model(&cfg)?;
    let lambda = match &a.model.lambda {
        Some(s) => parse_strategy(s)?
            .constant_lambda()
            .ok_or_else(|| CliError::usage("verify needs a constant lambda or `adaptive`"))?,
        None => KernelStrategy::default()
            .constant_lambda()
            .expect("adaptive is constant"),
    };
    let opts = VerifyOptions {
        n_steps: cfg.n_steps,
        seed: a.seed.unwrap_or(cfg.base_seed),
        shot: cfg.shot.clone(),
        lambda,
        oracle_lambda: a.oracle_lambda,
        ..VerifyOptions::default()
    };
    let report = verify_model(&model, &opts)?;
    let text = match a.format {
        FormatArg::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        FormatArg::Csv => {
            let mut s = String::from("check,max_value,tolerance,worst_step,passed\n");
            for c in &report.checks {
                s += &format!(
                    "{},{:e},{:e},{},{}\n",
                    c.name,
                    c.max_value,
                    c.tolerance,
                    c.worst_step.map_or_else(String::new, |k| k.to_string()),
                    c.passed
                );
            }
            s
        }
        FormatArg::Table => {
            let width = report
                .checks
                .iter()
                .map(|c| c.name.len())
                .max()
                .unwrap_or(0);
            let mut s = format!("alpha={}\n", report.alpha);
            for c in &report.checks {
                s += &format!(
                    "{:<4}  {:<width$}  max {:.3e}  tol {:.1e}  step {}\n",
                    if c.passed { "ok" } else { "FAIL" },
                    c.name,
                    c.max_value,
                    c.tolerance,
                    c.worst_step.map_or_else(|| "-".into(), |k| k.to_string()),
                );
            }
            s
        }
    };
    emit(a.out.as_deref(), &text, out)?;
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_VERIFY)
    }
}
