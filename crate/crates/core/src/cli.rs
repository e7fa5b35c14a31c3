//! Command-line front end: `gen`, `run`, `sweep` and `verify`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::datagen::{gen_random_a, load_dataset, save_dataset, Dataset, SynthSpec};
use crate::error::{Error, ErrorClass};
use crate::format::write_vector;
use crate::metrics::{error_report, ApproxReport, EigenReference, ReportInput, DEFAULT_SMALL_FACTOR, REPORT_COLUMNS};
use crate::pcp::{pcp_degree, quick_pcp, PcpParams};
use crate::pcr::{quick_pcr, reduction_steps, PcrOutput, PcrParams};
use crate::ridge::{DataMatrix, OracleKind, RidgeOracle};
use crate::verify::{run_all, VerifyOptions};

pub const OUT_DIR_ENV: &str = "QUICKPCR_OUT_DIR";
pub const SWEEP_VERSION: &str = "quickpcr sweep v1";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const CONVERGENCE: i32 = 5;
    pub const VERIFY_FAILED: i32 = 6;
}

#[derive(Debug, Parser)]
#[command(name = "quickpcr", version, about = "Principal component projection and regression through ridge regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic random-a dataset bundle.
    Gen(GenArgs),
    /// Run QuickPCP or QuickPCR once.
    Run(RunArgs),
    /// Run a method over a range of polynomial degrees and emit a CSV table.
    Sweep(SweepArgs),
    /// Run the self-verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Relative eigengap around sqrt(lambda).
    #[arg(long)]
    pub a: f64,
    /// Number of rows d'.
    #[arg(long)]
    pub dp: usize,
    /// Number of columns d (even).
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Noise norm relative to ||A x_true||.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Output directory. Defaults to `random-<a>-s<seed>` under $QUICKPCR_OUT_DIR
    /// (or the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, hide_env_values = true, hide = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Quickpcp,
    Quickpcr,
}

/// `cg`, `noisy`, `noisy:K` or `svrg:P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleSpec {
    Cg,
    Noisy(Option<u32>),
    Svrg(usize),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let number = |a: &str| {
            a.parse::<u64>()
                .map_err(|_| format!("`{a}` in oracle `{s}` is not a nonnegative integer"))
        };
        match (name, arg) {
            ("cg", None) => Ok(OracleSpec::Cg),
            ("noisy", None) => Ok(OracleSpec::Noisy(None)),
            ("noisy", Some(k)) => Ok(OracleSpec::Noisy(Some(number(k)? as u32))),
            ("svrg", Some(p)) => Ok(OracleSpec::Svrg(number(p)? as usize)),
            _ => Err(format!("unknown oracle `{s}`; expected cg, noisy:K or svrg:P")),
        }
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Cg => write!(f, "cg"),
            OracleSpec::Noisy(None) => write!(f, "noisy"),
            OracleSpec::Noisy(Some(k)) => write!(f, "noisy:{k}"),
            OracleSpec::Svrg(p) => write!(f, "svrg:{p}"),
        }
    }
}

impl OracleSpec {
    fn kind(&self, ridge_eps: f64) -> OracleKind {
        match *self {
            OracleSpec::Cg => OracleKind::ExactCg { eps: ridge_eps },
            OracleSpec::Noisy(k) => OracleKind::Noisy { k },
            OracleSpec::Svrg(passes) => OracleKind::Svrg {
                passes,
                eps: ridge_eps,
            },
        }
    }
}

/// Settings shared by `run` and `sweep`.
#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Dataset bundle directory (a.qpm, b.qpm, optional eigen.qpm).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Quickpcp)]
    pub method: Method,
    #[arg(long, default_value = "cg")]
    pub oracle: OracleSpec,
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Approximation ratio; 0 selects log(n)/n.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Reduction steps for QuickPCR; defaults to ceil(ln(1/(eps gamma))).
    #[arg(long)]
    pub m: Option<usize>,
    /// Target accuracy used by the default schedules.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Declared ridge accuracy for the cg and svrg oracles.
    #[arg(long, default_value_t = 1e-12)]
    pub ridge_eps: f64,
    /// Multiplier on the default degree schedule.
    #[arg(long, default_value_t = 1.0)]
    pub degree_constant: f64,
    /// Threshold factor of the small denoising error.
    #[arg(long, default_value_t = DEFAULT_SMALL_FACTOR)]
    pub small_factor: f64,
    /// Rescale the matrix to spectral norm one instead of rejecting it.
    #[arg(long)]
    pub scale: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: MethodArgs,
    /// Polynomial degree; defaults to the schedule for `--eps`.
    #[arg(long)]
    pub n: Option<usize>,
    /// Write the output vector here (`.csv` for text).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `A:B:STEP`, inclusive of `B` when reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NRange {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let parsed: Result<Vec<usize>, _> = parts.iter().map(|p| p.parse::<usize>()).collect();
        match parsed.as_deref() {
            Ok(&[start, end, step]) if start >= 1 && step >= 1 && start <= end => Ok(NRange { start, end, step }),
            Ok(&[start, end]) if start >= 1 && start <= end => Ok(NRange { start, end, step: 1 }),
            _ => Err(format!(
                "`{s}` is not a range A:B:STEP with 1 <= A <= B and STEP >= 1"
            )),
        }
    }
}

impl NRange {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step).collect()
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: MethodArgs,
    #[arg(long = "n-range")]
    pub n_range: NRange,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long, requires = "out")]
    pub gnuplot: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub tamper_coeff: Option<usize>,
}

/// Errors surfaced by the command layer.
#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Usage(String),
    VerifyFailed { failed: usize, total: usize },
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::VerifyFailed { failed, total } => {
                write!(f, "{failed} of {total} verification suites failed")
            }
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => match e.class() {
                ErrorClass::Validation => exit::VALIDATION,
                ErrorClass::Io => exit::IO,
                ErrorClass::Format => exit::FORMAT,
                ErrorClass::Convergence => exit::CONVERGENCE,
            },
            CliError::Usage(_) => exit::VALIDATION,
            CliError::VerifyFailed { .. } => exit::VERIFY_FAILED,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Regular output goes to `out`, diagnostics to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::VALIDATION } else { exit::OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
        Command::Verify(a) => cmd_verify(&a, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Lib(Error::io(path, e))
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Lib(Error::io("<stdout>", e))
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> CliResult<()> {
    let spec = SynthSpec {
        d_prime: args.dp,
        d: args.d,
        a: args.a,
        lambda: args.lambda,
        seed: args.seed,
        noise_scale: args.noise,
    };
    let dir = match &args.out {
        Some(p) => p.clone(),
        None => args
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."))
            .join(format!("random-{}-s{}", args.a, args.seed)),
    };
    let data = gen_random_a(&spec)?;
    let written = save_dataset(&dir, &data)?;
    writeln!(out, "dataset {}", dir.display()).map_err(stdout_err)?;
    for p in &written {
        writeln!(out, "  wrote {}", p.display()).map_err(stdout_err)?;
    }
    write!(out, "{}", spec.manifest()).map_err(stdout_err)?;
    Ok(())
}

fn load(common: &MethodArgs) -> CliResult<Dataset> {
    Ok(load_dataset(&common.dataset, common.scale)?)
}

/// Fully resolved parameters of one run at degree `n`.
#[derive(Debug, Clone, Copy)]
struct Plan {
    pcp: PcpParams,
    m: usize,
}

fn plan(common: &MethodArgs, n: Option<usize>) -> CliResult<Plan> {
    let n = match n {
        Some(n) => n,
        None => {
            if common.gamma == 0.0 {
                return Err(CliError::Usage(
                    "--gamma 0 selects gamma = log(n)/n, which needs an explicit --n".into(),
                ));
            }
            pcp_degree(common.gamma, common.eps, common.degree_constant)?
        }
    };
    let pcp = PcpParams::new(common.lambda, common.gamma, n)?;
    let m = match common.m {
        Some(m) => m,
        None => reduction_steps(pcp.gamma_eff(), common.eps)?,
    };
    Ok(Plan { pcp, m })
}

enum Outcome {
    Pcp { chi: DVector<f64>, xi: DVector<f64> },
    Pcr(PcrOutput),
}

fn execute_plan(
    common: &MethodArgs,
    matrix: &Arc<DataMatrix>,
    b: &DVector<f64>,
    plan: &Plan,
) -> CliResult<(Outcome, usize)> {
    let mut oracle = RidgeOracle::new(
        matrix.clone(),
        common.lambda,
        common.oracle.kind(common.ridge_eps),
        common.seed,
    )?;
    let outcome = match common.method {
        Method::Quickpcp => {
            let chi = matrix.apply_t(b);
            let xi = quick_pcp(&mut oracle, &chi, &plan.pcp)?;
            Outcome::Pcp { chi, xi }
        }
        Method::Quickpcr => {
            let params = PcrParams::new(plan.pcp, plan.m)?;
            Outcome::Pcr(quick_pcr(&mut oracle, b, &params)?)
        }
    };
    Ok((outcome, oracle.calls()))
}

fn report_for(
    reference: &EigenReference,
    common: &MethodArgs,
    matrix: &DataMatrix,
    b: &DVector<f64>,
    outcome: &Outcome,
    calls: usize,
) -> CliResult<ApproxReport> {
    let input = match outcome {
        Outcome::Pcp { chi, xi } => ReportInput::Pcp { chi, xi },
        Outcome::Pcr(output) => ReportInput::Pcr { b, output },
    };
    Ok(error_report(reference, matrix, common.lambda, common.small_factor, input, calls)?)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Quickpcp => "quickpcp",
        Method::Quickpcr => "quickpcr",
    }
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    let common = &args.common;
    let data = load(common)?;
    let plan = plan(common, args.n)?;
    let matrix = Arc::new(data.matrix.clone());
    let (outcome, calls) = execute_plan(common, &matrix, &data.b, &plan)?;
    writeln!(
        out,
        "# method={} oracle={} lambda={} gamma_eff={} n={} m={}",
        method_name(common.method),
        common.oracle,
        common.lambda,
        plan.pcp.gamma_eff(),
        plan.pcp.n(),
        plan.m
    )
    .map_err(stdout_err)?;
    match &data.reference {
        Some(reference) => {
            let report = report_for(reference, common, &matrix, &data.b, &outcome, calls)?;
            writeln!(out, "{REPORT_COLUMNS}").map_err(stdout_err)?;
            writeln!(out, "{}", report.csv_row()).map_err(stdout_err)?;
        }
        None => {
            let residual = match &outcome {
                Outcome::Pcr(o) => {
                    let r = (matrix.apply(&o.x) - &data.b).norm() / data.b.norm();
                    format!("{r:e}")
                }
                Outcome::Pcp { .. } => "NA".to_string(),
            };
            writeln!(out, "ridge_calls,relative_residual").map_err(stdout_err)?;
            writeln!(out, "{calls},{residual}").map_err(stdout_err)?;
        }
    }
    if let Some(path) = &args.out {
        let v = match &outcome {
            Outcome::Pcp { xi, .. } => xi,
            Outcome::Pcr(o) => &o.x,
        };
        write_vector(path, v)?;
    }
    Ok(())
}

pub const SWEEP_COLUMNS: &str = "method,n,ridge_calls,regression_error,projection_error,denoising_error,denoising_error_small";

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let common = &args.common;
    let data = load(common)?;
    let reference = match &data.reference {
        Some(r) => r.clone(),
        None => {
            writeln!(err, "note: no eigen.qpm in the bundle, decomposing A^T A densely").map_err(stdout_err)?;
            EigenReference::from_matrix(&data.matrix)
        }
    };
    let matrix = Arc::new(data.matrix.clone());
    let ns = args.n_range.values();
    let plans = ns
        .iter()
        .map(|&n| plan(common, Some(n)))
        .collect::<CliResult<Vec<Plan>>>()?;
    let run_point = |plan: &Plan| -> CliResult<String> {
        let (outcome, calls) = execute_plan(common, &matrix, &data.b, plan)?;
        let report = report_for(&reference, common, &matrix, &data.b, &outcome, calls)?;
        Ok(format!("{},{},{}", method_name(common.method), plan.pcp.n(), report.csv_row()))
    };
    let rows: Vec<CliResult<String>> = if args.jobs == 1 {
        plans.iter().map(run_point).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| plans.par_iter().map(run_point).collect())
    };

    let mut text = String::new();
    writeln!(text, "# {SWEEP_VERSION}").unwrap();
    writeln!(
        text,
        "# dataset={} oracle={} lambda={:e} gamma={:e} m={} eps={:e} ridge_eps={:e} small_factor={:e} seed={}",
        common.dataset.display(),
        common.oracle,
        common.lambda,
        common.gamma,
        common.m.map_or("auto".to_string(), |m| m.to_string()),
        common.eps,
        common.ridge_eps,
        common.small_factor,
        common.seed
    )
    .unwrap();
    writeln!(text, "{SWEEP_COLUMNS}").unwrap();
    for row in rows {
        writeln!(text, "{}", row?).unwrap();
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &text).map_err(io_err(path))?;
            if args.gnuplot {
                let script = gnuplot_script(path);
                let gp = path.with_extension("gp");
                fs::write(&gp, script).map_err(io_err(&gp))?;
            }
        }
        None => out.write_all(text.as_bytes()).map_err(stdout_err)?,
    }
    Ok(())
}

/// Log-scale plot of every error column against ridge calls.
pub fn gnuplot_script(csv: &Path) -> String {
    let name = csv.file_name().map_or_else(|| csv.display().to_string(), |n| n.to_string_lossy().into_owned());
    let columns = ["regression_error", "projection_error", "denoising_error", "denoising_error_small"];
    let plots: Vec<String> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| format!("'{name}' using 3:{} with linespoints title '{c}'", i + 4))
        .collect();
    format!(
        "set datafile separator ','\nset datafile missing 'NA'\nset key autotitle columnhead\nset logscale y\nset xlabel 'ridge calls'\nset ylabel 'error'\nplot {}\n",
        plots.join(", \\\n     ")
    )
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let options = VerifyOptions {
        tamper_coeff: args.tamper_coeff,
        seed: args.seed,
    };
    let outcomes = run_all(&options);
    let mut failed = 0;
    for o in &outcomes {
        writeln!(out, "{}", o.summary()).map_err(stdout_err)?;
        if !o.passed() {
            failed += 1;
            for c in o.checks.iter().filter(|c| !c.passed()) {
                writeln!(out, "    failed {}: {:e} > {:e}", c.label, c.measured, c.bound).map_err(stdout_err)?;
            }
        }
    }
    let total = outcomes.len();
    writeln!(out, "{} of {total} suites passed", total - failed).map_err(stdout_err)?;
    if failed > 0 {
        return Err(CliError::VerifyFailed { failed, total });
    }
    Ok(())
}
