mod input;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use singwald_core::adaptive::{adaptive_analyze, adaptive_bound, estimated_limit_law, AdaptiveConfig, AdaptiveVerdict, Branch};
use singwald_core::bounds::{conservative_max_p, BoundSpec};
use singwald_core::chisq::chisq_quantile;
use singwald_core::cldr::analyze;
use singwald_core::law::EmpiricalLaw;
use singwald_core::limitlaw::{finite_t_reference, sample_limit_law_for, LimitLawConfig, LimitOutcome, ZLaw, DEFAULT_DRAWS};
use singwald_core::waldstat::{wald_statistic, WaldInput};
use singwald_core::{Error, ErrorClass, Scalar};

use input::{covariance, estimates, load_system, with_theta_bar};
use output::{Envelope, Format};

const EXIT_FAILED_CHECKS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_DIVERGENT: u8 = 10;

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) | CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Divergent) => EXIT_DIVERGENT,
            CliError::Core(e) => match e.class() {
                ErrorClass::Parse => EXIT_USAGE,
                ErrorClass::Precondition => EXIT_PRECONDITION,
                ErrorClass::Numeric => EXIT_NUMERIC,
            },
            CliError::Io(_) => EXIT_PRECONDITION,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

#[derive(Parser)]
#[command(name = "wald", version, about = "Wald tests at locally singular restrictions")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Order structure and limit matrix of a restriction system.
    Analyze(AnalyzeArgs),
    /// Wald statistic at an estimate.
    Eval(EvalArgs),
    /// Monte Carlo law of the limit, or of the statistic at a finite sample size.
    Simulate(SimulateArgs),
    /// Conservative bounds and max-p tables.
    Bounds(BoundsArgs),
    /// Data-driven branch choice and bound.
    Adaptive(AdaptiveArgs),
    /// Re-run the textbook examples and report pass/fail.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    theta_bar: Option<String>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    system: PathBuf,
    /// JSON file with `theta_hat`, `vhat` and `T`; flags take precedence.
    #[arg(long)]
    estimate: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    theta_hat: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    vhat: Option<String>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    theta_bar: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    vhat: Option<String>,
    #[arg(long = "N", default_value_t = DEFAULT_DRAWS)]
    #[serde(rename = "N")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulate the statistic at this sample size instead of the limit.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    /// Write `<out>.bin` and `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95, 0.99])]
    levels: Vec<f64>,
}

#[derive(Args, Serialize)]
struct BoundsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1])]
    q: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [1])]
    alpha: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05])]
    level: Vec<f64>,
    /// Emit the bound for this many parameters instead of the max-p table.
    #[arg(long)]
    p: Option<u32>,
    /// The four tabulated cases.
    #[arg(long, conflicts_with_all = ["q", "alpha", "level", "p"])]
    table: bool,
}

#[derive(Args, Serialize)]
struct AdaptiveArgs {
    #[arg(long)]
    system: PathBuf,
    /// JSON file with `theta_hat`, `vhat` and `T`; flags take precedence.
    #[arg(long)]
    estimate: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    theta_hat: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    vhat: Option<String>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    t: Option<f64>,
    #[arg(long, default_value_t = singwald_core::adaptive::DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = singwald_core::adaptive::DEFAULT_DELTA)]
    delta: f64,
    #[arg(long = "N", default_value_t = DEFAULT_DRAWS)]
    #[serde(rename = "N")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95, 0.99])]
    levels: Vec<f64>,
}

#[derive(Args, Serialize)]
struct ReproduceArgs {
    #[arg(long = "N", default_value_t = DEFAULT_DRAWS)]
    #[serde(rename = "N")]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct QuantileRow {
    gamma: f64,
    quantile: f64,
}

fn quantile_rows(levels: &[f64], q: impl Fn(f64) -> Result<f64, Error>) -> Result<Vec<QuantileRow>, Error> {
    levels.iter().map(|&gamma| Ok(QuantileRow { gamma, quantile: q(gamma)? })).collect()
}

#[derive(Serialize)]
struct LawSummary<'a> {
    outcome: &'static str,
    draws: usize,
    redraws: u64,
    median: f64,
    meta: &'a singwald_core::law::LawMeta,
    table: Vec<QuantileRow>,
}

#[derive(Serialize)]
struct Diverges<'a> {
    outcome: &'static str,
    classification: String,
    alpha: &'a [u32],
    message: &'static str,
}

#[derive(Serialize)]
struct MaxPRow {
    q: u32,
    alpha: u32,
    level: f64,
    max_p: u32,
}

#[derive(Serialize)]
struct MaxPTable {
    table: Vec<MaxPRow>,
}

#[derive(Serialize)]
struct AdaptiveReport<'a> {
    #[serde(flatten)]
    verdict: &'a AdaptiveVerdict,
    alpha_hat: Option<u32>,
    bound: Option<BoundSpec>,
    quantiles: Vec<QuantileRow>,
}

/// Rendered output and exit status of a successful run.
struct Run {
    envelope: Envelope,
    code: u8,
}

impl Run {
    fn ok(envelope: Envelope) -> Self {
        Self { envelope, code: 0 }
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<Run, CliError> {
    let loaded = load_system(&args.system)?;
    let sys = with_theta_bar(loaded.system, args.theta_bar.as_deref())?;
    let a = analyze(&sys)?;
    let code = if a.is_cldr() { 0 } else { EXIT_DIVERGENT };
    Ok(Run { envelope: Envelope::new("analyze", args, &a)?.input(&loaded.sha256), code })
}

fn cmd_eval(args: &EvalArgs) -> Result<Run, CliError> {
    let loaded = load_system(&args.system)?;
    let sys = loaded.system;
    let est = estimates(&sys, args.estimate.as_deref(), args.theta_hat.as_deref(), args.vhat.as_deref(), args.t)?;
    let w = wald_statistic(&sys, &WaldInput::with_sample_size(est.theta_hat, est.v_hat, est.t)?)?;
    Ok(Run::ok(Envelope::new("eval", args, &w)?.input(&loaded.sha256).estimate(est.sha256)))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Run, CliError> {
    let loaded = load_system(&args.system)?;
    let sys = with_theta_bar(loaded.system, args.theta_bar.as_deref())?;
    let v = covariance(args.vhat.as_deref(), &sys)?;
    let mut law: EmpiricalLaw = match args.t {
        Some(t) => {
            let tb: Vec<f64> = match sys.theta_bar() {
                Some(tb) => tb.iter().map(Scalar::to_f64).collect(),
                None => vec![0.0; sys.p()],
            };
            finite_t_reference(&sys, &tb, &v, t, args.n, args.seed)?
        }
        None => {
            let a = analyze(&sys)?;
            let cfg = LimitLawConfig::new(args.n, args.seed, ZLaw::StandardNormal, v)?;
            match sample_limit_law_for(Some(&sys), &a, &cfg)? {
                LimitOutcome::Law(law) => law,
                LimitOutcome::Diverges => {
                    let result = Diverges {
                        outcome: "diverges",
                        classification: a.classification.to_string(),
                        alpha: &a.alpha,
                        message: "deficient rank at the null point: the statistic diverges",
                    };
                    let envelope = Envelope::new("simulate", args, &result)?.input(&loaded.sha256).seed(args.seed);
                    return Ok(Run { envelope, code: EXIT_DIVERGENT });
                }
            }
        }
    };
    law.meta.system_sha256 = Some(loaded.sha256.clone());
    if let Some(stem) = &args.out {
        law.write(stem).map_err(|e| CliError::Io(format!("{}: {e}", stem.display())))?;
    }
    let summary = LawSummary {
        outcome: "law",
        draws: law.len(),
        redraws: law.redraws,
        median: law.median(),
        meta: &law.meta,
        table: quantile_rows(&args.levels, |g| law.quantile(g))?,
    };
    Ok(Run::ok(Envelope::new("simulate", args, &summary)?.input(&loaded.sha256).seed(args.seed)))
}

const TABULATED: [(u32, u32, f64); 4] = [(1, 1, 0.05), (1, 1, 0.01), (2, 1, 0.05), (3, 1, 0.05)];

fn cmd_bounds(args: &BoundsArgs) -> Result<Run, CliError> {
    if let Some(p) = args.p {
        let (&[q], &[alpha], &[level]) = (&args.q[..], &args.alpha[..], &args.level[..]) else {
            return Err(CliError::Usage("--p takes a single --q, --alpha and --level".into()));
        };
        let spec = BoundSpec::new(alpha, p, q, level)?;
        return Ok(Run::ok(Envelope::new("bounds", args, &spec)?));
    }
    let cases: Vec<(u32, u32, f64)> = if args.table {
        TABULATED.to_vec()
    } else {
        let mut v = Vec::new();
        for &q in &args.q {
            for &alpha in &args.alpha {
                for &level in &args.level {
                    v.push((q, alpha, level));
                }
            }
        }
        v
    };
    let table = cases
        .into_iter()
        .map(|(q, alpha, level)| Ok(MaxPRow { q, alpha, level, max_p: conservative_max_p(q, alpha, level)? }))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Run::ok(Envelope::new("bounds", args, &MaxPTable { table })?))
}

fn cmd_adaptive(args: &AdaptiveArgs) -> Result<Run, CliError> {
    let loaded = load_system(&args.system)?;
    let sys = loaded.system;
    let est = estimates(&sys, args.estimate.as_deref(), args.theta_hat.as_deref(), args.vhat.as_deref(), args.t)?;
    if !(est.t >= 1.0) {
        return Err(Error::Domain(format!("sample size must be at least 1, got {}", est.t)).into());
    }
    let cfg = AdaptiveConfig::new(args.c, args.delta, est.t.sqrt())?;
    let verdict = adaptive_analyze(&sys, &est.theta_hat, &est.v_hat, &cfg)?;
    let (bound, quantiles) = match verdict.branch {
        Branch::Divergent => (None, Vec::new()),
        Branch::Standard => {
            let q = verdict.q as u32;
            (Some(adaptive_bound(&verdict, args.level)?), quantile_rows(&args.levels, |g| chisq_quantile(g, q))?)
        }
        Branch::EstimatedLimit => {
            let bound = adaptive_bound(&verdict, args.level)?;
            let rows = match estimated_limit_law(&verdict, args.n, args.seed)? {
                LimitOutcome::Law(law) => quantile_rows(&args.levels, |g| law.quantile(g))?,
                LimitOutcome::Diverges => Vec::new(),
            };
            (Some(bound), rows)
        }
    };
    let code = if verdict.branch == Branch::Divergent { EXIT_DIVERGENT } else { 0 };
    let report = AdaptiveReport { verdict: &verdict, alpha_hat: verdict.alpha_hat(), bound, quantiles };
    let envelope = Envelope::new("adaptive", args, &report)?.input(&loaded.sha256).estimate(est.sha256).seed(args.seed);
    Ok(Run { envelope, code })
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<Run, CliError> {
    let report = reproduce::reproduce(args.n, args.seed)?;
    let code = if report.all_passed() { 0 } else { EXIT_FAILED_CHECKS };
    Ok(Run { envelope: Envelope::new("reproduce", args, &report)?.seed(args.seed), code })
}

fn run(cli: &Cli) -> Result<Run, CliError> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Adaptive(a) => cmd_adaptive(a),
        Command::Reproduce(a) => cmd_reproduce(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("wald: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = run(&cli).and_then(|r| Ok((r.envelope.render(cli.format)?, r.code)));
    match outcome {
        Ok((text, code)) => {
            print!("{text}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("wald: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
