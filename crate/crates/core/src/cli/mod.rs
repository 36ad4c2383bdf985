//! `cirlab` command-line front end.
//!
//! Either a CIR parameter set (`--a --b --sigma --x0 --T`) or a squared
//! Bessel one (`--delta --b --z0`) is accepted. All simulation runs in the
//! normalised squared Bessel form on `[0, 1]`; results are mapped back to
//! CIR units where that is meaningful.

mod selftest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::experiments::{
    fit_estimates, hitting_probability, lower_bound_coupling, strong_error, CouplingVariant,
    ErrorEstimate, HittingConfig, HittingEstimate, RateFit,
};
use crate::model::{mean_at, BesselParams, BesselReduction, CirParams};
use crate::paths::sample_bm;
use crate::sampling::{derive, SeedSpec};
use crate::schemes::{solve_path, Coefficients, SchemeKind, SolveOptions};
use crate::{experiments, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cirlab", version, about = "CIR / squared Bessel strong-approximation laboratory")]
struct Cli {
    /// Worker threads for replications; never changes any emitted number.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form first moment against an exact-transition Monte Carlo mean.
    Moments(MomentsArgs),
    /// Solve one path and dump it as CSV.
    Simulate(SimulateArgs),
    /// Strong error of a scheme over a list of grid sizes, with a rate fit.
    Convergence(ConvergenceArgs),
    /// Coupling lower bound over a list of grid sizes, with a rate fit.
    LowerBound(LowerBoundArgs),
    /// Probability of staying positive on [eps, T] for a list of eps.
    Hitting(HittingArgs),
    /// Reduced-scale invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct ModelArgs {
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long = "T", id = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    z0: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct OutputArgs {
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    format: OutputFormat,
    /// Fill `runtime_seconds` in the JSON summary (makes output
    /// run-dependent).
    #[arg(long)]
    record_runtime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OutputFormat {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum SchemeArg {
    #[value(name = "euler-ft")]
    EulerFt,
    #[value(name = "drift-implicit")]
    DriftImplicit,
    #[value(name = "truncated-milstein")]
    TruncatedMilstein,
    #[value(name = "exact")]
    Exact,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::EulerFt => SchemeKind::EulerFullTruncation,
            SchemeArg::DriftImplicit => SchemeKind::DriftImplicitSqrt,
            SchemeArg::TruncatedMilstein => SchemeKind::TruncatedMilstein,
            SchemeArg::Exact => SchemeKind::ExactTransition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum VariantArg {
    #[value(name = "full-refill")]
    FullRefill,
    #[value(name = "single-cell")]
    SingleCell,
}

impl From<VariantArg> for CouplingVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::FullRefill => CouplingVariant::FullConditionalRefill,
            VariantArg::SingleCell => CouplingVariant::SingleCellAfterZeroHit,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
struct MomentsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Time at which the mean is evaluated (CIR time when CIR parameters
    /// are given).
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of steps (first entry used).
    #[arg(long = "N", value_delimiter = ',', default_value = "1024")]
    n_list: Vec<usize>,
    #[arg(long, value_enum, default_value_t = SchemeArg::TruncatedMilstein)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication index of the path to dump.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the driving Brownian path.
    #[arg(long)]
    driver_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ConvergenceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N", value_delimiter = ',', default_value = "8,16,32,64,128")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long = "refine", default_value_t = 64)]
    refine_factor: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::TruncatedMilstein)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of smallest grid sizes left out of the rate fit.
    #[arg(long, default_value_t = 1)]
    drop_smallest: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct LowerBoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "N", value_delimiter = ',', default_value = "8,16,32,64")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 64)]
    fine_factor: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::FullRefill)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    drop_smallest: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct HittingArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.0078125,0.015625,0.03125,0.0625,0.125")]
    eps: Vec<f64>,
    /// Horizon in squared Bessel time when Bessel parameters are given.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    /// Steps per unit of squared Bessel time.
    #[arg(long, default_value_t = 4096)]
    steps_per_unit: usize,
    /// Grid-only zero detection instead of the bridge-corrected default.
    #[arg(long)]
    grid_only: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Model parameters in both vocabularies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedModel {
    pub cir: Option<CirParams>,
    pub reduction: BesselReduction,
}

impl ResolvedModel {
    pub fn bessel(&self) -> BesselParams {
        self.reduction.params
    }
}

fn resolve_model(m: &ModelArgs) -> Result<ResolvedModel, Error> {
    let cir_given = m.a.is_some() || m.sigma.is_some() || m.x0.is_some() || m.horizon.is_some();
    let bessel_given = m.delta.is_some() || m.z0.is_some();
    match (cir_given, bessel_given) {
        (true, true) => Err(Error::Usage(
            "give either CIR (--a --sigma --x0 --T) or Bessel (--delta --z0) parameters, not both"
                .into(),
        )),
        (false, false) => Err(Error::Usage(
            "missing model parameters: give --a --b --sigma --x0 --T or --delta --b --z0".into(),
        )),
        (true, false) => {
            let need = |v: Option<f64>, name: &str| {
                v.ok_or_else(|| Error::Usage(format!("missing --{name} for CIR parameters")))
            };
            let cir = CirParams::new(
                need(m.a, "a")?,
                m.b.unwrap_or(0.0),
                need(m.sigma, "sigma")?,
                m.x0.unwrap_or(0.0),
                m.horizon.unwrap_or(1.0),
            )?;
            Ok(ResolvedModel {
                cir: Some(cir),
                reduction: cir.to_bessel(),
            })
        }
        (false, true) => {
            let delta = m
                .delta
                .ok_or_else(|| Error::Usage("missing --delta for Bessel parameters".into()))?;
            let params = BesselParams::new(delta, m.b.unwrap_or(0.0), m.z0.unwrap_or(0.0))?;
            Ok(ResolvedModel {
                cir: None,
                reduction: BesselReduction::identity(params),
            })
        }
    }
}

fn check_n_list(list: &[usize]) -> Result<(), Error> {
    if list.is_empty() || list.contains(&0) {
        return Err(Error::Usage("--N entries must be ≥ 1".into()));
    }
    if list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("--N must be strictly increasing".into()));
    }
    Ok(())
}

/// Floats are written with 17 significant digits.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents)
        .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(
    output: &OutputArgs,
    csv: &str,
    summary: serde_json::Value,
    stdout: &mut dyn Write,
) -> Result<(), Error> {
    let json_text = serde_json::to_string_pretty(&summary).expect("serialisable summary") + "\n";
    match &output.out {
        Some(path) => {
            match output.format {
                OutputFormat::Csv => write_file(path, csv)?,
                OutputFormat::Json => write_file(path, &json_text)?,
                OutputFormat::Both => {
                    write_file(path, csv)?;
                    write_file(&json_path(path), &json_text)?;
                }
            }
            Ok(())
        }
        None => {
            let text = match output.format {
                OutputFormat::Csv => csv.to_string(),
                OutputFormat::Json => json_text,
                OutputFormat::Both => format!("{csv}{json_text}"),
            };
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Usage(format!("stdout: {e}")))
        }
    }
}

fn error_table(points: &[ErrorEstimate]) -> String {
    let mut csv = String::from("n_grid,reps,mean_abs_error,std_error\n");
    for p in points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.n_grid,
            p.reps,
            fmt_f(p.mean_abs_error),
            fmt_f(p.std_error)
        ));
    }
    csv
}

fn fit_json(fit: Option<&RateFit>, dropped: usize) -> serde_json::Value {
    match fit {
        Some(f) => json!({
            "slope": f.slope,
            "intercept": f.intercept,
            "r_squared": f.r_squared,
            "n_points": f.n_points,
            "dropped_smallest_n": dropped,
        }),
        None => serde_json::Value::Null,
    }
}

fn runtime_json(record: bool, started: Instant) -> serde_json::Value {
    if record {
        json!(started.elapsed().as_secs_f64())
    } else {
        serde_json::Value::Null
    }
}

/// Bessel-unit errors are `ρ` times CIR-unit errors.
fn to_cir_units(model: &ResolvedModel, e: ErrorEstimate) -> ErrorEstimate {
    e.scaled(1.0 / model.reduction.space_scale)
}

fn cmd_convergence(args: &ConvergenceArgs, stdout: &mut dyn Write) -> Result<(), Error> {
    let started = Instant::now();
    let model = resolve_model(&args.model)?;
    check_n_list(&args.n_list)?;
    let kind = SchemeKind::from(args.scheme);
    kind.validate(&Coefficients::from(&model.bessel()))?;
    let p = model.bessel();
    let points = args
        .n_list
        .iter()
        .map(|&n| {
            strong_error(kind, &p, n, args.reps, args.refine_factor, args.seed)
                .map(|e| to_cir_units(&model, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_when_possible(&points, args.drop_smallest)?;
    let summary = json!({
        "config": {
            "subcommand": "convergence",
            "model": model,
            "args": args,
        },
        "points": points,
        "fit": fit_json(fit.as_ref(), args.drop_smallest),
        "runtime_seconds": runtime_json(args.output.record_runtime, started),
        "seed": args.seed,
    });
    emit(&args.output, &error_table(&points), summary, stdout)
}

fn fit_when_possible(points: &[ErrorEstimate], drop: usize) -> Result<Option<RateFit>, Error> {
    if points.len() < drop + 3 {
        return Ok(None);
    }
    fit_estimates(points, drop).map(Some)
}

fn cmd_lower_bound(args: &LowerBoundArgs, stdout: &mut dyn Write) -> Result<(), Error> {
    let started = Instant::now();
    let model = resolve_model(&args.model)?;
    check_n_list(&args.n_list)?;
    let p = model.bessel();
    let variant = CouplingVariant::from(args.variant);
    let points = args
        .n_list
        .iter()
        .map(|&n| {
            lower_bound_coupling(&p, n, args.reps, args.fine_factor, variant, args.seed)
                .map(|e| to_cir_units(&model, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_when_possible(&points, args.drop_smallest)?;
    let summary = json!({
        "config": {
            "subcommand": "lower-bound",
            "model": model,
            "args": args,
        },
        "points": points,
        "fit": fit_json(fit.as_ref(), args.drop_smallest),
        "runtime_seconds": runtime_json(args.output.record_runtime, started),
        "seed": args.seed,
    });
    emit(&args.output, &error_table(&points), summary, stdout)
}

fn cmd_hitting(args: &HittingArgs, stdout: &mut dyn Write) -> Result<(), Error> {
    let started = Instant::now();
    let model = resolve_model(&args.model)?;
    if args.eps.is_empty() || args.eps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("--eps must be a strictly increasing list".into()));
    }
    let p = model.bessel();
    // CIR time t corresponds to Bessel time t / T
    let (time_scale, horizon) = match model.cir {
        Some(cir) => (cir.horizon(), 1.0),
        None => (1.0, args.horizon),
    };
    let cfg = HittingConfig {
        horizon,
        mesh: 1.0 / args.steps_per_unit as f64,
        detection: if args.grid_only {
            experiments::HitDetection::Grid
        } else {
            experiments::HitDetection::BridgeCorrected
        },
        ..HittingConfig::default()
    };
    let points = args
        .eps
        .iter()
        .map(|&eps| {
            hitting_probability(&p, eps / time_scale, args.reps, &cfg, args.seed)
                .map(|h| HittingEstimate { eps, ..h })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("eps,reps,prob_estimate,std_error\n");
    for h in &points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(h.eps),
            h.reps,
            fmt_f(h.prob_estimate),
            fmt_f(h.std_error)
        ));
    }
    let fit_points: Vec<(f64, f64)> = points.iter().map(|h| (h.eps, h.prob_estimate)).collect();
    let fit = if fit_points.len() >= 3 {
        Some(experiments::fit_rate(&fit_points)?)
    } else {
        None
    };
    let summary = json!({
        "config": {
            "subcommand": "hitting",
            "model": model,
            "args": args,
        },
        "points": points,
        "fit": fit_json(fit.as_ref(), 0),
        "runtime_seconds": runtime_json(args.output.record_runtime, started),
        "seed": args.seed,
    });
    emit(&args.output, &csv, summary, stdout)
}

fn cmd_moments(args: &MomentsArgs, stdout: &mut dyn Write) -> Result<(), Error> {
    let model = resolve_model(&args.model)?;
    if !(args.t > 0.0) {
        return Err(Error::Usage("--t must be > 0".into()));
    }
    let p = model.bessel();
    let rho = model.reduction.space_scale;
    let bessel_t = args.t / model.reduction.time_scale;
    let closed = mean_at(&p, bessel_t) / rho;
    let mc = experiments::exact_mean(&p, bessel_t, args.reps, args.seed)?;
    let (mc_mean, se) = (mc.mean / rho, mc.std_error / rho);
    let within = (mc_mean - closed).abs() <= 3.0 * se;
    let csv = format!(
        "t,closed_form_mean,mc_mean,std_error,reps,within_3se\n{},{},{},{},{},{}\n",
        fmt_f(args.t),
        fmt_f(closed),
        fmt_f(mc_mean),
        fmt_f(se),
        args.reps,
        within
    );
    let summary = json!({
        "config": { "subcommand": "moments", "model": model, "args": args },
        "closed_form_mean": closed,
        "mc_mean": mc_mean,
        "std_error": se,
        "reps": args.reps,
        "within_3se": within,
        "seed": args.seed,
    });
    emit(&args.output, &csv, summary, stdout)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), Error> {
    let model = resolve_model(&args.model)?;
    check_n_list(&args.n_list)?;
    let n = args.n_list[0];
    let kind = SchemeKind::from(args.scheme);
    let p = model.bessel();
    let c = Coefficients::from(&p);
    let mut g = derive(SeedSpec::new(args.seed, 0, args.replication));
    let driver = sample_bm(&mut g, n, 1.0 / n as f64)?;
    let opts = SolveOptions::for_kind(kind).recording();
    let rng = (!kind.is_pathwise()).then_some(&mut g);
    let res = solve_path(kind, &c, p.z0(), &driver, opts, rng)?;
    let path = res.path.expect("recorded path");
    // back to CIR units: X_t = Z_{t/T} / ρ
    let (rho, tscale) = (model.reduction.space_scale, model.reduction.time_scale);
    let cir_path = crate::paths::GridPath::new(
        0.0,
        path.dt() * tscale,
        path.values().iter().map(|z| z / rho).collect(),
    )?;
    let mut buf = Vec::new();
    cir_path.write_csv(&mut buf).expect("in-memory write");
    match &args.out {
        Some(out) => write_file(out, &String::from_utf8(buf).expect("utf8"))?,
        None => stdout
            .write_all(&buf)
            .map_err(|e| Error::Usage(format!("stdout: {e}")))?,
    }
    if let Some(driver_out) = &args.driver_out {
        // W_{tT} = √T · W̃_t
        let scaled = crate::paths::scale_path(&driver, 1.0 / tscale)?;
        let mut buf = Vec::new();
        scaled.write_csv(&mut buf).expect("in-memory write");
        write_file(driver_out, &String::from_utf8(buf).expect("utf8"))?;
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } | Error::Diverged { .. } | Error::Fit(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Runs the CLI with `argv` (including the program name), writing tabular
/// output to `stdout` when no `--out` is given. Returns the exit code.
pub fn run_with_output(argv: &[String], stdout: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let msg = e.to_string();
                    let first = msg.lines().next().unwrap_or("invalid arguments");
                    eprintln!("{first}");
                    EXIT_USAGE
                }
            };
        }
    };
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be ≥ 1");
        return EXIT_USAGE;
    }
    let threads = cli.threads;
    let body = |stdout: &mut dyn Write| -> Result<i32, Error> {
        match &cli.command {
            Command::Moments(a) => cmd_moments(a, stdout).map(|_| EXIT_OK),
            Command::Simulate(a) => cmd_simulate(a, stdout).map(|_| EXIT_OK),
            Command::Convergence(a) => cmd_convergence(a, stdout).map(|_| EXIT_OK),
            Command::LowerBound(a) => cmd_lower_bound(a, stdout).map(|_| EXIT_OK),
            Command::Hitting(a) => cmd_hitting(a, stdout).map(|_| EXIT_OK),
            Command::Selftest(a) => Ok(selftest::run(a.seed, stdout)),
        }
    };
    // output is buffered so the worker pool never touches the writer
    let buffered = || {
        let mut buf: Vec<u8> = Vec::new();
        let r = body(&mut buf);
        (r, buf)
    };
    let (outcome, buf) = match threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(buffered),
            Err(e) => {
                eprintln!("error: cannot start {k} worker threads: {e}");
                return EXIT_NUMERICAL;
            }
        },
        None => buffered(),
    };
    if let Err(e) = stdout.write_all(&buf) {
        eprintln!("error: stdout: {e}");
        return EXIT_NUMERICAL;
    }
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with_output(argv, &mut lock)
}
