//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a statistical gate or check failed, 2 usage error
//! or infeasible input.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analytic::{self, ChshAngles};
use crate::error::Error;
use crate::experiments::{self, ChshReport, RegionRow, SweepRow};
use crate::model::{solve_params, ModelParams, PatternKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const SWEEP_HEADER: &str =
    "theta,p_pp_mc,p_pm_mc,p_mp_mc,p_mm_mc,p_pp,p_pm,p_mp,p_mm,corr_mc,corr,n_pairs,seed";
pub const REGION_HEADER: &str = "eta,v,sin_feasible,line_feasible,chsh_violated,gap";
pub const CHSH_HEADER: &str =
    "s_mc,s_std_error,s_oracle,bound,violated_mc,significant_violation,e_ac,e_ad,e_bc,e_bd";

#[derive(Debug, Parser)]
#[command(
    name = "lhvsim",
    version,
    about = "Local hidden-variable model of singlet statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve pattern parameters (a, b, c) for a target efficiency and visibility.
    Params(ModelArgs),
    /// Monte Carlo θ-sweep against the closed-form probabilities.
    Sweep(SweepArgs),
    /// Four-setting CHSH run against the bound 4/η − 2.
    Chsh(ChshArgs),
    /// Classify a grid of (η, v) points.
    Region(RegionArgs),
    /// Run every exact and statistical check.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    /// Symmetrized sinusoidal pattern.
    Sin,
    /// Symmetrized staircase (straight-line correlation).
    Line,
    /// Unsymmetrized sinusoidal pattern (full visibility only).
    Unsym,
}

impl From<ModelArg> for PatternKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Sin => PatternKind::SymmetrizedSinusoidal,
            ModelArg::Line => PatternKind::SymmetrizedStaircase,
            ModelArg::Unsym => PatternKind::UnsymmetrizedSinusoidal,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Detector efficiency η in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    eta: f64,
    /// Visibility v in [0, 1].
    #[arg(long, allow_negative_numbers = true)]
    vis: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Sin)]
    model: ModelArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of θ values, uniform over [0, π].
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(2..))]
    steps: u64,
    /// Pairs per θ value.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output file; the table goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct ChshArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Pairs per setting.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Orientations A,B (detector one) and C,D (detector two); default 0,π/2,π/4,3π/4.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    angles: Option<Vec<f64>>,
    /// Read --angles in degrees instead of radians.
    #[arg(long)]
    degrees: bool,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct RegionArgs {
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    eta_steps: u64,
    #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u64).range(2..))]
    vis_steps: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Pairs per Monte Carlo configuration.
    #[arg(long, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(100_000..))]
    pairs: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct JsonParams {
    model: PatternKind,
    eta: f64,
    v: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl From<&ModelParams> for JsonParams {
    fn from(p: &ModelParams) -> Self {
        JsonParams {
            model: p.kind(),
            eta: p.eta(),
            v: p.v(),
            a: p.a(),
            b: p.b(),
            c: p.c(),
        }
    }
}

#[derive(Debug, Serialize)]
struct JsonMeta {
    command: &'static str,
    version: &'static str,
    seed: Option<u64>,
    params: Option<JsonParams>,
}

#[derive(Debug, Serialize)]
struct JsonDocument<R: Serialize> {
    meta: JsonMeta,
    rows: Vec<R>,
}

#[derive(Debug, Serialize)]
struct ChshRecord {
    s_mc: f64,
    s_std_error: f64,
    s_oracle: f64,
    bound: f64,
    violated_mc: bool,
    significant_violation: bool,
    e_ac: f64,
    e_ad: f64,
    e_bc: f64,
    e_bd: f64,
}

impl From<&ChshReport> for ChshRecord {
    fn from(r: &ChshReport) -> Self {
        let [e_ac, e_ad, e_bc, e_bd] = r.correlations.map(|e| e.corr_mc);
        ChshRecord {
            s_mc: r.s_mc,
            s_std_error: r.s_std_error,
            s_oracle: r.s_oracle,
            bound: r.bound,
            violated_mc: r.violated_mc,
            significant_violation: r.significant_violation,
            e_ac,
            e_ad,
            e_bc,
            e_bd,
        }
    }
}

/// A command failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_CHECK_FAILED,
            message: format!("i/o error: {e}"),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Params(args) => cmd_params(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out, err),
        Command::Chsh(args) => cmd_chsh(&args, out),
        Command::Region(args) => cmd_region(&args, out),
        Command::Verify(args) => cmd_verify(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(err, "error: {}", failure.message);
            failure.code
        }
    }
}

fn solve(args: &ModelArgs) -> std::result::Result<ModelParams, Failure> {
    Ok(solve_params(args.eta, args.vis, args.model.into())?)
}

fn cmd_params(args: &ModelArgs, out: &mut dyn Write) -> CmdResult {
    let kind: PatternKind = args.model.into();
    writeln!(out, "model={kind}")?;
    writeln!(out, "eta={}", args.eta)?;
    writeln!(out, "v={}", args.vis)?;
    let bound = if args.eta == 0.0 {
        Ok(1.0)
    } else {
        analytic::max_visibility(args.eta, kind)
    };
    match (solve_params(args.eta, args.vis, kind), bound) {
        (Ok(p), Ok(bound)) => {
            writeln!(out, "a={}", p.a())?;
            writeln!(out, "b={}", p.b())?;
            writeln!(out, "c={}", p.c())?;
            writeln!(out, "max_visibility={bound}")?;
            writeln!(out, "feasible=true")?;
            Ok(EXIT_OK)
        }
        (Err(e), bound) => {
            if let Ok(bound) = bound {
                writeln!(out, "max_visibility={bound}")?;
            }
            writeln!(out, "feasible=false")?;
            Err(e.into())
        }
        (Ok(_), Err(e)) => Err(e.into()),
    }
}

/// Writes a fully rendered table to `path`, or to `out` when no path is given.
fn finish_output(path: &Option<PathBuf>, buffer: &[u8], out: &mut dyn Write) -> io::Result<()> {
    match path {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            file.write_all(buffer)?;
            file.flush()
        }
        None => out.write_all(buffer),
    }
}

fn write_json<R: Serialize>(buffer: &mut Vec<u8>, meta: JsonMeta, rows: Vec<R>) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *buffer, &JsonDocument { meta, rows })?;
    buffer.push(b'\n');
    Ok(())
}

fn csv_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv(w: &mut dyn Write, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.theta,
            r.p_pp_mc,
            r.p_pm_mc,
            r.p_mp_mc,
            r.p_mm_mc,
            r.p_pp,
            r.p_pm,
            r.p_mp,
            r.p_mm,
            csv_opt(r.corr_mc),
            r.corr,
            r.n_pairs,
            r.seed
        )?;
    }
    Ok(())
}

pub fn write_region_csv(w: &mut dyn Write, rows: &[RegionRow]) -> io::Result<()> {
    writeln!(w, "{REGION_HEADER}")?;
    for r in rows {
        let v = &r.verdict;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.eta, r.v, v.sin_feasible, v.line_feasible, v.chsh_violated, v.gap
        )?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let params = solve(&args.model)?;
    let steps = usize::try_from(args.steps).map_err(|_| Failure::usage("--steps is too large"))?;
    let rows = experiments::theta_sweep(&params, steps, args.pairs, args.seed)?;
    let summary = experiments::sweep_summary(&rows);

    let mut buffer = Vec::new();
    match args.format {
        OutputFormat::Csv => write_sweep_csv(&mut buffer, &rows)?,
        OutputFormat::Json => write_json(
            &mut buffer,
            JsonMeta {
                command: "sweep",
                version: env!("CARGO_PKG_VERSION"),
                seed: Some(args.seed),
                params: Some((&params).into()),
            },
            rows,
        )?,
    }
    finish_output(&args.out, &buffer, out)?;

    let line = format!(
        "max |corr_mc - corr| = {:.3e}, max z = {:.2} (gate 5 sigma): {}",
        summary.max_abs_corr_dev,
        summary.max_z,
        if summary.pass { "PASS" } else { "FAIL" }
    );
    // Keep stdout clean when it carries the table.
    if args.out.is_some() {
        writeln!(out, "{line}")?;
    } else {
        writeln!(err, "{line}")?;
    }
    Ok(if summary.pass {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn cmd_chsh(args: &ChshArgs, out: &mut dyn Write) -> CmdResult {
    let params = solve(&args.model)?;
    let angles = match &args.angles {
        None => ChshAngles::STANDARD,
        Some(values) => {
            let scale = if args.degrees {
                std::f64::consts::PI / 180.0
            } else {
                1.0
            };
            if values.len() != 4 {
                return Err(Failure::usage(
                    "--angles takes exactly four comma-separated values",
                ));
            }
            if values.iter().any(|a| !a.is_finite()) {
                return Err(Failure::usage("--angles must be finite"));
            }
            ChshAngles {
                phi_a: values[0] * scale,
                phi_b: values[1] * scale,
                phi_c: values[2] * scale,
                phi_d: values[3] * scale,
            }
        }
    };
    let report = experiments::chsh_experiment(&params, &angles, args.pairs, args.seed)?;
    let record = ChshRecord::from(&report);

    let mut buffer = Vec::new();
    match args.format {
        OutputFormat::Csv => {
            writeln!(buffer, "{CHSH_HEADER}")?;
            writeln!(
                buffer,
                "{},{},{},{},{},{},{},{},{},{}",
                record.s_mc,
                record.s_std_error,
                record.s_oracle,
                record.bound,
                record.violated_mc,
                record.significant_violation,
                record.e_ac,
                record.e_ad,
                record.e_bc,
                record.e_bd
            )?;
        }
        OutputFormat::Json => write_json(
            &mut buffer,
            JsonMeta {
                command: "chsh",
                version: env!("CARGO_PKG_VERSION"),
                seed: Some(args.seed),
                params: Some((&params).into()),
            },
            vec![record],
        )?,
    }
    out.write_all(&buffer)?;
    Ok(if report.significant_violation {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    })
}

fn cmd_region(args: &RegionArgs, out: &mut dyn Write) -> CmdResult {
    let eta_steps =
        usize::try_from(args.eta_steps).map_err(|_| Failure::usage("--eta-steps is too large"))?;
    let vis_steps =
        usize::try_from(args.vis_steps).map_err(|_| Failure::usage("--vis-steps is too large"))?;
    let rows = experiments::region_scan(eta_steps, vis_steps)?;
    let count = rows.len();
    let mut buffer = Vec::new();
    match args.format {
        OutputFormat::Csv => write_region_csv(&mut buffer, &rows)?,
        OutputFormat::Json => write_json(
            &mut buffer,
            JsonMeta {
                command: "region",
                version: env!("CARGO_PKG_VERSION"),
                seed: None,
                params: None,
            },
            rows,
        )?,
    }
    finish_output(&args.out, &buffer, out)?;
    if let Some(path) = &args.out {
        writeln!(out, "wrote {count} rows to {}", path.display())?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let report = experiments::verify_suite(args.pairs, args.seed)?;
    for check in &report.checks {
        writeln!(out, "{check}")?;
    }
    let passed = report.passed();
    writeln!(
        out,
        "overall: {} ({} checks, {} failed)",
        if passed { "PASS" } else { "FAIL" },
        report.checks.len(),
        report.failures().count()
    )?;
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}
