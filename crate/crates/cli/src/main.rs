use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpk_certify::error::AppError;
use fpk_certify::pipeline::write_error_record;
use fpk_certify::{parse_spec, run_pipeline, Mode, RunOptions};

/// Certify moment and density bounds for Fokker–Planck–Kolmogorov equations
/// and check them against numerical solutions.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the selected analytic moment bounds.
    Bounds(Common),
    /// Solve the equation and write snapshots and the mass ledger.
    Simulate(Common),
    /// Fit and check the density envelope against a simulation.
    Verify(Common),
    /// Summarize the artifacts already present in the output directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Problem specification file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; defaults to `[output] directory`, else `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for interface stability; every pipeline is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative slack allowed by the envelope check.
    #[arg(long)]
    slack: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding earlier outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn execute(command: Command) -> (PathBuf, Result<i32, AppError>) {
    let (mode, common) = match command {
        Command::Bounds(c) => (Mode::Bounds, c),
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::Verify(c) => (Mode::Verify, c),
        Command::Report(r) => {
            let result = fpk_certify::pipeline::run_report(&r.out).map(|o| {
                print!("{}", o.summary);
                o.exit_code()
            });
            return (r.out, result);
        }
    };
    let fallback = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let spec = match std::fs::read_to_string(&common.spec)
        .map_err(|e| AppError::io(&common.spec, e))
        .and_then(|text| parse_spec(&text).map_err(AppError::Spec))
    {
        Ok(spec) => spec,
        Err(e) => return (fallback, Err(e)),
    };
    let out = common
        .out
        .or_else(|| spec.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let options = RunOptions {
        out: out.clone(),
        threads: common.threads,
        seed: common.seed,
        slack: common.slack,
    };
    let result = run_pipeline(&spec, mode, &options).map(|o| {
        print!("{}", o.summary);
        o.exit_code()
    });
    (out, result)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FPK_CERTIFY_LOG", "warn")).init();
    let cli = Cli::parse();
    let (out, result) = execute(cli.command);
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(io) = write_error_record(&out, &e) {
                eprintln!("error: {io}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
