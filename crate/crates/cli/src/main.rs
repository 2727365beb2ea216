//! Command-line front end of the reconstruction workflow.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcm_core::pipeline::{
    calibrate_stage, invert_stage, preprocess_stage, propagate_stage, report_stage, run_all, run_selftest, synth_stage,
    PipelineError, RunConfig, SelfTestMode, SelfTestOptions, StageOutcome,
};

#[derive(Debug, Parser)]
#[command(name = "gcm", version, about = "Dielectric-constant reconstruction from multi-frequency backscatter data")]
struct Cli {
    /// Log filter, e.g. `info` or `gcm_core=debug`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize measured data for the configured scene.
    Synth(StageArgs),
    /// Gate time traces and transform them to the frequency domain.
    Preprocess(StageArgs),
    /// Propagate measured data to the near face and select the interval.
    Propagate(StageArgs),
    /// Shift the interval onto the working lattice and calibrate.
    Calibrate(StageArgs),
    /// Run the inversion.
    Invert(StageArgs),
    /// Write metrics and plot exports.
    Report(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
    /// Run the built-in numerical checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the work directory.
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Overrides the scene's noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scene's noise level.
    #[arg(long)]
    noise: Option<f64>,
    /// Overrides any field: `dotted.path=<json value>`, repeatable.
    #[arg(long = "set", value_name = "PATH=JSON")]
    sets: Vec<String>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Smaller grids with looser tolerances.
    #[arg(long)]
    reduced: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn load(args: &StageArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&args.config)?;
    for s in &args.sets {
        let (path, value) = s
            .split_once('=')
            .ok_or_else(|| PipelineError::Invalid(format!("`--set {s}`: expected PATH=JSON")))?;
        let v: serde_json::Value = serde_json::from_str(value)
            .or_else(|_| serde_json::from_str(&format!("\"{value}\"")))
            .map_err(|e| PipelineError::Invalid(format!("`--set {s}`: {e}")))?;
        cfg = cfg.with_override(path, v)?;
    }
    if let Some(w) = &args.workdir {
        cfg.workdir = w.clone();
    }
    if let Some(seed) = args.seed {
        cfg.scene.seed = seed;
    }
    if let Some(noise) = args.noise {
        cfg.scene.noise_level = noise;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print(outcome: &StageOutcome) -> i32 {
    println!("{}: {}", outcome.stage.name(), outcome.summary);
    outcome.exit_code
}

fn run(cli: Cli) -> Result<i32, PipelineError> {
    let stage = |args: &StageArgs, f: fn(&RunConfig) -> Result<StageOutcome, PipelineError>| -> Result<i32, PipelineError> {
        Ok(print(&f(&load(args)?)?))
    };
    match &cli.command {
        Command::Synth(a) => stage(a, synth_stage),
        Command::Preprocess(a) => stage(a, preprocess_stage),
        Command::Propagate(a) => stage(a, propagate_stage),
        Command::Calibrate(a) => stage(a, calibrate_stage),
        Command::Invert(a) => stage(a, invert_stage),
        Command::Report(a) => stage(a, report_stage),
        Command::Run(a) => {
            let outcomes = run_all(&load(a)?)?;
            Ok(outcomes.iter().map(print).max().unwrap_or(0))
        }
        Command::Selftest(a) => {
            let mode = if a.reduced { SelfTestMode::Reduced } else { SelfTestMode::Full };
            let report = run_selftest(&SelfTestOptions { mode, kernel_fault: None });
            if a.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                for c in &report.checks {
                    let status = if c.passed { "PASS" } else { "FAIL" };
                    println!("{status}  {:<45} {:>12.4e}  ({}, {:.1} s)", c.name, c.value, c.tolerance, c.seconds);
                }
            }
            Ok(if report.passed() { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
