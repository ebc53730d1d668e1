//! Command-line experiments for pulsating F-KPP waves and branching
//! Brownian motion in a periodic environment.
//!
//! Every subcommand reads its parameters from the command line, falling
//! back to the matching table of the `--config` TOML file, runs on a rayon
//! pool of `--threads` workers, and writes a JSON report (plus CSV traces
//! where relevant) into `--out`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use config::*;
pub use error::{CliError, EXIT_CHECK_FAILED, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION};
use experiments::Ctx;
pub use report::{Check, Report, Status};

#[derive(Debug, Parser)]
#[command(name = "kppwave", version, about = "Pulsating F-KPP waves and branching Brownian motion in a periodic environment")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "KPPWAVE_THREADS")]
    pub threads: Option<usize>,
    /// Output directory for reports and traces.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Principal eigenpair, ψ_λ and h at one λ.
    Eigen(EigenParams),
    /// Minimal speed ν* and its minimiser λ*.
    Speed(SpeedParams),
    /// Runs the F-KPP equation and tracks the front.
    Front(FrontParams),
    /// Particle system replicates with martingale traces.
    Simulate(SimulateParams),
    /// Stopping-line replicates and their martingales.
    Line(LineParams),
    /// One-particle diffusion laws.
    Diffusion(DiffusionParams),
    /// Tail asymptotics of supercritical and critical waves.
    VerifyAsymptotics(AsymptoticsParams),
    /// Wave versus the Laplace functional of the additive martingale limit.
    VerifyRepresentation(RepresentationParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eigen(_) => "eigen",
            Command::Speed(_) => "speed",
            Command::Front(_) => "front",
            Command::Simulate(_) => "simulate",
            Command::Line(_) => "line",
            Command::Diffusion(_) => "diffusion",
            Command::VerifyAsymptotics(_) => "verify-asymptotics",
            Command::VerifyRepresentation(_) => "verify-representation",
        }
    }
}

/// Runs the parsed command and writes `<out>/<experiment>.json`.
pub fn run(cli: Cli) -> Result<Report, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let threads = cli.threads.or(file.threads).unwrap_or(0);
    let out = cli.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let env_section = file.env.clone().unwrap_or_default();
    let env = env_section.build()?;

    let name = cli.command.name();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let mut ctx = Ctx::new(env_section, env, seed, &out)?;
    let report = pool.install(|| experiments::dispatch(cli.command, file, &mut ctx))?;
    let mut report = report.finish();
    let report_name = format!("{name}.json");
    report.artifacts = ctx.artifacts.written.clone();
    report.artifacts.push(report_name.clone());
    ctx.artifacts.json(&report_name, &report)?;
    Ok(report)
}

/// Entry point shared by the binary and the integration tests: parses
/// `args`, runs, prints the report (stdout) or a JSON error (stderr) and
/// returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(report) => {
            match report.to_json() {
                Ok(s) => println!("{s}"),
                Err(e) => {
                    eprintln!("{}", e.to_json());
                    return e.exit_code();
                }
            }
            if report.pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
