use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nrdf_cli::bench::{bench_csv, bench_rows};
use nrdf_cli::commands;
use nrdf_cli::crosscheck::{crosscheck, load_oracle};
use nrdf_cli::{parse_config, CliError, Overrides, Result, RunConfig};

#[derive(Parser)]
#[command(name = "nrdf", version, about = "Indirect NRDF solvers for partially observed Gauss-Markov sources")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated solver list, overriding the config.
    #[arg(long, value_delimiter = ',')]
    solver: Option<Vec<String>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["2", "e"])]
    log_base: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Steady-state Riccati solution and the asymptotic floor.
    Dare(Common),
    /// Forward Kalman filter covariances over the horizon.
    Kf(Common),
    /// Finite-horizon allocation at the config's D.
    Finite(Common),
    /// Stationary allocation at the config's D.
    Stationary(Common),
    /// Rate-distortion curve over the config's sweep, as CSV.
    Curve(Common),
    /// Monte-Carlo check of the realized test channel.
    Simulate(Common),
    /// Timing of both algorithms, as CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Oracle result whose wall times are added as a row.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Compare against an SDP oracle result file.
    Crosscheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        oracle: PathBuf,
    },
}

fn load(c: &Common) -> Result<RunConfig> {
    let overrides = Overrides { solvers: c.solver.clone(), eps: c.eps, seed: c.seed, log_base: c.log_base.clone() };
    parse_config(&c.config, &overrides)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io { path: p.display().to_string(), reason: e.to_string() }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    let simple = |c: &Common, f: fn(&RunConfig) -> Result<String>| -> Result<()> { emit(&c.out, &f(&load(c)?)?) };
    match cmd {
        Cmd::Dare(c) => simple(&c, commands::dare),
        Cmd::Kf(c) => simple(&c, commands::kf),
        Cmd::Finite(c) => simple(&c, commands::finite),
        Cmd::Stationary(c) => simple(&c, commands::stationary),
        Cmd::Curve(c) => simple(&c, commands::curve),
        Cmd::Simulate(c) => simple(&c, commands::simulate_cmd),
        Cmd::Bench { common, oracle } => {
            let cfg = load(&common)?;
            let oracle = oracle.as_deref().map(load_oracle).transpose()?;
            emit(&common.out, &bench_csv(&bench_rows(&cfg, oracle.as_ref())?)?)
        }
        Cmd::Crosscheck { common, oracle } => {
            let cfg = load(&common)?;
            let (report, failure) = crosscheck(&cfg, &load_oracle(&oracle)?)?;
            emit(&common.out, &report)?;
            failure.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
