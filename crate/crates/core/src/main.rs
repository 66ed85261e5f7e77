use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use routh::harness::config::ScenarioConfig;
use routh::harness::scenario::{run_scenario, ScenarioRequest};
use routh::Error;

#[derive(Parser)]
#[command(name = "routh", version, about = "Routh reduction of magnetic Lagrangian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full system.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reduce at a momentum value, integrate and reconstruct.
    Reduce {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        connection: String,
        #[arg(long, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite on seeded probes.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare full and reduced trajectories.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> routh::Result<bool> {
    let load = |p: &PathBuf| ScenarioConfig::load(p).map(Some);
    let (name, req, out) = match cli.command {
        Command::Simulate { config, out } => {
            ("simulate", ScenarioRequest { config: load(&config)?, ..Default::default() }, Some(out))
        }
        Command::Reduce { config, connection, mu, out } => (
            "reduce",
            ScenarioRequest { config: load(&config)?, connection: Some(connection), mu: Some(mu), ..Default::default() },
            Some(out),
        ),
        Command::Verify { suite, seed, probes, config, out } => {
            let config = match config {
                Some(c) => load(&c)?,
                None => None,
            };
            let req = ScenarioRequest { config, suite: Some(suite), seed: Some(seed), probes: Some(probes), ..Default::default() };
            ("verify", req, out)
        }
        Command::Compare { config, tol, out } => {
            ("compare", ScenarioRequest { config: load(&config)?, tol: Some(tol), ..Default::default() }, out)
        }
    };
    let output = run_scenario(name, &req)?;
    for r in &output.reports {
        println!("{}", r.line());
    }
    if let Some(dir) = out {
        output.write(&dir)?;
    }
    Ok(output.pass())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
