use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinsea_cli::{configure_threads, run_scenario, CliError, Command, RawConfig, Scenario};

#[derive(Parser)]
#[command(name = "kinsea", about = "Disk in a forced kinetic sea: drag, decay and Monte Carlo checks")]
struct Cli {
    /// Scenario file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set body.V0=0.01`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the admissibility inequalities and print the decay exponents.
    Validate,
    /// Solve for the equilibrium velocity and the relaxation rate.
    Equilibrium,
    /// Solve the coupled problem and write the force time series.
    Run,
    /// Run the particle simulation.
    Mc,
    /// Fit decay rates to a velocity series.
    DecayFit {
        /// CSV with `t` and `V` columns; solves the scenario when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare the deterministic solution with the particle simulation.
    Compare,
}

fn scenario(cli: &Cli) -> Result<Scenario, CliError> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        raw.apply_override(o)?;
    }
    if let Some(out) = &cli.out {
        raw.set("output.dir", &out.to_string_lossy()).map_err(CliError::Config)?;
    }
    Scenario::from_raw(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match &cli.command {
        Sub::Validate => Command::Validate,
        Sub::Equilibrium => Command::Equilibrium,
        Sub::Run => Command::Run,
        Sub::Mc => Command::Mc,
        Sub::DecayFit { input } => Command::DecayFit(input.clone()),
        Sub::Compare => Command::Compare,
    };
    let result = configure_threads().and_then(|_| scenario(&cli)).and_then(|sc| run_scenario(&command, &sc));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.report);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kinsea {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
