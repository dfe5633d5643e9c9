//! `pdmp`: batch experiment runner.
//!
//! Exit codes: 0 ok, 1 i/o, 2 config, 3 model, 4 numerical non-convergence.

mod actions;
mod config;
mod error;
mod manifest;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Action, Overrides};
use error::CliError;

#[derive(Parser)]
#[command(name = "pdmp", version, about = "Simulate, evolve and classify piecewise deterministic jump processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample embedded-chain trajectories.
    Simulate(Common),
    /// Evolve a density with the Dyson-Phillips series.
    Evolve(Common),
    /// Decide whether the minimal semigroup is stochastic.
    Classify(Common),
    /// Check kernel normalization and sampling.
    Audit(Common),
    /// Tabulate closed-form explosion laws and surviving mass.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers`); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(action: Action, args: Common) -> Result<Option<String>, CliError> {
    let bytes = std::fs::read(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = config::parse(text)?;
    let ov = Overrides { out: args.out, workers: args.workers, seed: args.seed };
    let resolved = config::resolve(cfg, action, &args.config, ov)?;
    let report = actions::run(&resolved)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let status = match &report.non_converged {
        Some(m) => format!("non_converged: {m}"),
        None => "ok".into(),
    };
    let mut m = manifest::Manifest::new(action.as_str(), &bytes, resolved.seeded.then_some(resolved.seed), resolved.workers, status);
    m.add_outputs(&resolved.output, &report.files)?;
    m.write(&resolved.output)?;
    println!("{}: wrote {} files to {}", action.as_str(), report.files.len() + 1, resolved.output.display());
    Ok(report.non_converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (action, args) = match cli.command {
        Command::Simulate(a) => (Action::Simulate, a),
        Command::Evolve(a) => (Action::Evolve, a),
        Command::Classify(a) => (Action::Classify, a),
        Command::Audit(a) => (Action::Audit, a),
        Command::Oracle(a) => (Action::Oracle, a),
    };
    match execute(action, args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(m)) => {
            let e = CliError::NonConvergence(m);
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
