use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sharp_energy::cli::{exit_code, run, Command, RunConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "sharp-energy",
    version,
    about = "Energy distributions of dense superpositions"
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build one distribution and summarize it
    Dist(Common),
    /// Sweep N and fit the decay of the relative width
    Scaling(Common),
    /// Compare exact Ising sums with the continuum and check stationarity
    Oracle(Common),
    /// Tables for a bounded and a two-lump profile
    Fig1(Common),
    /// Broad or non-normalizable counter-examples
    FailureDemo(Common),
}

#[derive(clap::Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Dist(c) => (Command::Dist, c),
        Cmd::Scaling(c) => (Command::Scaling, c),
        Cmd::Oracle(c) => (Command::Oracle, c),
        Cmd::Fig1(c) => (Command::Fig1, c),
        Cmd::FailureDemo(c) => (Command::FailureDemo, c),
    };
    let result = RunConfig::from_sources(
        command,
        common.config.as_deref(),
        &common.sets,
        common.out,
        std::env::var(OUT_DIR_ENV).ok(),
    )
    .and_then(|config| run(&config));
    match result {
        Ok((files, outcome)) => {
            for f in &files {
                println!("{}", f.display());
            }
            if outcome != "ok" {
                eprintln!("regime: {outcome}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.regime());
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
