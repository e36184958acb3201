use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rd_cli::commands;
use rd_cli::config::Config;
use rd_cli::CliError;

/// Bifurcation analysis and dynamics for reaction-diffusion equations with
/// distributed temporal delay on an interval.
#[derive(Parser)]
#[command(name = "rdtool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment description: flat `key = value` lines, `#` comments.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving CSV/SVG artifacts (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized starts; overrides the config's `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate onset diffusivity and branch data over a delay-scale grid.
    BifTable(Common),
    /// Continue a steady-state branch and record stability along it.
    Branch(Common),
    /// Integrate the auxiliary-field system and classify the outcome.
    Simulate(Common),
    /// Compare the auxiliary-field route against direct memory quadrature.
    VerifyEquivalence(Common),
    /// Multi-start search for distinct positive steady states.
    UniquenessProbe(Common),
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let common = match command {
        Command::BifTable(c)
        | Command::Branch(c)
        | Command::Simulate(c)
        | Command::VerifyEquivalence(c)
        | Command::UniquenessProbe(c) => c,
    };
    let cfg = Config::load(&common.config)?;
    std::fs::create_dir_all(&common.out).map_err(|e| {
        CliError::Io(format!(
            "cannot create output directory `{}`: {e}",
            common.out.display()
        ))
    })?;
    match command {
        Command::BifTable(c) => commands::cmd_bif_table(&cfg, &c.out),
        Command::Branch(c) => commands::cmd_branch(&cfg, &c.out),
        Command::Simulate(c) => commands::cmd_simulate(&cfg, &c.out),
        Command::VerifyEquivalence(c) => commands::cmd_verify_equivalence(&cfg, &c.out),
        Command::UniquenessProbe(c) => commands::cmd_uniqueness_probe(&cfg, &c.out, c.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
