use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tdem_cli::{run, Command};

#[derive(Parser)]
#[command(name = "tdem", version, about = "Energy-momentum stability analysis for bodies with time-varying inertia")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Paths {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate the full dynamics and report conservation.
    Simulate(Paths),
    /// Find and verify relative equilibria.
    Equilibria(Paths),
    /// Assemble the stability certificate for the configured equilibrium.
    Certify(Paths),
    /// Empirically probe stability of the configured equilibrium.
    Probe(Paths),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, paths) = match cli.command {
        Sub::Simulate(p) => (Command::Simulate, p),
        Sub::Equilibria(p) => (Command::Equilibria, p),
        Sub::Certify(p) => (Command::Certify, p),
        Sub::Probe(p) => (Command::Probe, p),
    };
    match run(command, &paths.config, paths.out.as_deref()) {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.name);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tdem {}: {e}", command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
