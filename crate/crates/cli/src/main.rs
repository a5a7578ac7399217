use std::path::PathBuf;
use std::process::ExitCode;

use branchsim_cli::{run_file, validate_file, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "branchsim", version, about = "Branch decompositions and real-state trajectories for bipartite quantum models")]
struct Cli {
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for sampling the realized branch (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a configuration without computing anything.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed } => run_file(&config, &RunOptions { out, seed }).map(|s| {
            if !cli.quiet {
                println!(
                    "wrote {} files to {} ({} branches at the last horizon, converged: {})",
                    s.files.len(),
                    s.output_dir.display(),
                    s.branch_count,
                    s.converged
                );
                if let Some(label) = s.realized {
                    println!("realized branch: {label}");
                }
            }
        }),
        Command::Validate { config } => validate_file(&config).map(|v| {
            if !cli.quiet {
                println!(
                    "{}: valid ({} model, {} horizons, {} sample times)",
                    config.display(),
                    v.model.name,
                    v.config.horizons.len(),
                    v.config.times.len()
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
