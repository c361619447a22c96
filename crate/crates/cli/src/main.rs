use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flexkrylov_cli::{list_problems, list_solvers, report, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "flexkrylov", about = "Flexible Krylov experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (defaults to the config's stem).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the problem noise seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize the traces in a directory as a markdown table.
    Report { dir: PathBuf },
    /// List the available problem generators.
    ListProblems,
    /// List the available solvers.
    ListSolvers,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), flexkrylov_cli::CliError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.problem.seed = seed;
            }
            let out_dir = out.unwrap_or_else(|| {
                config
                    .file_stem()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("experiment"))
            });
            run_experiment(&cfg, &out_dir)?;
            println!("wrote {}", out_dir.display());
            Ok(())
        }
        Command::Report { dir } => {
            let table = report(&dir)?;
            print!("{table}");
            Ok(())
        }
        Command::ListProblems => {
            println!("{}", list_problems());
            Ok(())
        }
        Command::ListSolvers => {
            println!("{}", list_solvers());
            Ok(())
        }
    }
}
