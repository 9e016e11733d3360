use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vcw_cli::commands::{self, CommandArgs};
use vcw_cli::error::CliResult;
use vcw_cli::manifest::RunManifest;

/// Visual-context-window extension toolkit: rotary frequency scaling,
/// progressive video-token pooling, memory budgeting, and toy-decoder
/// experiments.
#[derive(Debug, Parser)]
#[command(name = "vcw", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dump the per-dimension frequency scaling report.
    Rope(commands::rope::RopeArgs),
    /// Progressively pool a video embedding file.
    Pool(commands::pool::PoolArgs),
    /// Token and memory budget across pooling configurations.
    Plan(commands::plan::PlanArgs),
    /// Train the toy decoder on retrieval episodes.
    Train(commands::train::TrainArgs),
    /// Needle-in-a-haystack accuracy grid.
    Niah(commands::niah::NiahArgs),
    /// Sliding-window perplexity report.
    Ppl(commands::ppl::PplArgs),
    /// Re-execute a previous run from its manifest.
    Rerun {
        /// Path to a `.manifest.json` produced by any subcommand.
        manifest: PathBuf,
    },
}

fn dispatch(command: Command) -> CliResult<()> {
    let args = match command {
        Command::Rope(a) => CommandArgs::Rope(a.resolve()?),
        Command::Pool(a) => CommandArgs::Pool(a),
        Command::Plan(a) => CommandArgs::Plan(a.resolve()?),
        Command::Train(a) => CommandArgs::Train(a),
        Command::Niah(a) => CommandArgs::Niah(a),
        Command::Ppl(a) => CommandArgs::Ppl(a),
        Command::Rerun { manifest } => {
            let m = RunManifest::load(&manifest)?;
            m.verify_inputs()?;
            return m.config.run();
        }
    };
    args.run()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vcw: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
