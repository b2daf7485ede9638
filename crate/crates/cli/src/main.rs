use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedfair_cli::{cmd_datasheet, cmd_evaluate, cmd_generate, cmd_simulate, prepare, CliError, PipelineConfig};

/// Fairness benchmarking for federated learning on tabular data.
#[derive(Parser)]
#[command(name = "fedfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a federation and write it with its datasheet.
    Generate(CommonArgs),
    /// Fairness tables for true labels and local models.
    Evaluate(CommonArgs),
    /// FedAvg (and the fair arm when configured) with comparison reports.
    Simulate(CommonArgs),
    /// Regenerate the datasheet of a written federation.
    Datasheet(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

type Runner = fn(&PipelineConfig, &str) -> Result<(), CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDFAIR_LOG", "warn")).init();
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, Runner) = match &cli.command {
        Command::Generate(a) => (a, cmd_generate),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Datasheet(a) => (a, cmd_datasheet),
    };
    let result = prepare(&args.config, args.out.as_deref(), args.seed).and_then(|(cfg, text)| run(&cfg, &text));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedfair: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
