use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Spectral-Galerkin primitive equations: verification campaigns and solvers.
#[derive(Parser)]
#[command(version, after_help = primeq::cli::usage())]
struct Args {
    /// One of: identities, hypotheses, simulate, strong, clt, mdp, skeleton, rate
    subcommand: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides experiment.master_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = primeq::cli::run_from_file(&args.subcommand, &args.config, args.seed, args.out);
    ExitCode::from(code as u8)
}
