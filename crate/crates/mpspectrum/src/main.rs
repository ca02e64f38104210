use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpspectrum::report::{self, RunFlags};

/// Limiting spectral distributions of `B + X'AX/n`: analysis and Monte
/// Carlo validation driven by a JSON problem description.
#[derive(Parser)]
#[command(name = "mpspectrum", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Problem description file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the produced artifacts.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Monte Carlo seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix dimension override for simulation-backed subcommands.
    #[arg(long)]
    n: Option<usize>,
    /// Grid size override (density points / support scan resolution).
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Determine the support: intervals, atoms, edges, curve CSV and figure.
    Support(CommonArgs),
    /// Sample the boundary density on a grid covering the support.
    Density(CommonArgs),
    /// Point masses of the limit law.
    Masses(CommonArgs),
    /// Square-root edge records.
    Edges(CommonArgs),
    /// Draw one matrix ensemble and dump its spectrum.
    Simulate(CommonArgs),
    /// Full audit: KS distance, gap and atom checks, edge-slope fits.
    Validate(CommonArgs),
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MPSPECTRUM_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Command::Support(a) => (report::Subcommand::Support, a),
        Command::Density(a) => (report::Subcommand::Density, a),
        Command::Masses(a) => (report::Subcommand::Masses, a),
        Command::Edges(a) => (report::Subcommand::Edges, a),
        Command::Simulate(a) => (report::Subcommand::Simulate, a),
        Command::Validate(a) => (report::Subcommand::Validate, a),
    };
    let flags = RunFlags {
        out_dir: args.out_dir,
        seed: args.seed,
        n: args.n,
        grid: args.grid,
    };
    match report::run(cmd, &args.spec, &flags) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
