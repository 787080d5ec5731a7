use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgecurrents::report::{self, exit_code, RunOptions};

/// Dispersion curves, edge currents and estimate checks for quantum Hall strips and cylinders.
#[derive(Parser)]
#[command(name = "edgecurrents", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: `output` from the config, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for fiber solves.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for a small random modulation of packet profiles.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Trace dispersion curves and check their shape.
    Dispersion,
    /// Edge current of the configured packet.
    Current,
    /// Cylinder mode spectrum and optional perturbed solve.
    Cylinder,
    /// Run verification suites.
    Verify,
    /// Current growth across a field sweep.
    Scaling,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let opts = RunOptions {
        out: cli.out,
        seed: cli.seed,
    };
    let result = report::load_config(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Dispersion => report::dispersion(&cfg, &opts),
        Command::Current => report::current(&cfg, &opts),
        Command::Cylinder => report::cylinder(&cfg, &opts),
        Command::Verify => report::verify(&cfg, &opts),
        Command::Scaling => report::scaling(&cfg, &opts),
    });
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
