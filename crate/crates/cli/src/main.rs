use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mocp_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "mocp", version, about = "Multiobjective optimal control on POD reduced models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthetic snapshots from the chirp reference control.
    Generate(Common),
    /// POD modes and spectrum of a snapshot file.
    Pod(Common),
    /// Galerkin assembly and calibration.
    Rom(Common),
    /// Pareto front by reference points or subdivision.
    Solve(Common),
    /// Re-evaluates a front on the high-fidelity surrogate.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `threads` key.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (must exist); overrides the `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_logging() {
    let raw = std::env::var("MOCP_LOG").unwrap_or_default();
    let level = match raw.as_str() {
        "" | "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => {
            eprintln!("MOCP_LOG={other} not one of error, info, debug; using error");
            log::LevelFilter::Error
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let (cmd, c) = match cli.command {
        Cmd::Generate(c) => (Command::Generate, c),
        Cmd::Pod(c) => (Command::Pod, c),
        Cmd::Rom(c) => (Command::Rom, c),
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Validate(c) => (Command::Validate, c),
    };
    let ov = Overrides { seed: c.seed, threads: c.threads, out: c.out };
    let result = RunConfig::load(&c.config, &ov).and_then(|cfg| run(cmd, &cfg));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mocp: {e}");
            ExitCode::from(e.code.clamp(1, 255) as u8)
        }
    }
}
