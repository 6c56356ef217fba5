use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biharmonic::cli::{exit, run_file, Kind};

/// Spectral analysis and boundary null control of the clamped biharmonic
/// Schrödinger equation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues, boundary traces and residuals.
    Spectrum(Common),
    /// Spacing, gap and trace laws against the characteristic roots.
    Asymptotics(Common),
    /// Gram-based observability constants per horizon.
    Observability(Common),
    /// Moment and HUM null controls with forward verification.
    Control(Common),
    /// Free evolution snapshots of the initial state.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for horizon sweeps.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Spectrum(a) => (Kind::Spectrum, a),
        Command::Asymptotics(a) => (Kind::Asymptotics, a),
        Command::Observability(a) => (Kind::Observability, a),
        Command::Control(a) => (Kind::Control, a),
        Command::Simulate(a) => (Kind::Simulate, a),
    };
    match run_file(kind, &args.config, args.out.as_deref(), args.threads) {
        Ok(report) => {
            for (stage, t) in &report.timings {
                eprintln!("{stage}: {:.3} s", t.as_secs_f64());
            }
            for f in &report.files {
                println!("{f}");
            }
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
