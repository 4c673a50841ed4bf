//! `qgcc`: guaranteed-cost analysis, coherent controller synthesis,
//! oracle verification and squeezer realization from the command line.
//!
//! Exit codes: 0 feasible/sound, 1 infeasible or unrealizable, 2 bad
//! configuration, 3 solver failure, 4 verification found violations.

mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Common, RealizeArgs, SweepArgs, SynthArgs, VerifyArgs, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "qgcc", version, about = "Guaranteed-cost analysis and coherent control of uncertain linear quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certified cost bound for the open loop.
    Analyze(Common),
    /// Synthesize a coherent controller and write it as JSON.
    Synthesize(SynthArgs),
    /// Sweep kappa or theta and tabulate bounds.
    Sweep(SweepArgs),
    /// Check a bound against the Lyapunov oracle over sampled perturbations.
    Verify(VerifyArgs),
    /// Realize a single-mode controller with a static squeezer.
    Realize(RealizeArgs),
}

fn configure_threads() {
    if let Ok(v) = std::env::var("QGCC_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                qgcc_core::parallel::configure_threads(n);
            }
            _ => eprintln!("ignoring QGCC_THREADS={v:?}: expected a positive integer"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Analyze(c) => commands::analyze(c),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Verify(a) => commands::verify(a),
        Command::Realize(a) => commands::realize(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
