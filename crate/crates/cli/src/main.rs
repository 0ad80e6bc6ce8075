//! `sgdscale` — rate tables, dataset analysis, seeded sweeps and the
//! verification battery for interpolated mini-batch SGD.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 verification failure,
//! 3 i/o error. All commands are deterministic given flags and seeds.

mod analyze;
mod rates_cmd;
mod sweep;
mod verify_cmd;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "sgdscale",
    version,
    about = "Step-size and batch-size calculus for interpolated mini-batch SGD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the closed-form rate table for given spectral constants.
    Rates(rates_cmd::RatesArgs),
    /// Run seeded SGD over a batch-size grid and write trace/aggregate CSVs.
    Sweep(sweep::SweepArgs),
    /// Compute spectral constants and step-size recommendations for a dataset.
    Analyze(analyze::AnalyzeArgs),
    /// Run the oracle verification battery.
    Verify(verify_cmd::VerifyArgs),
}

fn classify(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<sgdscale::Error>() {
        match e {
            sgdscale::Error::Io(_) | sgdscale::Error::Csv(_) | sgdscale::Error::Parse { .. } => 3,
            _ => 1,
        }
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        3
    } else {
        1
    }
}

fn init_threads() {
    if let Ok(value) = std::env::var("SGDSCALE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    init_threads();

    let outcome = match cli.command {
        Command::Rates(args) => rates_cmd::run(args),
        Command::Sweep(args) => sweep::run(args),
        Command::Analyze(args) => analyze::run(args),
        Command::Verify(args) => verify_cmd::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(classify(&err));
        }
    }
}
