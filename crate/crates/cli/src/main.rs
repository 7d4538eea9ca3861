//! `sdectl`: train SDE feedback policies, check gradients, validate schemes.
//!
//! Exit status: 0 success, 1 verification or training failure, 2 usage or
//! configuration error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sdectl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated risk-aversion weights, overriding `nu`.
    #[arg(long)]
    nu: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one policy per ν and write logs, checkpoints and evaluation data.
    Train(Common),
    /// Compare forward, adjoint and finite-difference gradients.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Strong convergence orders on GBM and inverse-flow reversibility.
    Convergence(Common),
    /// Simulate a checkpointed policy on evaluation paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the `checkpoint` key.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Tabulate a checkpointed policy over the state grid.
    PolicyGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(c) => commands::setup(c, None).and_then(|cfg| commands::train(&cfg, &c.out)),
        Command::GradCheck {
            common,
            corrupt_adjoint,
        } => commands::setup(common, None)
            .and_then(|cfg| commands::grad_check(&cfg, &common.out, *corrupt_adjoint)),
        Command::Convergence(c) => {
            commands::setup(c, None).and_then(|cfg| commands::convergence(&cfg, &c.out))
        }
        Command::Simulate { common, checkpoint } => commands::setup(common, checkpoint.as_deref())
            .and_then(|cfg| commands::simulate(&cfg, &common.out)),
        Command::PolicyGrid { common, checkpoint } => {
            commands::setup(common, checkpoint.as_deref())
                .and_then(|cfg| commands::policy_grid(&cfg, &common.out))
        }
    };
    match outcome {
        Ok(commands::Outcome::Passed) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Failed(msg)) => {
            eprintln!("sdectl: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("sdectl: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
