//! `tightq` — experiment CLI around the penalized Q-learning library.
//!
//! Exit codes: 0 success, 2 usage or config errors, 3 numerical divergence,
//! 4 I/O failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_audit, cmd_curve, cmd_oracle, cmd_scores, cmd_train, ScoreMode, TrainArgs};
use tightq::CoreError;

#[derive(Parser)]
#[command(name = "tightq", version, about = "Q-learning with multi-step optimality bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a TOML spec, one directory per seed.
    Train {
        /// Experiment spec file.
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds to run (overrides the spec).
        #[arg(long)]
        seeds: Option<usize>,
        /// Output root (overrides the spec and TIGHTQ_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the penalty coefficient; 0 runs the plain DQN baseline.
        #[arg(long)]
        lambda: Option<f64>,
        /// Also dump each seed's replay memory as JSONL.
        #[arg(long)]
        dump_replay: bool,
    },
    /// Solve an MDP file exactly and write the Q* table.
    Oracle {
        /// MDP interchange file.
        #[arg(long)]
        mdp: PathBuf,
        /// Discount factor in [0,1).
        #[arg(long)]
        gamma: f64,
        /// Convergence tolerance on the Bellman residual.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output directory (default: current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute normalized scores / improvements / summaries from a score CSV.
    Scores {
        /// CSV with header game,random,human,agent[,baseline].
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: ScoreMode,
        /// Write the report JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute bounds offline from a replay dump and a checkpoint.
    Audit {
        /// Replay dump (JSONL) from `train --dump-replay`.
        #[arg(long)]
        dump: PathBuf,
        /// Checkpoint file providing live and frozen parameters.
        #[arg(long)]
        ckpt: PathBuf,
        /// Constraint horizon K.
        #[arg(long)]
        k: usize,
        /// Write the full audit JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smooth a training log into a plot-ready learning curve.
    Curve {
        /// Training log CSV from `train`.
        #[arg(long)]
        log: PathBuf,
        /// Trailing moving-average window.
        #[arg(long, default_value_t = 4)]
        window: usize,
        /// Write the curve CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> tightq::Result<()> {
    match cli.command {
        Command::Train { config, seeds, out, lambda, dump_replay } => {
            cmd_train(TrainArgs { config, seeds, out, lambda, dump_replay })
        }
        Command::Oracle { mdp, gamma, tol, out } => cmd_oracle(&mdp, gamma, tol, out),
        Command::Scores { input, mode, out } => cmd_scores(&input, mode, out),
        Command::Audit { dump, ckpt, k, out } => cmd_audit(&dump, &ckpt, k, out),
        Command::Curve { log, window, out } => cmd_curve(&log, window, out),
    }
}

fn exit_code(err: &CoreError) -> u8 {
    match err {
        CoreError::Divergence { .. } | CoreError::NoConvergence(_) => 3,
        CoreError::Io(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
