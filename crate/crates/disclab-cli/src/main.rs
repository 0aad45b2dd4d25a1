//! `disclab`: seeded discretization experiments with CSV output.
//!
//! Exit status: 0 when every tolerance is met, 2 on a tolerance failure,
//! 1 on configuration or runtime errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod circle;
mod config;
mod linear;
mod output;
mod tree;

use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::Common;
use crate::output::Status;

#[derive(Parser, Debug)]
#[command(
    name = "disclab",
    version,
    about = "Discretization experiments for homothety chains and expanding circle maps"
)]
struct Cli {
    /// Worker threads [default: all cores].
    #[arg(long, global = true, env = "DISCLAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Linear chain: empirical vs closed-form d_C², roundoff discrepancy, affine oracle.
    Linear(With<linear::LinearArgs>),
    /// Decorated tree: closed form, empirical value and pair correlations.
    Tree(With<tree::TreeArgs>),
    /// Circle map: convergence table of N²d_C² against the limit formulas.
    Circle(With<circle::CircleArgs>),
    /// Circle map convergence study with tolerance checks.
    Verify(With<circle::CircleArgs>),
}

#[derive(Args, Debug)]
struct With<A: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    args: A,
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Linear(w) => linear::run(&w.args, &w.common),
        Command::Tree(w) => tree::run(&w.args, &w.common),
        Command::Circle(w) => circle::run_circle(&w.args, &w.common),
        Command::Verify(w) => circle::run_verify(&w.args, &w.common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::ToleranceFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
