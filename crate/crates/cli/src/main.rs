//! `tierk`: optimal hot/cold tier placement for top-K stream workloads.

mod commands;
mod envelope;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{CompareArgs, GenTraceArgs, OptimizeArgs, ReplayArgs, Report, SimulateArgs, SweepArgs};

#[derive(Debug, Parser)]
#[command(name = "tierk", version, about = "Hot/cold tier placement for top-K stream workloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Print the JSON output envelope instead of a summary.
    #[arg(long, global = true, env = "TIERK_JSON")]
    json: bool,

    /// Worker threads for simulation (results do not depend on it).
    #[arg(long, global = true, env = "TIERK_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form optimal changeover index and its expected cost.
    Optimize(OptimizeArgs),
    /// Expected cost over a grid of changeover indices.
    Sweep(SweepArgs),
    /// Monte-Carlo simulation against the analytic expectations.
    Simulate(SimulateArgs),
    /// Replay a recorded score trace.
    Replay(ReplayArgs),
    /// Cost of single-tier and changeover strategies side by side.
    Compare(CompareArgs),
    /// Write a synthetic uniform-random score trace.
    GenTrace(GenTraceArgs),
}

fn run(cli: &Cli) -> anyhow::Result<Report> {
    match &cli.command {
        Command::Optimize(a) => commands::optimize(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Replay(a) => commands::replay(a),
        Command::Compare(a) => commands::compare(a),
        Command::GenTrace(a) => commands::gen_trace(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("TIERK_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::FAILURE;
        }
    }

    match run(&cli) {
        Ok(report) => {
            let mut out = std::io::stdout().lock();
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = if cli.json {
                writeln!(out, "{}", report.json)
            } else {
                write!(out, "{}", report.human)
            };
            ExitCode::from(report.exit_code)
        }
        Err(e) => {
            if cli.json {
                let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
                eprintln!("{}", json!({ "tool": envelope::TOOL, "error": chain }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::FAILURE
        }
    }
}
