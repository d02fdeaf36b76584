//! Command-line front end: run scenarios, validate scenario files, and
//! check the bundled reference scenario against its expected snapshots.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lbsim::render::{render_metrics, render_review_matrix_with, render_trace, TableOptions};
use lbsim::scenario::parse_scenario;
use lbsim::simulator::{run, RunOptions, SimError, Strategy};
use lbsim::golden;

#[derive(Parser)]
#[command(
    name = "lbsim",
    about = "Deterministic simulator for two-tier heterogeneous web-server load balancing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and emit tables, trace and/or metrics.
    Run {
        /// Path to a .scn scenario file.
        scenario: PathBuf,
        /// Placement strategy: the built-in two-tier scheme or a baseline.
        #[arg(long, value_enum, default_value_t = StrategyArg::Paper)]
        strategy: StrategyArg,
        /// Seed override for the baselines (defaults to the scenario's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Which sections to print.
        #[arg(long, value_enum, default_value_t = EmitArg::Tables)]
        emit: EmitArg,
        /// Check memory conservation, job uniqueness and status consistency
        /// after every tick.
        #[arg(long)]
        audit: bool,
    },
    /// Parse and validate a scenario file without running it.
    Validate {
        /// Path to a .scn scenario file.
        scenario: PathBuf,
    },
    /// Run the bundled reference scenario and diff its three snapshots.
    Golden,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    /// Two-tier capability routing with rebalancing.
    Paper,
    /// Global round-robin baseline.
    Rr,
    /// Seeded uniform-random baseline.
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(arg: StrategyArg) -> Self {
        match arg {
            StrategyArg::Paper => Strategy::TwoTier,
            StrategyArg::Rr => Strategy::RoundRobin,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitArg {
    Tables,
    Trace,
    Metrics,
    All,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            strategy,
            seed,
            emit,
            audit,
        } => cmd_run(&scenario, strategy.into(), seed, emit, audit),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Golden => cmd_golden(),
    }
}

fn read_scenario(path: &PathBuf) -> Result<lbsim::Scenario, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_FAILURE));
        }
    };
    parse_scenario(&text).map_err(|errors| {
        for error in &errors {
            eprintln!("{error}");
        }
        ExitCode::from(EXIT_INVALID)
    })
}

fn table_options_from_env() -> TableOptions {
    let min_column_width = std::env::var("LBSIM_TABLE_WIDTH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    TableOptions { min_column_width }
}

fn cmd_run(
    path: &PathBuf,
    strategy: Strategy,
    seed: Option<u64>,
    emit: EmitArg,
    audit: bool,
) -> ExitCode {
    let scenario = match read_scenario(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let output = match run(
        scenario,
        RunOptions {
            strategy,
            seed,
            audit,
        },
    ) {
        Ok(output) => output,
        Err(SimError::Validation(errors)) => {
            for error in &errors {
                eprintln!("{error}");
            }
            return ExitCode::from(EXIT_INVALID);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let tables = || render_review_matrix_with(&output.state, table_options_from_env());
    match emit {
        EmitArg::Tables => print!("{}", tables()),
        EmitArg::Trace => print!("{}", render_trace(&output.trace)),
        EmitArg::Metrics => print!("{}", render_metrics(&output.metrics)),
        EmitArg::All => {
            print!("# trace\n{}", render_trace(&output.trace));
            print!("# tables\n{}", tables());
            print!("# metrics\n{}", render_metrics(&output.metrics));
        }
    }
    ExitCode::SUCCESS
}

fn cmd_validate(path: &PathBuf) -> ExitCode {
    match read_scenario(path) {
        Ok(scenario) => {
            let servers: usize = scenario
                .config
                .clusters
                .iter()
                .map(|c| c.servers.len())
                .sum();
            println!(
                "ok: {} clusters, {} servers, {} events, ticks 0-{}",
                scenario.config.clusters.len(),
                servers,
                scenario.events.len(),
                scenario.last_tick
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn cmd_golden() -> ExitCode {
    match golden::check() {
        Ok(()) => {
            println!("initial: ok");
            println!("after-assignment: ok");
            println!("after-rebalance: ok");
            ExitCode::SUCCESS
        }
        Err(mismatches) => {
            for m in &mismatches {
                eprintln!("mismatch at checkpoint '{}':", m.checkpoint);
                eprintln!("--- expected ---\n{}", m.expected);
                eprintln!("--- actual ---\n{}", m.actual);
            }
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
