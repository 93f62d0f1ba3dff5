//! `nonloc`: Werner thresholds, CHSH scans, LCHV feasibility and model construction.

mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{error, info};

use commands::{Globals, ModelKind};
use nonloc_core::feasibility::DEFAULT_STRATEGY_BUDGET;
use nonloc_core::hvmodels::DEFAULT_ATOM_BUDGET;
use nonloc_core::Error;
use report::{to_csv, Format, Report};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_INDETERMINATE: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "nonloc", version, about = "Local and causal hidden-variables models for bipartite quantum states")]
struct Cli {
    /// Output encoding (default json; `reproduce` defaults to table).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Overrides the command's numerical tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = DEFAULT_ATOM_BUDGET)]
    atom_budget: usize,
    #[arg(long, global = true, default_value_t = DEFAULT_STRATEGY_BUDGET)]
    strategy_budget: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Werner state (or the generalized family at `c`) and its entanglement flags.
    Werner {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Normalization, entanglement, LHV1 and separable-after-collapse thresholds.
    Thresholds {
        #[arg(long)]
        d: usize,
    },
    /// CHSH optimum of the Werner state after a rank-2 projection on both sides.
    Popescu {
        #[arg(long)]
        d: usize,
    },
    /// Existence of a local causal model for sequences up to length k.
    LhvCheck {
        #[arg(long)]
        state: String,
        #[arg(long)]
        context: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Builds and verifies a hidden-variables model.
    BuildModel {
        #[arg(long)]
        state: String,
        #[arg(long)]
        context: PathBuf,
        #[arg(long, value_enum)]
        kind: ModelKind,
        /// Separable decomposition for `--kind mix`.
        #[arg(long)]
        components: Option<PathBuf>,
        /// Writes the model JSON here instead of embedding it in the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stochastic model for a pair of commuting POVMs.
    ExtendPovm {
        #[arg(long)]
        state: String,
        #[arg(long)]
        povm1: PathBuf,
        #[arg(long)]
        povm2: PathBuf,
        /// Context of the single-measurement model; defaults to the joint eigenbases.
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Context-relative evidence for the indices of nonlocality.
    Classify {
        #[arg(long)]
        state: String,
    },
    /// Runs the acceptance suite.
    Reproduce,
}

/// Writes to stdout; a closed pipe is not an error.
fn write_out(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn emit(report: &Report, format: Format, start: Instant) {
    let v = report.to_value(start.elapsed().as_secs_f64());
    match format {
        Format::Csv => write_out(&to_csv(&v)),
        _ => write_out(&(serde_json::to_string_pretty(&v).expect("report serializes") + "\n")),
    }
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::LpNumericalFailure { .. } => EXIT_INDETERMINATE,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NONLOC_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let g = Globals { tol: cli.tol, seed: cli.seed, atom_budget: cli.atom_budget, strategy_budget: cli.strategy_budget };
    let start = Instant::now();
    let format = cli.format.unwrap_or(Format::Json);
    let result = match &cli.command {
        Command::Werner { d, c } => commands::werner_cmd(*d, *c, &g).map(|r| (r, EXIT_OK)),
        Command::Thresholds { d } => commands::thresholds_cmd(*d, &g).map(|r| (r, EXIT_OK)),
        Command::Popescu { d } => commands::popescu_cmd(*d, &g).map(|r| (r, EXIT_OK)),
        Command::LhvCheck { state, context, k } => commands::lhv_check_cmd(state, context, *k, &g)
            .map(|(r, indeterminate)| (r, if indeterminate { EXIT_INDETERMINATE } else { EXIT_OK })),
        Command::BuildModel { state, context, kind, components, out } => {
            commands::build_model_cmd(state, context, *kind, components.as_deref(), out.as_deref(), &g).map(|r| {
                let passed = r.results["verification"]["passed"].as_bool().unwrap_or(false);
                if !passed {
                    error!("model did not verify");
                }
                (r, EXIT_OK)
            })
        }
        Command::ExtendPovm { state, povm1, povm2, context } => {
            commands::extend_povm_cmd(state, povm1, povm2, context.as_deref(), &g).map(|r| (r, EXIT_OK))
        }
        Command::Classify { state } => commands::classify_cmd(state, &g).map(|r| (r, EXIT_OK)),
        Command::Reproduce => {
            let (report, outcomes) = commands::reproduce_cmd(&g);
            for o in &outcomes {
                info!("criterion {} {}", o.number, if o.passed { "passed" } else { "failed" });
            }
            let code = if outcomes.iter().all(|o| o.passed) { EXIT_OK } else { EXIT_ACCEPTANCE };
            if cli.format.is_none() || cli.format == Some(Format::Table) {
                write_out(&commands::table(&outcomes));
                return ExitCode::from(code);
            }
            Ok((report, code))
        }
    };
    match result {
        Ok((report, code)) => {
            emit(&report, format, start);
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
