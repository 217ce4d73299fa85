//! Command-line harness: run, sweep, figures, frontier, check.
//!
//! Exit codes: 0 success, 2 configuration/usage errors, 3 numerical aborts,
//! 1 failed check suites.

mod checks;
mod config;
mod emit;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, ExperimentKind};
use emit::resolve_out_dir;

#[derive(Parser)]
#[command(
    name = "rmp",
    about = "Posterior-mean estimation for linear-Gaussian inverse problems by reverse mean propagation",
    long_about = "Runs the reverse-mean-propagation solver and its companions on \
Gaussian-mixture priors with linear-Gaussian measurements. Outputs are \
byte-reproducible from (config, seed); wall-clock data lives only in JSON \
summaries. The default output root is ./out, overridable by --out, the \
config's experiment.output_dir, or the RMP_OUT_ROOT environment variable."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides config and RMP_OUT_ROOT).
    #[arg(long)]
    out: Option<String>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep/frontier fan-out (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one solver run; writes trajectory.csv and summary.json.
    Run(CommonArgs),
    /// Solver outputs against the oracle over a measurement sweep.
    Sweep(CommonArgs),
    /// Emit the per-panel CSV data files for the mean-propagation figures.
    Figures(CommonArgs),
    /// Compare the solver against sample averaging at equal evaluation budgets.
    Frontier(CommonArgs),
    /// Run a named invariant suite against the built-in toy model.
    Check {
        /// One of: telescoping, gradients, kl-decomposition, oracles, tweedie, strategies, all.
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => dispatch(&args, ExperimentKind::Run, experiments::cmd_run),
        Command::Sweep(args) => dispatch(&args, ExperimentKind::Sweep, experiments::cmd_sweep),
        Command::Figures(args) => {
            dispatch(&args, ExperimentKind::Figures, experiments::cmd_figures)
        }
        Command::Frontier(args) => {
            dispatch(&args, ExperimentKind::Frontier, experiments::cmd_frontier)
        }
        Command::Check { suite } => run_check(&suite),
    };
    ExitCode::from(code)
}

fn dispatch(
    args: &CommonArgs,
    expected: ExperimentKind,
    run: fn(&ExperimentConfig, &std::path::Path, Option<u64>) -> anyhow::Result<i32>,
) -> u8 {
    if let Some(threads) = args.threads {
        // Ignore the error if a pool already exists (repeated dispatch in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config {}: {e}", args.config.display());
            return 2;
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}: {e}", args.config.display());
            return 2;
        }
    };
    if cfg.experiment.kind != expected {
        eprintln!(
            "error: config declares experiment.kind = {:?} but the subcommand expects {:?}",
            cfg.experiment.kind, expected
        );
        return 2;
    }
    let out = resolve_out_dir(args.out.as_deref(), cfg.experiment.output_dir.as_deref());
    match run(&cfg, &out, args.seed) {
        Ok(code) => code as u8,
        Err(e) => {
            eprintln!("error: {e}");
            // Configuration-shaped failures (bad dimensions, invalid values)
            // are config errors; anything numeric aborts with 3 inside run.
            2
        }
    }
}

fn run_check(suite: &str) -> u8 {
    match checks::run_suite(suite) {
        Ok(lines) => {
            let mut failed = false;
            for line in &lines {
                let tag = if !line.gating {
                    "note"
                } else if line.pass {
                    "ok"
                } else {
                    failed = true;
                    "FAIL"
                };
                println!("{tag:>4} {} — {}", line.name, line.detail);
            }
            let gating = lines.iter().filter(|l| l.gating).count();
            let passed = lines.iter().filter(|l| l.gating && l.pass).count();
            println!("{passed}/{gating} checks passed");
            if failed {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
