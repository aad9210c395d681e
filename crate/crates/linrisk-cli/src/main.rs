//! `linrisk` — seeded experiments on the risk of linearized and mean-field
//! two-layer networks.
//!
//! Each subcommand reads an optional TOML config (one table per experiment),
//! with command-line flags overriding the common fields, runs replicas in
//! parallel with per-replica derived seeds, and writes a CSV or JSON table.
//! Output is bit-identical across reruns and thread counts.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure in any
//! replica (unless `--keep-going`, which records failures as flagged rows).

mod config;
mod experiments;
mod table;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, OutputFormat};
use experiments::{RunError, RunOutcome};

#[derive(Parser)]
#[command(name = "linrisk", version, about = "Risk experiments for linearized neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; flags override its common fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (replicas derive disjoint streams from it).
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicas.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: all cores). Output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Record per-replica numerical failures as flagged rows instead of
    /// exiting with code 3.
    #[arg(long)]
    keep_going: bool,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Deterministic-equivalent risk predictions for a spectrum.
    PredictRisk(Common),
    /// Empirical bias/variance of ridge regression on sampled designs.
    SimulateRidge(Common),
    /// Latent space model: closed-form risk vs Monte Carlo.
    Latent(Common),
    /// KRR staircase: theory plateau vs Monte Carlo across sample sizes.
    KrrStaircase(Common),
    /// Random-features double descent across widths.
    RfDoubleDescent(Common),
    /// NT kernel concentration diagnostic across widths.
    NtConcentration(Common),
    /// Finite-width NT risk vs its infinite-width KRR limit.
    NtVsKrr(Common),
    /// Mean-field training: online SGD, particle flow, or reduced flow.
    Meanfield(Common),
    /// Multi-start single-neuron gradient descent.
    SingleNeuron(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::PredictRisk(c)
            | Command::SimulateRidge(c)
            | Command::Latent(c)
            | Command::KrrStaircase(c)
            | Command::RfDoubleDescent(c)
            | Command::NtConcentration(c)
            | Command::NtVsKrr(c)
            | Command::Meanfield(c)
            | Command::SingleNeuron(c) => c,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let common = cli.command.common().clone();
    let file = match &common.config {
        Some(path) => match FileConfig::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("config error: {e}");
                return 2;
            }
        },
        None => FileConfig::default(),
    };
    let seed = common.seed.or(file.seed).unwrap_or(0);
    let reps = common.reps.or(file.reps).unwrap_or(20);
    let threads = common.threads.or(file.threads).unwrap_or(0);
    let format = common.format.or(file.format).unwrap_or(OutputFormat::Csv);
    let keep_going = common.keep_going || file.keep_going.unwrap_or(false);
    let out = common.out.clone().or_else(|| file.out.clone().map(PathBuf::from));

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if threads > 0 {
            b = b.num_threads(threads);
        }
        match b.build() {
            Ok(p) => p,
            Err(e) => {
                eprintln!("thread pool error: {e}");
                return 2;
            }
        }
    };

    let start = Instant::now();
    let outcome: Result<RunOutcome, RunError> = pool.install(|| match &cli.command {
        Command::PredictRisk(_) => {
            experiments::predict_risk_exp(&file.predict_risk.clone().unwrap_or_default(), seed)
        }
        Command::SimulateRidge(_) => experiments::simulate_ridge_exp(
            &file.simulate_ridge.clone().unwrap_or_default(),
            seed,
            reps,
        ),
        Command::Latent(_) => {
            experiments::latent_exp(&file.latent.clone().unwrap_or_default(), seed, reps)
        }
        Command::KrrStaircase(_) => experiments::krr_staircase_exp(
            &file.krr_staircase.clone().unwrap_or_default(),
            seed,
            reps,
        ),
        Command::RfDoubleDescent(_) => experiments::rf_double_descent_exp(
            &file.rf_double_descent.clone().unwrap_or_default(),
            seed,
            reps,
        ),
        Command::NtConcentration(_) => experiments::nt_concentration_exp(
            &file.nt_concentration.clone().unwrap_or_default(),
            seed,
        ),
        Command::NtVsKrr(_) => {
            experiments::nt_vs_krr_exp(&file.nt_vs_krr.clone().unwrap_or_default(), seed, reps)
        }
        Command::Meanfield(_) => {
            experiments::meanfield_exp(&file.meanfield.clone().unwrap_or_default(), seed)
        }
        Command::SingleNeuron(_) => {
            experiments::single_neuron_exp(&file.single_neuron.clone().unwrap_or_default(), seed)
        }
    });

    match outcome {
        Ok(mut res) => {
            res.table.metadata.wall_time_s = start.elapsed().as_secs_f64();
            let text = res.table.emit(format);
            match &out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("cannot write output: {e}");
                        return 2;
                    }
                }
                None => print!("{text}"),
            }
            if res.had_failures && !keep_going {
                eprintln!("numerical failure in at least one replica (rows flagged)");
                3
            } else {
                0
            }
        }
        Err(RunError::Validation(m)) => {
            eprintln!("validation error: {m}");
            2
        }
        Err(RunError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            3
        }
    }
}
