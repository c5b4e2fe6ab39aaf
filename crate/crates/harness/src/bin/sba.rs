use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sba_core::engine::input_problem;
use sba_core::rate::solve_input_allocation;
use sba_core::{Procedure, SolverOptions64};
use sba_harness::{build_oracle, load_config, run_experiment, write_results, HarnessError, RunOptions};

#[derive(Parser)]
#[command(name = "sba", version, about = "Fixed-budget ranking and selection with streaming input data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replications and write the PCS curve.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_procedure)]
        procedure: Option<Procedure>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        oracle_mode: bool,
        /// Dump full estimator state every K stages.
        #[arg(long, value_name = "K")]
        dump_stage_state: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the first-stage input allocation and print it.
    SolveInput {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build or refresh the inventory ground-truth cache.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: Option<u64>,
    },
}

fn parse_procedure(s: &str) -> Result<Procedure, String> {
    Procedure::parse(s).ok_or_else(|| format!("unknown procedure `{s}` (expected sba, equal or jba)"))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(3, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, procedure, seed, reps, workers, oracle_mode, dump_stage_state, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(p) = procedure {
                cfg.procedure = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            cfg.oracle_mode |= oracle_mode;
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let opts = RunOptions { workers, dump_every: dump_stage_state };
            let result = run_experiment(&cfg, &opts)?;
            let csv = write_results(&cfg, &result, &dir)?;
            println!(
                "{} x{}: final PCS {:.4} (true best {}), {:.1}s -> {}",
                cfg.procedure,
                cfg.reps,
                result.curve.final_pcs(),
                result.truth.best,
                result.elapsed.as_secs_f64(),
                csv.display()
            );
        }
        Command::SolveInput { config } => {
            let cfg = load_config(&config)?;
            let problem = cfg.problem()?;
            let pae = input_problem(&problem, &cfg.settings(0))?;
            let sol = solve_input_allocation(&pae, &SolverOptions64::default())?;
            for (s, n) in sol.rates.iter().enumerate() {
                println!("n_hat[{s}] = {n:.6}");
            }
            println!("rate = {:.6e}", sol.achieved_rate);
            println!("kkt_residual = {:.3e}", sol.kkt_residual);
            println!("iterations = {} converged = {}", sol.iterations, sol.converged);
        }
        Command::Oracle { config, n } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = n {
                cfg.oracle.replications = n;
            }
            let (path, cache) = build_oracle(&cfg)?;
            let est = &cache.estimate;
            println!("best design {} (min paired z {:.1})", est.best, est.min_gap_z);
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
