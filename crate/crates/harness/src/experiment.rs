use std::time::{Duration, Instant};

use rayon::prelude::*;

use sba_core::engine::run;
use sba_core::StageHistory64;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::pcs::{empirical_pcs, PcsCurve};
use crate::truth::{ground_truth, GroundTruth};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the rayon default when `None`.
    pub workers: Option<usize>,
    /// Keep full estimator snapshots every this many stages.
    pub dump_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub truth: GroundTruth,
    pub curve: PcsCurve,
    /// One history per replication, in replication order.
    pub histories: Vec<StageHistory64>,
    pub elapsed: Duration,
}

/// Runs every replication and scores the selections against the true best.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let truth = ground_truth(cfg)?;
    let problem = cfg.problem()?;
    let start = Instant::now();
    let job = |r: u64| {
        let mut settings = cfg.settings(r);
        settings.snapshot_every = opts.dump_every;
        run(cfg.procedure, &problem, &settings)
    };
    let histories = match opts.workers {
        Some(0) => return Err(HarnessError::Config("workers must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| HarnessError::Runtime(e.to_string()))?;
            pool.install(|| (0..cfg.reps).into_par_iter().map(job).collect::<sba_core::Result<Vec<_>>>())?
        }
        None => (0..cfg.reps).into_par_iter().map(job).collect::<sba_core::Result<Vec<_>>>()?,
    };
    let selections: Vec<Vec<usize>> = histories.iter().map(|h| h.selections()).collect();
    let curve = empirical_pcs(&selections, truth.best)?;
    Ok(ExperimentResult { truth, curve, histories, elapsed: start.elapsed() })
}
