//! Stage loop of the simultaneous allocation procedure and its baselines.
//!
//! Every stage first decides integer increments for each input stream and
//! each design from estimates built on data up to the previous stage, then
//! runs the simulations under the estimate in force and finally collects the
//! new input data. Counts move inside the allocation loops, statistics only
//! once the data exist.

mod alloc;
mod run;

pub use alloc::{
    allocate_input_equal, allocate_input_stage, allocate_simulation_equal, allocate_simulation_stage,
    simulate_one_choice, BalanceInputs,
};
pub use run::{input_problem, run, run_equal, run_jba, run_sba, run_static};

pub use crate::rate::Partition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{BankSnapshot, Floors};
use crate::input::ParametricFamily;
use crate::models::SimulationModel;
use crate::rate::SolverOptions;
use crate::scalar::Scalar;

/// Input streams, their partition into budget groups, and the simulation
/// budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamLayout<F> {
    pub families: Vec<ParametricFamily>,
    /// Cost `c_s` of one draw of each stream.
    pub costs: Vec<F>,
    pub partitions: Vec<Partition<F>>,
    /// Cost `d_i` of one replication of each design.
    pub sim_costs: Vec<F>,
    /// Stage simulation budget `M`.
    pub sim_budget: F,
}

impl<F: Scalar> StreamLayout<F> {
    pub fn stream_count(&self) -> usize {
        self.families.len()
    }

    pub fn design_count(&self) -> usize {
        self.sim_costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.families.len();
        if self.costs.len() != s {
            return Err(Error::Config(format!("{} stream costs for {s} streams", self.costs.len())));
        }
        if self.costs.iter().any(|c| !(*c > F::zero()) || !c.is_finite()) {
            return Err(Error::Config("stream costs must be positive".into()));
        }
        if self.sim_costs.is_empty() {
            return Err(Error::Config("no designs".into()));
        }
        if self.sim_costs.iter().any(|d| !(*d > F::zero()) || !d.is_finite()) {
            return Err(Error::Config("simulation costs must be positive".into()));
        }
        if !(self.sim_budget > F::zero()) || !self.sim_budget.is_finite() {
            return Err(Error::Config("simulation budget must be positive".into()));
        }
        let mut seen = vec![false; s];
        for (j, p) in self.partitions.iter().enumerate() {
            if p.streams.is_empty() {
                return Err(Error::Config(format!("partition {j} is empty")));
            }
            if !(p.budget > F::zero()) || !p.budget.is_finite() {
                return Err(Error::Config(format!("partition {j} budget must be positive")));
            }
            if p.given && p.streams.len() != 1 {
                return Err(Error::Config(format!("given partition {j} must hold exactly one stream")));
            }
            for &st in &p.streams {
                if st >= s {
                    return Err(Error::UnknownStream(st));
                }
                if std::mem::replace(&mut seen[st], true) {
                    return Err(Error::Config(format!("stream {st} appears in two partitions")));
                }
            }
        }
        if let Some(st) = seen.iter().position(|x| !x) {
            return Err(Error::Config(format!("stream {st} belongs to no partition")));
        }
        Ok(())
    }

    /// Mask of streams whose collection is actively allocated.
    pub fn active_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.families.len()];
        for p in self.partitions.iter().filter(|p| !p.given) {
            for &s in &p.streams {
                mask[s] = true;
            }
        }
        mask
    }
}

/// Model, layout and true input parameters of one selection problem.
#[derive(Debug, Clone)]
pub struct Problem<F, M> {
    pub model: M,
    pub layout: StreamLayout<F>,
    /// True parameter vector of each stream.
    pub theta: Vec<Vec<F>>,
}

impl<F: Scalar, M: SimulationModel<F>> Problem<F, M> {
    pub fn new(model: M, layout: StreamLayout<F>, theta: Vec<Vec<F>>) -> Result<Self> {
        let p = Self { model, layout, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let s = self.layout.stream_count();
        if self.model.stream_count() != s {
            return Err(Error::Config(format!(
                "model expects {} streams, layout has {s}",
                self.model.stream_count()
            )));
        }
        if self.model.design_count() != self.layout.design_count() {
            return Err(Error::Config(format!(
                "model has {} designs, layout prices {}",
                self.model.design_count(),
                self.layout.design_count()
            )));
        }
        if self.theta.len() != s {
            return Err(Error::Config(format!("{} true parameters for {s} streams", self.theta.len())));
        }
        for (fam, th) in self.layout.families.iter().zip(&self.theta) {
            fam.validate(th)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBalance {
    /// Rate function including the best design's simulation variance.
    #[default]
    Exact,
    /// Best design's simulation term dropped from the rate function.
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    #[default]
    Sba,
    Equal,
    Jba,
}

impl Procedure {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sba" => Some(Self::Sba),
            "equal" => Some(Self::Equal),
            "jba" => Some(Self::Jba),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sba => "sba",
            Self::Equal => "equal",
            Self::Jba => "jba",
        }
    }
}

impl std::fmt::Display for Procedure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings<F> {
    /// Number of stages `T`.
    pub stages: usize,
    /// Initial draws per stream.
    pub n0: u64,
    /// Initial replications per design.
    pub m0: u64,
    pub seed: u64,
    pub replication: u64,
    /// Drive the allocation with true parameters instead of estimates.
    pub oracle_mode: bool,
    pub rate_balance: RateBalance,
    pub solver: SolverOptions<F>,
    pub floors: Floors<F>,
    /// Keep a full state snapshot every this many stages.
    pub snapshot_every: Option<usize>,
}

impl<F: Scalar> Default for RunSettings<F> {
    fn default() -> Self {
        Self {
            stages: 0,
            n0: 2,
            m0: 2,
            seed: 0,
            replication: 0,
            oracle_mode: false,
            rate_balance: RateBalance::Exact,
            solver: SolverOptions::default(),
            floors: Floors::default(),
            snapshot_every: None,
        }
    }
}

impl<F: Scalar> RunSettings<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n0 < 2 || self.m0 < 2 {
            return Err(Error::Config(format!(
                "initial sample sizes must be at least 2 (n0 = {}, m0 = {})",
                self.n0, self.m0
            )));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::Config("snapshot interval must be positive".into()));
        }
        Ok(())
    }
}

/// Cumulative and per-stage sample counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationState {
    pub stage: usize,
    pub n0: u64,
    pub m0: u64,
    pub input_counts: Vec<u64>,
    pub sim_counts: Vec<u64>,
    pub input_increments: Vec<u64>,
    pub sim_increments: Vec<u64>,
}

impl AllocationState {
    pub fn new(streams: usize, designs: usize, n0: u64, m0: u64) -> Self {
        Self {
            stage: 0,
            n0,
            m0,
            input_counts: vec![n0; streams],
            sim_counts: vec![m0; designs],
            input_increments: vec![0; streams],
            sim_increments: vec![0; designs],
        }
    }

    /// `sum_{s in S_j} c_s (N_s - n0)`.
    pub fn input_spent<F: Scalar>(&self, layout: &StreamLayout<F>, partition: usize) -> F {
        layout.partitions[partition].streams.iter().fold(F::zero(), |a, &s| {
            a + layout.costs[s] * F::of_count(self.input_counts[s] - self.n0)
        })
    }

    /// `sum_i d_i (M_i - m0)`.
    pub fn sim_spent<F: Scalar>(&self, layout: &StreamLayout<F>) -> F {
        self.sim_counts
            .iter()
            .zip(&layout.sim_costs)
            .fold(F::zero(), |a, (&m, &d)| a + d * F::of_count(m - self.m0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    /// Estimated best design after the stage's data were absorbed.
    pub selected: usize,
    pub input_increments: Vec<u64>,
    pub sim_increments: Vec<u64>,
    /// Hash of the estimator state after the stage.
    pub digest: u64,
}

/// Full estimator and allocation state at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSnapshot<F> {
    pub stage: usize,
    pub state: AllocationState,
    pub bank: BankSnapshot<F>,
    /// Input rates used at this stage, when solved.
    pub input_rates: Option<Vec<F>>,
}

/// One-shot plan of the joint-budget baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JbaPlan<F> {
    pub pilot_best: usize,
    /// Stages spent collecting input data before any simulation.
    pub input_stages: usize,
    /// Planned additional draws of every stream (zero for given streams).
    pub input_targets: Vec<F>,
    /// Planned replications of every design.
    pub sim_targets: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHistory<F> {
    pub procedure: Procedure,
    /// Selection after initialization (stage 0).
    pub initial_selection: usize,
    pub records: Vec<StageRecord>,
    pub snapshots: Vec<StageSnapshot<F>>,
    pub final_state: AllocationState,
    pub final_bank: BankSnapshot<F>,
    pub jba: Option<JbaPlan<F>>,
    /// Input rates used throughout an oracle-mode run.
    pub oracle_rates: Option<Vec<F>>,
}

impl<F> StageHistory<F> {
    /// Selections at stages `0..=T`.
    pub fn selections(&self) -> Vec<usize> {
        std::iter::once(self.initial_selection)
            .chain(self.records.iter().map(|r| r.selected))
            .collect()
    }

    pub fn final_selection(&self) -> usize {
        self.records.last().map_or(self.initial_selection, |r| r.selected)
    }
}
