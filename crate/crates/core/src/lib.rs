//! Fixed-budget ranking and selection with streaming input data.
//!
//! The crate jointly allocates several input-data-collection budgets and a
//! simulation budget across stages. Input distributions are parametric with
//! unknown parameters estimated from data that arrive in batches; simulation
//! outputs are generated under the current parameter estimate, and the
//! allocation at every stage is driven by plug-in estimates of the large
//! deviations rates of the probability of acceptable estimation (input side)
//! and the probability of correct selection (simulation side).
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases at the crate root pin the common double-precision instantiation.

// `!(x > 0)` is deliberate throughout: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod estimators;
pub mod input;
pub mod models;
pub mod rate;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use engine::{
    AllocationState, BalanceInputs, JbaPlan, Partition, Problem, Procedure, RateBalance,
    RunSettings, StageHistory, StageRecord, StreamLayout,
};
pub use estimators::{BankSnapshot, EstimatorBank, Floors};
pub use input::{FamilyKind, ParametricFamily, Scenario};
pub use models::{DesignMoments, InventoryModel, QuadraticModel, SimulationModel};
pub use rate::{BalanceResiduals, PaeProblem, PaeSolution, PcsRateParams, SolverOptions};

pub type EstimatorBank64 = EstimatorBank<f64>;
pub type Floors64 = Floors<f64>;
pub type Scenario64 = Scenario<f64>;
pub type QuadraticModel64 = QuadraticModel<f64>;
pub type InventoryModel64 = InventoryModel<f64>;
pub type PaeProblem64 = PaeProblem<f64>;
pub type PaeSolution64 = PaeSolution<f64>;
pub type PcsRateParams64 = PcsRateParams<f64>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type StreamLayout64 = StreamLayout<f64>;
pub type RunSettings64 = RunSettings<f64>;
pub type StageHistory64 = StageHistory<f64>;

pub type EstimatorBank32 = EstimatorBank<f32>;
pub type PaeProblem32 = PaeProblem<f32>;
