//! Simulation models: scenario in, scalar performance out.
//!
//! Every model returns "larger is better" performance, so cost-type models
//! negate their cost. Input randomness enters only through the [`Scenario`];
//! the generator passed to `evaluate` supplies idiosyncratic simulation noise
//! that carries no input uncertainty.

mod inventory;
mod quadratic;

pub use inventory::{InventoryModel, OracleEstimate, OracleMoments, MIN_ORACLE_REPLICATIONS, ORACLE_CHUNK};
pub use quadratic::QuadraticModel;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::input::Scenario;
use crate::scalar::Scalar;

/// True mean, variance and parameter gradient of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMoments<F> {
    pub mean: F,
    pub variance: F,
    /// Gradient of the mean, concatenated over streams in stream order.
    pub gradient: Vec<F>,
}

pub trait SimulationModel<F: Scalar>: Send + Sync {
    fn design_count(&self) -> usize;

    fn stream_count(&self) -> usize;

    /// Draws each stream must supply per replication.
    fn draws_per_stream(&self) -> usize;

    fn evaluate(&self, design: usize, scenario: &Scenario<F>, rng: &mut dyn RngCore) -> Result<F>;

    /// Closed-form moments at `theta` (one parameter vector per stream), when
    /// the model has them.
    fn true_moments(&self, _design: usize, _theta: &[Vec<F>]) -> Option<Result<DesignMoments<F>>> {
        None
    }
}

impl<F: Scalar, M: SimulationModel<F> + ?Sized> SimulationModel<F> for Box<M> {
    fn design_count(&self) -> usize {
        (**self).design_count()
    }
    fn stream_count(&self) -> usize {
        (**self).stream_count()
    }
    fn draws_per_stream(&self) -> usize {
        (**self).draws_per_stream()
    }
    fn evaluate(&self, design: usize, scenario: &Scenario<F>, rng: &mut dyn RngCore) -> Result<F> {
        (**self).evaluate(design, scenario, rng)
    }
    fn true_moments(&self, design: usize, theta: &[Vec<F>]) -> Option<Result<DesignMoments<F>>> {
        (**self).true_moments(design, theta)
    }
}

pub(crate) fn check_design(design: usize, count: usize) -> Result<()> {
    if design >= count {
        return Err(crate::Error::UnknownDesign { index: design, count });
    }
    Ok(())
}

pub(crate) fn check_shape<F: Scalar>(scenario: &Scenario<F>, streams: usize, per: usize) -> Result<()> {
    if scenario.stream_count() != streams {
        return Err(crate::Error::ScenarioShape(format!(
            "expected {streams} streams, got {}",
            scenario.stream_count()
        )));
    }
    if let Some((s, d)) = scenario.draws.iter().enumerate().find(|(_, d)| d.len() != per) {
        return Err(crate::Error::ScenarioShape(format!(
            "stream {s} has {} draws, expected {per}",
            d.len()
        )));
    }
    Ok(())
}
