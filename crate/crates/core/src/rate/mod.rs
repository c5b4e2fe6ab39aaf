//! Large-deviations rate objectives.
//!
//! [`solve_input_allocation`] maximizes the rate of the probability of
//! acceptable estimation over per-stream input rates subject to one budget
//! per partition of streams. [`pcs_balance_residuals`] measures how far a
//! simulation allocation is from the optimality conditions of the
//! probability-of-correct-selection rate.

mod balance;
mod pae;

pub use balance::{pcs_balance_residuals, BalanceResiduals, PcsRateParams};
pub use pae::{
    pae_rate, solve_input_allocation, solve_input_allocation_warm, PaeProblem, PaeSolution, Partition, SolverOptions,
};
