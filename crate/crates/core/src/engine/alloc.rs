use serde::{Deserialize, Serialize};

use super::{AllocationState, RateBalance, StreamLayout};
use crate::error::{Error, Result};
use crate::estimators::EstimatorBank;
use crate::scalar::Scalar;

/// Adds draws to the streams of one partition until the cumulative spend
/// reaches `target`, picking each draw with `pick`.
fn fill_partition<F: Scalar>(
    layout: &StreamLayout<F>,
    partition: usize,
    state: &mut AllocationState,
    target: F,
    mut pick: impl FnMut(&AllocationState, &[usize]) -> usize,
) {
    let streams = &layout.partitions[partition].streams;
    let mut spent = state.input_spent(layout, partition);
    while spent < target {
        let s = pick(state, streams);
        state.input_counts[s] += 1;
        state.input_increments[s] += 1;
        spent = spent + layout.costs[s];
    }
}

fn reset_input(state: &mut AllocationState, t: usize) {
    state.stage = t;
    state.input_increments.iter_mut().for_each(|x| *x = 0);
}

/// Rounds per-stage rates `rates` to integer draws: within every partition,
/// one draw at a time goes to the stream furthest behind `t * rate`, while
/// the partition's cumulative spend is below `t * U_j`.
pub fn allocate_input_stage<F: Scalar>(
    t: usize,
    rates: &[F],
    layout: &StreamLayout<F>,
    state: &mut AllocationState,
) -> Vec<u64> {
    reset_input(state, t);
    let tf = F::of_count(t as u64);
    for j in 0..layout.partitions.len() {
        let target = tf * layout.partitions[j].budget;
        fill_partition(layout, j, state, target, |st, streams| {
            argmax_by(streams, |s| tf * rates[s] - F::of_count(st.input_counts[s]))
        });
    }
    state.input_increments.clone()
}

/// Equal-cost rounding: each draw goes to the stream of its partition with
/// the smallest spend `c_s (N_s - n0)`.
pub fn allocate_input_equal<F: Scalar>(t: usize, layout: &StreamLayout<F>, state: &mut AllocationState) -> Vec<u64> {
    reset_input(state, t);
    let tf = F::of_count(t as u64);
    for j in 0..layout.partitions.len() {
        let target = tf * layout.partitions[j].budget;
        fill_partition(layout, j, state, target, |st, streams| {
            argmax_by(streams, |s| -(layout.costs[s] * F::of_count(st.input_counts[s] - st.n0)))
        });
    }
    state.input_increments.clone()
}

/// Fills partitions selected by `include` up to their own targets with
/// deficits measured against `t * rates` on top of `n0`.
pub(super) fn allocate_input_targets<F: Scalar>(
    t: usize,
    rates: &[F],
    targets: &[Option<F>],
    layout: &StreamLayout<F>,
    state: &mut AllocationState,
) -> Vec<u64> {
    reset_input(state, t);
    let tf = F::of_count(t as u64);
    for (j, target) in targets.iter().enumerate() {
        if let Some(target) = *target {
            fill_partition(layout, j, state, target, |st, streams| {
                argmax_by(streams, |s| tf * rates[s] - F::of_count(st.input_counts[s] - st.n0))
            });
        }
    }
    state.input_increments.clone()
}

/// Lowest-index argmax of `key` over `items`.
fn argmax_by<F: Scalar>(items: &[usize], key: impl Fn(usize) -> F) -> usize {
    let mut best = items[0];
    let mut best_key = key(best);
    for &x in &items[1..] {
        let k = key(x);
        if k > best_key {
            best = x;
            best_key = k;
        }
    }
    best
}

/// Plug-in quantities driving the simulation balancing rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceInputs<F> {
    pub best: usize,
    /// Squared gap to the best design (zero on the best row).
    pub sq_gaps: Vec<F>,
    pub variances: Vec<F>,
    /// `g[i][s]` against `best`; zero on the best row.
    pub g: Vec<Vec<F>>,
}

impl<F: Scalar> BalanceInputs<F> {
    /// Current estimates. Streams outside `mask` get zero input weight.
    pub fn from_bank(bank: &EstimatorBank<F>, mask: Option<&[bool]>) -> Result<Self> {
        let best = bank.best_design()?;
        let k = bank.design_count();
        let mb = bank.mean(best)?;
        let mut sq_gaps = Vec::with_capacity(k);
        let mut variances = Vec::with_capacity(k);
        for i in 0..k {
            let d = mb - bank.mean(i)?;
            sq_gaps.push(d * d);
            variances.push(bank.variance(i)?);
        }
        let mut g = bank.g_matrix(best)?;
        if let Some(mask) = mask {
            for row in &mut g {
                for (v, &on) in row.iter_mut().zip(mask) {
                    if !on {
                        *v = F::zero();
                    }
                }
            }
        }
        Ok(Self { best, sq_gaps, variances, g })
    }

    /// `2 sum_s g(i, s) / N_s` for every design.
    pub fn input_terms(&self, input_counts: &[u64]) -> Vec<F> {
        let two = F::lit(2.0);
        self.g
            .iter()
            .map(|row| {
                two * row
                    .iter()
                    .zip(input_counts)
                    .fold(F::zero(), |a, (&g, &n)| a + g / F::of_count(n))
            })
            .collect()
    }

    pub fn validate(&self, designs: usize, streams: usize) -> Result<()> {
        if self.best >= designs {
            return Err(Error::UnknownDesign { index: self.best, count: designs });
        }
        if self.sq_gaps.len() != designs || self.variances.len() != designs || self.g.len() != designs {
            return Err(Error::Config("balance inputs do not match the design count".into()));
        }
        if self.g.iter().any(|r| r.len() != streams) {
            return Err(Error::Config("balance inputs do not match the stream count".into()));
        }
        Ok(())
    }
}

/// Design to simulate next: the best design when global balance is
/// violated in its favor, otherwise the suboptimal design with the smallest
/// rate function. Ties go to the lowest index.
pub fn simulate_one_choice<F: Scalar>(
    inputs: &BalanceInputs<F>,
    input_terms: &[F],
    sim_counts: &[u64],
    sim_costs: &[F],
    balance: RateBalance,
) -> usize {
    let b = inputs.best;
    let k = sim_counts.len();
    if k == 1 {
        return b;
    }
    let m = |i: usize| F::of_count(sim_counts[i]);
    let others = (0..k)
        .filter(|&i| i != b)
        .fold(F::zero(), |a, i| a + sim_costs[i] * m(i) * m(i) / inputs.variances[i]);
    let global = m(b) * m(b) - inputs.variances[b] / sim_costs[b] * others;
    if global < F::zero() {
        return b;
    }
    let best_term = match balance {
        RateBalance::Exact => inputs.variances[b] / m(b),
        RateBalance::Modified => F::zero(),
    };
    let mut choice = usize::MAX;
    let mut lowest = F::infinity();
    for i in (0..k).filter(|&i| i != b) {
        let rate = inputs.sq_gaps[i] / (input_terms[i] + inputs.variances[i] / m(i) + best_term);
        if choice == usize::MAX || rate < lowest {
            choice = i;
            lowest = rate;
        }
    }
    choice
}

/// Repeats [`simulate_one_choice`] while `sum_i d_i (M_i - m0) < target`,
/// moving counts only.
pub fn allocate_simulation_stage<F: Scalar>(
    target: F,
    inputs: &BalanceInputs<F>,
    layout: &StreamLayout<F>,
    state: &mut AllocationState,
    balance: RateBalance,
) -> Vec<u64> {
    state.sim_increments.iter_mut().for_each(|x| *x = 0);
    let terms = inputs.input_terms(&state.input_counts);
    let mut spent = state.sim_spent(layout);
    while spent < target {
        let i = simulate_one_choice(inputs, &terms, &state.sim_counts, &layout.sim_costs, balance);
        state.sim_counts[i] += 1;
        state.sim_increments[i] += 1;
        spent = spent + layout.sim_costs[i];
    }
    state.sim_increments.clone()
}

/// Equal-spend rounding of the simulation budget: each replication goes to
/// the design with the smallest `d_i M_i`.
pub fn allocate_simulation_equal<F: Scalar>(target: F, layout: &StreamLayout<F>, state: &mut AllocationState) -> Vec<u64> {
    state.sim_increments.iter_mut().for_each(|x| *x = 0);
    let designs: Vec<usize> = (0..layout.design_count()).collect();
    let mut spent = state.sim_spent(layout);
    while spent < target {
        let i = argmax_by(&designs, |i| -(layout.sim_costs[i] * F::of_count(state.sim_counts[i])));
        state.sim_counts[i] += 1;
        state.sim_increments[i] += 1;
        spent = spent + layout.sim_costs[i];
    }
    state.sim_increments.clone()
}

/// Rounds fixed per-stage replication rates: each replication goes to the
/// design furthest behind `t * rate`.
pub(super) fn allocate_simulation_rates<F: Scalar>(
    t: usize,
    rates: &[F],
    layout: &StreamLayout<F>,
    state: &mut AllocationState,
) -> Vec<u64> {
    state.sim_increments.iter_mut().for_each(|x| *x = 0);
    let designs: Vec<usize> = (0..layout.design_count()).collect();
    let tf = F::of_count(t as u64);
    let target = tf * layout.sim_budget;
    let mut spent = state.sim_spent(layout);
    while spent < target {
        let i = argmax_by(&designs, |i| tf * rates[i] - F::of_count(state.sim_counts[i] - state.m0));
        state.sim_counts[i] += 1;
        state.sim_increments[i] += 1;
        spent = spent + layout.sim_costs[i];
    }
    state.sim_increments.clone()
}
