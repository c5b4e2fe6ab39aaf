use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_design, check_shape, SimulationModel};
use crate::error::{Error, Result};
use crate::input::{ParametricFamily, Scenario};
use crate::rng::{substream, Lane};
use crate::scalar::Scalar;

/// Minimum replication count accepted by the Monte Carlo oracle.
pub const MIN_ORACLE_REPLICATIONS: u64 = 10_000;

/// Scenarios per oracle chunk; each chunk owns one random substream.
pub const ORACLE_CHUNK: u64 = 10_000;

/// Capacitated order-up-to inventory system with multi-channel Poisson demand.
///
/// Each design is an order-up-to level. Per period `v`:
///
/// ```text
/// I_v = I_{v-1} + R_{v-1} - sum_s demand_{v,s}
/// R_v = min(R_max, (level - I_v)^+)
/// c_v = c_H (R_{v-1} + I_v^+) + c_B I_v^-
/// ```
///
/// with `I_0 = level` and `R_0 = 0`. The output is the negated total cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryModel<F> {
    pub levels: Vec<F>,
    pub periods: usize,
    pub channels: usize,
    pub holding_cost: F,
    pub backlog_cost: F,
    /// Production cap; `+inf` when unbounded.
    pub max_production: F,
}

/// One period of the recursion, exposed for invariant checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodTrace<F> {
    pub inventory: F,
    pub production: F,
    pub cost: F,
}

impl<F: Scalar> InventoryModel<F> {
    pub fn new(
        levels: Vec<F>,
        periods: usize,
        channels: usize,
        holding_cost: F,
        backlog_cost: F,
        max_production: Option<F>,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("inventory model needs at least one level".into()));
        }
        if periods == 0 || channels == 0 {
            return Err(Error::Config("inventory model needs periods > 0 and channels > 0".into()));
        }
        if holding_cost < F::zero() || backlog_cost < F::zero() {
            return Err(Error::Config("inventory costs must be nonnegative".into()));
        }
        let max_production = max_production.unwrap_or_else(F::infinity);
        if !(max_production >= F::zero()) {
            return Err(Error::Config("max_production must be nonnegative".into()));
        }
        Ok(Self { levels, periods, channels, holding_cost, backlog_cost, max_production })
    }

    /// Runs the recursion for `level` over per-period total demands.
    pub fn trace(&self, level: F, demand: impl Iterator<Item = F>) -> Vec<PeriodTrace<F>> {
        let mut out = Vec::with_capacity(self.periods);
        self.run(level, demand, |p| out.push(p));
        out
    }

    #[inline]
    fn run(&self, level: F, demand: impl Iterator<Item = F>, mut on_period: impl FnMut(PeriodTrace<F>)) {
        let mut inventory = level;
        let mut production = F::zero();
        for total in demand {
            let next = inventory + production - total;
            let cost = self.holding_cost * (production + next.max(F::zero()))
                + self.backlog_cost * (-next).max(F::zero());
            production = (level - next).max(F::zero()).min(self.max_production);
            inventory = next;
            on_period(PeriodTrace { inventory, production, cost });
        }
    }

    /// Negated total cost of one scenario, without shape checks.
    #[inline]
    fn negated_cost(&self, level: F, scenario: &Scenario<F>) -> F {
        let demand = (0..self.periods)
            .map(|v| scenario.draws.iter().fold(F::zero(), |a, d| a + d[v]));
        let mut total = F::zero();
        self.run(level, demand, |p| total = total + p.cost);
        -total
    }

    fn check_theta(&self, theta: &[F]) -> Result<()> {
        if theta.len() != self.channels {
            return Err(Error::Config(format!(
                "expected {} channel means, got {}",
                self.channels,
                theta.len()
            )));
        }
        let fam = ParametricFamily::poisson();
        for &t in theta {
            fam.validate(&[t])?;
        }
        Ok(())
    }

    /// Monte Carlo moments of every design over one chunk of common scenarios.
    pub fn oracle_chunk(&self, theta: &[F], seed: u64, chunk: u64, size: u64) -> Result<OracleMoments> {
        self.check_theta(theta)?;
        let fam = ParametricFamily::poisson();
        let samplers = theta
            .iter()
            .map(|&t| fam.sampler(&[t]))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = substream(seed, 0, 0, Lane::Oracle, chunk);
        let mut scenario = Scenario::<F>::with_shape(self.channels, self.periods);
        let mut acc = OracleMoments::new(self.levels.len());
        let mut row = vec![0.0; self.levels.len()];
        for _ in 0..size {
            scenario.refill(&samplers, self.periods, &mut rng);
            for (x, &level) in row.iter_mut().zip(&self.levels) {
                *x = self.negated_cost(level, &scenario).as_f64();
            }
            acc.push(&row);
        }
        Ok(acc)
    }

    /// Common-random-numbers Monte Carlo estimate of every design's mean.
    pub fn oracle(&self, theta: &[F], replications: u64, seed: u64) -> Result<OracleEstimate> {
        if replications < MIN_ORACLE_REPLICATIONS {
            return Err(Error::Config(format!(
                "oracle needs at least {MIN_ORACLE_REPLICATIONS} replications, got {replications}"
            )));
        }
        let mut acc = OracleMoments::new(self.levels.len());
        let mut done = 0;
        let mut chunk = 0;
        while done < replications {
            let size = ORACLE_CHUNK.min(replications - done);
            acc.merge(&self.oracle_chunk(theta, seed, chunk, size)?);
            done += size;
            chunk += 1;
        }
        Ok(acc.estimate())
    }

    /// Monte Carlo mean of the negated total cost of one design, with its
    /// standard error.
    pub fn true_mean(&self, design: usize, theta: &[F], replications: u64, seed: u64) -> Result<(f64, f64)> {
        check_design(design, self.levels.len())?;
        let est = self.oracle(theta, replications, seed)?;
        Ok((est.means[design], est.std_errors[design]))
    }
}

impl<F: Scalar> SimulationModel<F> for InventoryModel<F> {
    fn design_count(&self) -> usize {
        self.levels.len()
    }

    fn stream_count(&self) -> usize {
        self.channels
    }

    fn draws_per_stream(&self) -> usize {
        self.periods
    }

    fn evaluate(&self, design: usize, scenario: &Scenario<F>, _rng: &mut dyn RngCore) -> Result<F> {
        check_design(design, self.levels.len())?;
        check_shape(scenario, self.channels, self.periods)?;
        Ok(self.negated_cost(self.levels[design], scenario))
    }
}

/// Running first and second moments (including cross moments) of a vector
/// of outputs observed on common scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMoments {
    pub count: u64,
    pub sums: Vec<f64>,
    /// Row-major `K x K` sums of products.
    pub products: Vec<f64>,
}

impl OracleMoments {
    pub fn new(designs: usize) -> Self {
        Self { count: 0, sums: vec![0.0; designs], products: vec![0.0; designs * designs] }
    }

    pub fn push(&mut self, row: &[f64]) {
        let k = self.sums.len();
        self.count += 1;
        for i in 0..k {
            self.sums[i] += row[i];
            for j in i..k {
                self.products[i * k + j] += row[i] * row[j];
            }
        }
    }

    pub fn merge(&mut self, other: &OracleMoments) {
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.products.iter_mut().zip(&other.products) {
            *a += b;
        }
    }

    fn covariance(&self, i: usize, j: usize) -> f64 {
        let k = self.sums.len();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.count as f64;
        (self.products[i * k + j] - self.sums[i] * self.sums[j] / n) / (n - 1.0)
    }

    pub fn estimate(&self) -> OracleEstimate {
        let k = self.sums.len();
        let n = self.count as f64;
        let means: Vec<f64> = self.sums.iter().map(|s| s / n).collect();
        let std_errors = (0..k).map(|i| (self.covariance(i, i).max(0.0) / n).sqrt()).collect();
        let best = (0..k)
            .max_by(|&a, &b| means[a].total_cmp(&means[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let gap_z = (0..k)
            .filter(|&i| i != best)
            .map(|i| {
                let var = self.covariance(best, best) + self.covariance(i, i) - 2.0 * self.covariance(best, i);
                (means[best] - means[i]) / (var.max(0.0) / n).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        OracleEstimate { replications: self.count, means, std_errors, best, min_gap_z: gap_z }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub replications: u64,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub best: usize,
    /// Smallest paired z-score of `best` against any other design.
    pub min_gap_z: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(level: f64, channels: usize) -> InventoryModel<f64> {
        InventoryModel::new(vec![level], 1, channels, 0.5, 1.0, None).unwrap()
    }

    fn eval(m: &InventoryModel<f64>, draws: Vec<Vec<f64>>) -> f64 {
        let mut r = substream(0, 0, 0, Lane::Aux, 0);
        m.evaluate(0, &Scenario::new(draws), &mut r).unwrap()
    }

    #[test]
    fn hand_traces() {
        assert_eq!(eval(&model(5.0, 2), vec![vec![0.0], vec![0.0]]), -2.5);
        assert_eq!(eval(&model(5.0, 2), vec![vec![2.0], vec![1.0]]), -1.0);
        assert_eq!(eval(&model(2.0, 2), vec![vec![4.0], vec![1.0]]), -3.0);
    }

    #[test]
    fn production_cap_binds() {
        let m = InventoryModel::new(vec![10.0f64], 3, 1, 0.5, 1.0, Some(2.0)).unwrap();
        let tr = m.trace(10.0, [6.0, 1.0, 0.0].into_iter());
        assert_eq!(tr[0].inventory, 4.0);
        assert_eq!(tr[0].production, 2.0);
        assert_eq!(tr[1].inventory, 5.0);
        assert_eq!(tr[1].production, 2.0);
        assert_eq!(tr[2].inventory, 7.0);
        // c_3 = 0.5 * (2 + 7)
        assert_eq!(tr[2].cost, 4.5);
    }

    #[test]
    fn zero_demand_mean_rejected() {
        let m = InventoryModel::new(vec![5.0f64], 1, 2, 0.5, 1.0, None).unwrap();
        assert!(matches!(
            m.oracle(&[0.0, 0.0], 10_000, 1),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(m.oracle(&[1.0, 1.0], 10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn near_zero_demand_matches_zero_trace() {
        let m = InventoryModel::new(vec![5.0f64], 1, 1, 0.5, 1.0, None).unwrap();
        let (mean, se) = m.true_mean(0, &[1e-4], 10_000, 3).unwrap();
        assert!((mean + 2.5).abs() <= 3.0 * se.max(1e-3), "{mean} +- {se}");
    }
}
