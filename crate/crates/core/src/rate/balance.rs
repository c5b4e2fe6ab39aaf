use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the PCS rate: squared gaps to the best design, input
/// uncertainty forms `g(i, s)`, output variances and simulation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsRateParams<F> {
    pub best: usize,
    /// Squared gap `(mu_b - mu_i)^2` per design; the entry of `best` is ignored.
    pub sq_gaps: Vec<F>,
    /// `g[i][s]`; the row of `best` is ignored.
    pub g: Vec<Vec<F>>,
    pub variances: Vec<F>,
    pub sim_costs: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResiduals<F> {
    /// Rate function of every suboptimal design (NaN on the best row).
    pub rates: Vec<F>,
    /// Same with the best design's simulation term dropped.
    pub modified_rates: Vec<F>,
    /// `max - min` of `rates` over suboptimal designs.
    pub rate_gap: F,
    /// `|m_b^2 - (sigma_b^2 / d_b) sum_{i != b} d_i m_i^2 / sigma_i^2|`.
    pub global_defect: F,
    /// `max - min` of `modified_rates`.
    pub modified_rate_gap: F,
}

impl<F: Scalar> BalanceResiduals<F> {
    pub fn relative_rate_gap(&self) -> F {
        relative(&self.rates, self.rate_gap)
    }

    pub fn relative_modified_rate_gap(&self) -> F {
        relative(&self.modified_rates, self.modified_rate_gap)
    }
}

fn relative<F: Scalar>(rates: &[F], gap: F) -> F {
    let max = rates.iter().filter(|r| !r.is_nan()).fold(F::zero(), |a, &r| a.max(r));
    if max > F::zero() {
        gap / max
    } else {
        F::zero()
    }
}

/// Residuals of rate balance and global balance at rates `sim_rates` (per
/// design) and `input_rates` (per stream).
pub fn pcs_balance_residuals<F: Scalar>(
    sim_rates: &[F],
    input_rates: &[F],
    params: &PcsRateParams<F>,
) -> Result<BalanceResiduals<F>> {
    if let Some(i) = sim_rates.iter().position(|&m| !(m > F::zero())) {
        return Err(Error::NonpositiveRate(i));
    }
    if let Some(s) = input_rates.iter().position(|&n| !(n > F::zero())) {
        return Err(Error::NonpositiveRate(s));
    }
    let k = sim_rates.len();
    let b = params.best;
    if b >= k {
        return Err(Error::UnknownDesign { index: b, count: k });
    }
    let two = F::lit(2.0);
    let best_term = params.variances[b] / sim_rates[b];
    let mut rates = vec![F::nan(); k];
    let mut modified = vec![F::nan(); k];
    let mut global_sum = F::zero();
    for i in (0..k).filter(|&i| i != b) {
        let input: F = params.g[i]
            .iter()
            .zip(input_rates)
            .fold(F::zero(), |a, (&g, &n)| a + g / n);
        let own = params.variances[i] / sim_rates[i];
        rates[i] = params.sq_gaps[i] / (two * input + own + best_term);
        modified[i] = params.sq_gaps[i] / (two * input + own);
        global_sum = global_sum + params.sim_costs[i] * sim_rates[i] * sim_rates[i] / params.variances[i];
    }
    let global = sim_rates[b] * sim_rates[b] - params.variances[b] / params.sim_costs[b] * global_sum;
    let spread = |v: &[F]| {
        let vals = v.iter().copied().filter(|r| !r.is_nan());
        let (lo, hi) = vals.fold((F::infinity(), F::neg_infinity()), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if hi >= lo {
            hi - lo
        } else {
            F::zero()
        }
    };
    Ok(BalanceResiduals {
        rate_gap: spread(&rates),
        modified_rate_gap: spread(&modified),
        rates,
        modified_rates: modified,
        global_defect: global.abs(),
    })
}
