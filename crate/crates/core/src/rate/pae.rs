use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A group of input streams sharing one per-stage collection budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition<F> {
    pub streams: Vec<usize>,
    pub budget: F,
    /// Data of this group arrive on their own (given streaming data) rather
    /// than being actively collected. Only baselines look at this flag.
    #[serde(default)]
    pub given: bool,
}

impl<F: Scalar> Partition<F> {
    pub fn new(streams: Vec<usize>, budget: F) -> Self {
        Self { streams, budget, given: false }
    }

    pub fn given_stream(stream: usize, budget: F) -> Self {
        Self { streams: vec![stream], budget, given: true }
    }
}

/// Input-allocation rate problem: maximize `min_i gap_i^2 / sum_s w_is / n_s`
/// over per-stream rates `n` with `sum_{s in S_j} c_s n_s = U_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaeProblem<F> {
    /// Squared gap of every suboptimal design (one row per design).
    pub sq_gaps: Vec<F>,
    /// Input-variance weights `w[row][s]`.
    pub weights: Vec<Vec<F>>,
    pub costs: Vec<F>,
    pub partitions: Vec<Partition<F>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions<F> {
    /// Relative duality gap at which the solver stops.
    pub tol: F,
    pub max_iter: usize,
}

impl<F: Scalar> Default for SolverOptions<F> {
    fn default() -> Self {
        Self { tol: F::lit(1e-8), max_iter: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaeSolution<F> {
    /// Per-stream rates `n_s`.
    pub rates: Vec<F>,
    pub achieved_rate: F,
    /// Relative duality gap of the returned point; zero when no stream is free.
    pub kkt_residual: F,
    pub iterations: usize,
    pub converged: bool,
    /// Multi-stream partitions that fell back to an equal cost split.
    pub degenerate_partitions: Vec<usize>,
    /// Final dual weights over rows (zero for rows that cannot bind).
    pub dual_weights: Vec<F>,
}

impl<F: Scalar> PaeProblem<F> {
    pub fn stream_count(&self) -> usize {
        self.costs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s_count = self.costs.len();
        if self.weights.len() != self.sq_gaps.len() {
            return Err(Error::Config(format!(
                "{} weight rows for {} gaps",
                self.weights.len(),
                self.sq_gaps.len()
            )));
        }
        for (r, row) in self.weights.iter().enumerate() {
            if row.len() != s_count {
                return Err(Error::Config(format!("weight row {r} has {} entries, expected {s_count}", row.len())));
            }
            if row.iter().any(|w| !(*w >= F::zero()) || !w.is_finite()) {
                return Err(Error::Config(format!("weight row {r} has a negative or non-finite entry")));
            }
        }
        if self.sq_gaps.iter().any(|g| !(*g >= F::zero()) || !g.is_finite()) {
            return Err(Error::Config("squared gaps must be finite and nonnegative".into()));
        }
        if self.costs.iter().any(|c| !(*c > F::zero())) {
            return Err(Error::Config("stream costs must be positive".into()));
        }
        let mut seen = vec![false; s_count];
        for (j, p) in self.partitions.iter().enumerate() {
            if !(p.budget > F::zero()) {
                return Err(Error::Config(format!("partition {j} budget must be positive")));
            }
            if p.streams.is_empty() {
                return Err(Error::Config(format!("partition {j} is empty")));
            }
            for &s in &p.streams {
                if s >= s_count {
                    return Err(Error::UnknownStream(s));
                }
                if std::mem::replace(&mut seen[s], true) {
                    return Err(Error::Config(format!("stream {s} appears in two partitions")));
                }
            }
        }
        if let Some(s) = seen.iter().position(|x| !x) {
            return Err(Error::Config(format!("stream {s} belongs to no partition")));
        }
        Ok(())
    }
}

/// `min_i gap_i^2 / sum_s w_is / n_s`; rows insensitive to every stream are
/// excluded (their rate is infinite).
pub fn pae_rate<F: Scalar>(rates: &[F], prob: &PaeProblem<F>) -> Result<F> {
    if let Some(s) = rates.iter().position(|&n| !(n > F::zero())) {
        return Err(Error::NonpositiveRate(s));
    }
    let mut best = F::infinity();
    for (gap, row) in prob.sq_gaps.iter().zip(&prob.weights) {
        let var = row.iter().zip(rates).fold(F::zero(), |a, (&w, &n)| a + w / n);
        if var > F::zero() {
            best = best.min(*gap / var);
        }
    }
    Ok(best)
}

pub fn solve_input_allocation<F: Scalar>(prob: &PaeProblem<F>, opts: &SolverOptions<F>) -> Result<PaeSolution<F>> {
    solve_input_allocation_warm(prob, opts, None)
}

/// Solves the input-allocation problem through its dual.
///
/// For dual weights `lambda` on the simplex over rows, the inner
/// minimization of `sum_i lambda_i sum_s a_is / n_s` over each partition's
/// budget is closed form: `n_s` proportional to `sqrt(A_s / c_s)` with
/// `A_s = sum_i lambda_i a_is`. The dual is maximized with multiplicative
/// weights whose exponent adapts to the progress of the duality gap
/// `max_i h_i(n) - sum_i lambda_i h_i(n)`, which also certifies the primal
/// point `n(lambda)`. `warm` seeds the dual weights (one per row).
pub fn solve_input_allocation_warm<F: Scalar>(
    prob: &PaeProblem<F>,
    opts: &SolverOptions<F>,
    warm: Option<&[F]>,
) -> Result<PaeSolution<F>> {
    prob.validate()?;
    let s_count = prob.costs.len();
    let rows = prob.sq_gaps.len();
    let zero = F::zero();

    // Fixed streams: singleton partitions exhaust their budget; multi-stream
    // partitions with a stream no row is sensitive to fall back to an equal
    // cost split.
    let mut rates = vec![zero; s_count];
    let mut free_parts = Vec::new();
    let mut degenerate = Vec::new();
    for (j, p) in prob.partitions.iter().enumerate() {
        if p.streams.len() == 1 {
            let s = p.streams[0];
            rates[s] = p.budget / prob.costs[s];
            continue;
        }
        let dead = p.streams.iter().any(|&s| prob.weights.iter().all(|row| row[s] == zero));
        if dead {
            let share = p.budget / F::of_count(p.streams.len() as u64);
            for &s in &p.streams {
                rates[s] = share / prob.costs[s];
            }
            degenerate.push(j);
        } else {
            free_parts.push(j);
        }
    }

    // Rows that can bind, with a = w / gap^2 (gap floored so that tied
    // designs dominate rather than divide by zero).
    let active: Vec<usize> = (0..rows)
        .filter(|&r| prob.weights[r].iter().any(|&w| w > zero))
        .collect();
    let max_gap = prob.sq_gaps.iter().fold(zero, |a, &g| a.max(g));
    let gap_floor = (max_gap * F::lit(1e-12)).max(F::min_positive_value().sqrt());
    let a: Vec<Vec<F>> = active
        .iter()
        .map(|&r| {
            let g = prob.sq_gaps[r].max(gap_floor);
            prob.weights[r].iter().map(|&w| w / g).collect()
        })
        .collect();
    let free_streams: Vec<usize> = free_parts
        .iter()
        .flat_map(|&j| prob.partitions[j].streams.iter().copied())
        .collect();
    let is_free = {
        let mut v = vec![false; s_count];
        for &s in &free_streams {
            v[s] = true;
        }
        v
    };
    let fixed_part: Vec<F> = a
        .iter()
        .map(|row| {
            (0..s_count)
                .filter(|&s| !is_free[s])
                .fold(zero, |acc, s| acc + row[s] / rates[s])
        })
        .collect();

    let finish = |rates: Vec<F>, residual: F, iterations: usize, converged: bool, lambda: &[F]| {
        let achieved_rate = pae_rate(&rates, prob)?;
        let mut dual_weights = vec![zero; rows];
        for (k, &r) in active.iter().enumerate() {
            dual_weights[r] = lambda.get(k).copied().unwrap_or(zero);
        }
        Ok(PaeSolution {
            rates,
            achieved_rate,
            kkt_residual: residual,
            iterations,
            converged,
            degenerate_partitions: degenerate.clone(),
            dual_weights,
        })
    };

    if free_parts.is_empty() || active.is_empty() {
        return finish(rates, zero, 0, true, &[]);
    }

    let m = active.len();
    let lam_floor = F::min_positive_value().sqrt();
    let mut lambda: Vec<F> = match warm {
        Some(w) if w.len() == rows => active.iter().map(|&r| w[r].max(lam_floor)).collect(),
        _ => vec![F::one(); m],
    };
    normalize(&mut lambda, lam_floor);

    let mut h = vec![zero; m];
    let mut logs = vec![zero; m];
    let mut exponent = F::lit(2.0);
    let mut prev_gap = F::infinity();
    let mut best: Option<(F, Vec<F>, Vec<F>)> = None;
    let mut iterations = 0;
    loop {
        // primal response n(lambda) on free partitions
        for &j in &free_parts {
            let p = &prob.partitions[j];
            let mut denom = zero;
            for &s in &p.streams {
                let big_a = (0..m).fold(zero, |acc, k| acc + lambda[k] * a[k][s]);
                rates[s] = (big_a / prob.costs[s]).sqrt();
                denom = denom + (big_a * prob.costs[s]).sqrt();
            }
            for &s in &p.streams {
                rates[s] = p.budget * rates[s] / denom;
            }
        }
        let mut hmax = zero;
        let mut phi = zero;
        for k in 0..m {
            h[k] = free_streams
                .iter()
                .fold(fixed_part[k], |acc, &s| acc + a[k][s] / rates[s]);
            hmax = hmax.max(h[k]);
            phi = phi + lambda[k] * h[k];
        }
        let gap = if hmax > zero { ((hmax - phi) / hmax).max(zero) } else { zero };
        if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            best = Some((gap, rates.clone(), lambda.clone()));
        }
        if gap <= opts.tol || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        if gap < prev_gap {
            exponent = (exponent * F::lit(1.3)).min(F::lit(50.0));
        } else {
            exponent = (exponent / F::lit(3.0)).max(F::one());
        }
        prev_gap = gap;
        let mut top = F::neg_infinity();
        for k in 0..m {
            logs[k] = lambda[k].ln() + exponent * (h[k] / phi).ln();
            top = top.max(logs[k]);
        }
        for k in 0..m {
            lambda[k] = (logs[k] - top).exp();
        }
        normalize(&mut lambda, lam_floor);
    }
    let (gap, rates, lambda) = best.expect("at least one iterate");
    let converged = gap <= opts.tol;
    finish(rates, gap, iterations, converged, &lambda)
}

fn normalize<F: Scalar>(v: &mut [F], floor: F) {
    let total = v.iter().fold(F::zero(), |a, &x| a + x);
    for x in v.iter_mut() {
        *x = (*x / total).max(floor);
    }
}
