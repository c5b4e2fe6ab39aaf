//! Streaming estimators for input parameters, design performance and the
//! likelihood-ratio gradient of design performance.
//!
//! Outputs of different stages are generated under different parameter
//! estimates; the bank pools them into grand means exactly as they arrive.
//! Scores are pushed by the caller, evaluated at the estimate that was in
//! force when the output was simulated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::ParametricFamily;
use crate::scalar::Scalar;

/// Lower bounds applied to degenerate variance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors<F> {
    /// Reported output variance is at least this.
    pub variance: F,
    /// Added to the diagonal of a degenerate moment covariance.
    pub covariance_jitter: F,
}

impl<F: Scalar> Default for Floors<F> {
    fn default() -> Self {
        Self { variance: F::lit(1e-8), covariance_jitter: F::lit(1e-12) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StreamStats<F> {
    family: ParametricFamily,
    count: u64,
    sum: Vec<F>,
    /// Row-major sums of outer products of the moment map.
    outer: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DesignStats<F> {
    count: u64,
    sum: F,
    sum_sq: F,
    /// Sums of `score * output`, concatenated over streams.
    score_sum: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBank<F> {
    streams: Vec<StreamStats<F>>,
    designs: Vec<DesignStats<F>>,
    offsets: Vec<usize>,
    param_len: usize,
    floors: Floors<F>,
}

/// All current estimates, for debugging dumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BankSnapshot<F> {
    pub input_counts: Vec<u64>,
    pub theta: Vec<Vec<F>>,
    pub moment_covariance: Vec<Vec<F>>,
    pub output_counts: Vec<u64>,
    pub means: Vec<F>,
    pub variances: Vec<F>,
    pub gradients: Vec<Vec<F>>,
    pub best: usize,
}

impl<F: Scalar> EstimatorBank<F> {
    pub fn new(families: &[ParametricFamily], designs: usize, floors: Floors<F>) -> Self {
        let mut offsets = Vec::with_capacity(families.len());
        let mut param_len = 0;
        for f in families {
            offsets.push(param_len);
            param_len += f.param_dim();
        }
        let streams = families
            .iter()
            .map(|&family| {
                let d = family.param_dim();
                StreamStats { family, count: 0, sum: vec![F::zero(); d], outer: vec![F::zero(); d * d] }
            })
            .collect();
        let designs = (0..designs)
            .map(|_| DesignStats {
                count: 0,
                sum: F::zero(),
                sum_sq: F::zero(),
                score_sum: vec![F::zero(); param_len],
            })
            .collect();
        Self { streams, designs, offsets, param_len, floors }
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn design_count(&self) -> usize {
        self.designs.len()
    }

    pub fn floors(&self) -> Floors<F> {
        self.floors
    }

    /// Total length of the concatenated parameter vector.
    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// Index range of stream `s` inside concatenated parameter vectors.
    pub fn param_range(&self, s: usize) -> std::ops::Range<usize> {
        let start = self.offsets[s];
        start..start + self.streams[s].family.param_dim()
    }

    fn stream(&self, s: usize) -> Result<&StreamStats<F>> {
        self.streams.get(s).ok_or(Error::UnknownStream(s))
    }

    fn design(&self, i: usize) -> Result<&DesignStats<F>> {
        self.designs
            .get(i)
            .ok_or(Error::UnknownDesign { index: i, count: self.designs.len() })
    }

    pub fn input_count(&self, s: usize) -> Result<u64> {
        Ok(self.stream(s)?.count)
    }

    pub fn output_count(&self, i: usize) -> Result<u64> {
        Ok(self.design(i)?.count)
    }

    /// Adds raw realizations of stream `s`.
    pub fn update_input(&mut self, s: usize, draws: &[F]) -> Result<()> {
        let st = self.streams.get_mut(s).ok_or(Error::UnknownStream(s))?;
        if draws.is_empty() {
            return Ok(());
        }
        if let Some(z) = draws.iter().find(|z| !st.family.in_support(**z)) {
            return Err(Error::InvalidParameter {
                family: st.family.kind,
                detail: format!("draw {z} outside the support"),
            });
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(|a, b| a.total_cmp_f64(b));
        let d = st.family.param_dim();
        let mut m = vec![F::zero(); d];
        for z in sorted {
            st.family.moment_map_into(z, &mut m);
            for a in 0..d {
                st.sum[a] = st.sum[a] + m[a];
                for b in 0..d {
                    st.outer[a * d + b] = st.outer[a * d + b] + m[a] * m[b];
                }
            }
        }
        st.count += draws.len() as u64;
        Ok(())
    }

    /// Adds simulation outputs of design `i` with their score vectors.
    pub fn update_output(&mut self, i: usize, outputs: &[F], scores: &[Vec<F>]) -> Result<()> {
        if outputs.len() != scores.len() {
            return Err(Error::LengthMismatch { outputs: outputs.len(), scores: scores.len() });
        }
        let p = self.param_len;
        if let Some(bad) = scores.iter().find(|s| s.len() != p) {
            return Err(Error::ScenarioShape(format!(
                "score vector of length {}, expected {p}",
                bad.len()
            )));
        }
        let flat: Vec<F> = scores.iter().flatten().copied().collect();
        self.update_output_flat(i, outputs, &flat)
    }

    /// Same as [`update_output`](Self::update_output) with scores packed
    /// row-major, `param_len` entries per output.
    pub fn update_output_flat(&mut self, i: usize, outputs: &[F], scores: &[F]) -> Result<()> {
        let p = self.param_len;
        if outputs.len() * p != scores.len() {
            return Err(Error::LengthMismatch { outputs: outputs.len(), scores: scores.len() / p.max(1) });
        }
        let count = self.designs.len();
        let ds = self.designs.get_mut(i).ok_or(Error::UnknownDesign { index: i, count })?;
        let row = |r: usize| &scores[r * p..(r + 1) * p];
        // canonical order makes the sums invariant to permutations of a batch
        let mut order: Vec<usize> = (0..outputs.len()).collect();
        order.sort_by(|&a, &b| {
            outputs[a].total_cmp_f64(&outputs[b]).then_with(|| {
                row(a)
                    .iter()
                    .zip(row(b))
                    .map(|(x, y)| x.total_cmp_f64(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        for r in order {
            let x = outputs[r];
            ds.sum = ds.sum + x;
            ds.sum_sq = ds.sum_sq + x * x;
            for (acc, &sc) in ds.score_sum.iter_mut().zip(row(r)) {
                *acc = *acc + sc * x;
            }
        }
        ds.count += outputs.len() as u64;
        Ok(())
    }

    /// Current parameter estimate of stream `s`, projected into the valid set.
    pub fn theta(&self, s: usize) -> Result<Vec<F>> {
        let st = self.stream(s)?;
        if st.count == 0 {
            return Err(Error::Uninitialized(format!("stream {s} has no data")));
        }
        let n = F::of_count(st.count);
        let mut theta: Vec<F> = st.sum.iter().map(|&v| v / n).collect();
        st.family.project(&mut theta);
        Ok(theta)
    }

    pub fn theta_all(&self) -> Result<Vec<Vec<F>>> {
        (0..self.streams.len()).map(|s| self.theta(s)).collect()
    }

    /// Sample covariance of the moment map of stream `s` (row-major).
    pub fn moment_covariance(&self, s: usize) -> Result<Vec<F>> {
        let st = self.stream(s)?;
        if st.count == 0 {
            return Err(Error::Uninitialized(format!("stream {s} has no data")));
        }
        let d = st.family.param_dim();
        let jitter = self.floors.covariance_jitter;
        let mut cov = vec![F::zero(); d * d];
        if st.count > 1 {
            let n = F::of_count(st.count);
            let n1 = F::of_count(st.count - 1);
            for a in 0..d {
                for b in 0..d {
                    cov[a * d + b] = (st.outer[a * d + b] - st.sum[a] * st.sum[b] / n) / n1;
                }
            }
            for a in 0..d {
                for b in 0..a {
                    let m = (cov[a * d + b] + cov[b * d + a]) / F::lit(2.0);
                    cov[a * d + b] = m;
                    cov[b * d + a] = m;
                }
                if cov[a * d + a] < F::zero() {
                    cov[a * d + a] = F::zero();
                }
            }
        }
        let degenerate = st.count <= 1 || (0..d).any(|a| cov[a * d + a] <= F::zero());
        if degenerate {
            for a in 0..d {
                cov[a * d + a] = cov[a * d + a] + jitter;
            }
        }
        Ok(cov)
    }

    pub fn mean(&self, i: usize) -> Result<F> {
        let ds = self.design(i)?;
        if ds.count == 0 {
            return Err(Error::Uninitialized(format!("design {i} has no outputs")));
        }
        Ok(ds.sum / F::of_count(ds.count))
    }

    /// Sample variance of design `i`, floored.
    pub fn variance(&self, i: usize) -> Result<F> {
        let ds = self.design(i)?;
        if ds.count == 0 {
            return Err(Error::Uninitialized(format!("design {i} has no outputs")));
        }
        if ds.count == 1 {
            return Ok(self.floors.variance);
        }
        let m = F::of_count(ds.count);
        let mean = ds.sum / m;
        let raw = (ds.sum_sq - m * mean * mean) / F::of_count(ds.count - 1);
        Ok(if raw > self.floors.variance { raw } else { self.floors.variance })
    }

    /// Likelihood-ratio estimate of the gradient of design `i`'s mean in the
    /// concatenated parameter vector.
    pub fn gradient(&self, i: usize) -> Result<Vec<F>> {
        let ds = self.design(i)?;
        if ds.count == 0 {
            return Err(Error::Uninitialized(format!("design {i} has no outputs")));
        }
        let m = F::of_count(ds.count);
        Ok(ds.score_sum.iter().map(|&v| v / m).collect())
    }

    /// Argmax of the sample means, ties to the lowest index.
    pub fn best_design(&self) -> Result<usize> {
        let mut best = 0;
        let mut best_mean = F::neg_infinity();
        for i in 0..self.designs.len() {
            let m = self.mean(i)?;
            if m > best_mean {
                best = i;
                best_mean = m;
            }
        }
        if self.designs.is_empty() {
            return Err(Error::Uninitialized("no designs".into()));
        }
        Ok(best)
    }

    /// `(grad_b - grad_i)^T Sigma_D (grad_b - grad_i)` restricted to stream `s`,
    /// with `b` the current best design.
    pub fn g_hat(&self, i: usize, s: usize) -> Result<F> {
        let best = self.best_design()?;
        if i == best {
            return Err(Error::BestDesign(i));
        }
        self.stream(s)?;
        let gb = self.gradient(best)?;
        let gi = self.gradient(i)?;
        let cov = self.moment_covariance(s)?;
        Ok(quadratic_form(&cov, &gb[self.param_range(s)], &gi[self.param_range(s)]))
    }

    /// `g_hat(i, s)` for every design against `best`, zero on the best row.
    pub fn g_matrix(&self, best: usize) -> Result<Vec<Vec<F>>> {
        let covs = (0..self.streams.len())
            .map(|s| self.moment_covariance(s))
            .collect::<Result<Vec<_>>>()?;
        let gb = self.gradient(best)?;
        (0..self.designs.len())
            .map(|i| {
                if i == best {
                    return Ok(vec![F::zero(); self.streams.len()]);
                }
                let gi = self.gradient(i)?;
                Ok((0..self.streams.len())
                    .map(|s| {
                        let r = self.param_range(s);
                        quadratic_form(&covs[s], &gb[r.clone()], &gi[r])
                    })
                    .collect())
            })
            .collect()
    }

    pub fn snapshot(&self) -> Result<BankSnapshot<F>> {
        let k = self.designs.len();
        Ok(BankSnapshot {
            input_counts: self.streams.iter().map(|s| s.count).collect(),
            theta: self.theta_all()?,
            moment_covariance: (0..self.streams.len())
                .map(|s| self.moment_covariance(s))
                .collect::<Result<_>>()?,
            output_counts: self.designs.iter().map(|d| d.count).collect(),
            means: (0..k).map(|i| self.mean(i)).collect::<Result<_>>()?,
            variances: (0..k).map(|i| self.variance(i)).collect::<Result<_>>()?,
            gradients: (0..k).map(|i| self.gradient(i)).collect::<Result<_>>()?,
            best: self.best_design()?,
        })
    }
}

/// `(a - b)^T cov (a - b)`, clamped at zero.
pub fn quadratic_form<F: Scalar>(cov: &[F], a: &[F], b: &[F]) -> F {
    let d = a.len();
    let mut acc = F::zero();
    for r in 0..d {
        let dr = a[r] - b[r];
        for c in 0..d {
            acc = acc + dr * cov[r * d + c] * (a[c] - b[c]);
        }
    }
    acc.max(F::zero())
}
