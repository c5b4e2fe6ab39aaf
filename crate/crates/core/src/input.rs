//! Parametric input families.
//!
//! Each family is parametrized by its moment vector `theta`, so that the
//! moment map `D(z)` is an unbiased estimator of `theta` and the sample mean
//! of `D` over observed data is the parameter estimate.

use rand::RngCore;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Distance kept from the boundary when projecting an estimate back into
/// the valid parameter set.
pub const PROJECTION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// Exponential with mean `theta`.
    Exponential,
    /// Poisson with mean `theta`.
    Poisson,
    /// Normal parametrized by its first two raw moments `(m1, m2)`.
    NormalMoment,
}

impl FamilyKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "exponential" | "exp" => Some(Self::Exponential),
            "poisson" => Some(Self::Poisson),
            "normal_moment" | "normal" => Some(Self::NormalMoment),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParametricFamily {
    pub kind: FamilyKind,
}

/// Pre-built sampler for one family at one parameter value.
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Exponential(Exp<f64>),
    Poisson(Poisson<f64>),
    Normal(Normal<f64>),
}

impl Sampler {
    #[inline]
    pub fn draw<F: Scalar>(&self, rng: &mut dyn RngCore) -> F {
        let x = match self {
            Sampler::Exponential(d) => d.sample(rng),
            Sampler::Poisson(d) => d.sample(rng),
            Sampler::Normal(d) => d.sample(rng),
        };
        F::lit(x)
    }
}

impl ParametricFamily {
    pub const fn new(kind: FamilyKind) -> Self {
        Self { kind }
    }

    pub const fn exponential() -> Self {
        Self::new(FamilyKind::Exponential)
    }

    pub const fn poisson() -> Self {
        Self::new(FamilyKind::Poisson)
    }

    pub const fn normal_moment() -> Self {
        Self::new(FamilyKind::NormalMoment)
    }

    /// Dimension of the parameter (and of the moment map).
    pub const fn param_dim(&self) -> usize {
        match self.kind {
            FamilyKind::Exponential | FamilyKind::Poisson => 1,
            FamilyKind::NormalMoment => 2,
        }
    }

    fn invalid<T>(&self, detail: impl Into<String>) -> Result<T> {
        Err(Error::InvalidParameter { family: self.kind, detail: detail.into() })
    }

    pub fn validate<F: Scalar>(&self, theta: &[F]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return self.invalid(format!(
                "expected {} parameter(s), got {}",
                self.param_dim(),
                theta.len()
            ));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return self.invalid("non-finite parameter");
        }
        match self.kind {
            FamilyKind::Exponential | FamilyKind::Poisson => {
                if theta[0] <= F::zero() {
                    return self.invalid(format!("mean must be positive, got {}", theta[0]));
                }
            }
            FamilyKind::NormalMoment => {
                if theta[1] <= theta[0] * theta[0] {
                    return self.invalid(format!(
                        "second moment {} must exceed squared mean {}",
                        theta[1],
                        theta[0] * theta[0]
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether `z` lies in the support of the family.
    pub fn in_support<F: Scalar>(&self, z: F) -> bool {
        match self.kind {
            FamilyKind::Exponential => z >= F::zero() && z.is_finite(),
            FamilyKind::Poisson => z >= F::zero() && z.fract() == F::zero() && z.is_finite(),
            FamilyKind::NormalMoment => z.is_finite(),
        }
    }

    /// Moves `theta` into the valid set, `PROJECTION_MARGIN` inside the boundary.
    pub fn project<F: Scalar>(&self, theta: &mut [F]) {
        let margin = F::lit(PROJECTION_MARGIN);
        match self.kind {
            FamilyKind::Exponential | FamilyKind::Poisson => {
                if !(theta[0] > margin) {
                    theta[0] = margin;
                }
            }
            FamilyKind::NormalMoment => {
                let floor = theta[0] * theta[0] + margin;
                if !(theta[1] >= floor) {
                    theta[1] = floor;
                }
            }
        }
    }

    pub fn sampler<F: Scalar>(&self, theta: &[F]) -> Result<Sampler> {
        self.validate(theta)?;
        let t0 = theta[0].as_f64();
        let sampler = match self.kind {
            FamilyKind::Exponential => Sampler::Exponential(
                Exp::new(1.0 / t0).or_else(|e| self.invalid(e.to_string()))?,
            ),
            FamilyKind::Poisson => {
                Sampler::Poisson(Poisson::new(t0).or_else(|e| self.invalid(e.to_string()))?)
            }
            FamilyKind::NormalMoment => {
                let var = theta[1].as_f64() - t0 * t0;
                Sampler::Normal(Normal::new(t0, var.sqrt()).or_else(|e| self.invalid(e.to_string()))?)
            }
        };
        Ok(sampler)
    }

    /// One i.i.d. draw from the family at `theta`.
    pub fn sample<F: Scalar>(&self, theta: &[F], rng: &mut dyn RngCore) -> Result<F> {
        Ok(self.sampler(theta)?.draw(rng))
    }

    /// Moment map `D(z)`, written into `out` (length `param_dim`).
    #[inline]
    pub fn moment_map_into<F: Scalar>(&self, z: F, out: &mut [F]) {
        match self.kind {
            FamilyKind::Exponential | FamilyKind::Poisson => out[0] = z,
            FamilyKind::NormalMoment => {
                out[0] = z;
                out[1] = z * z;
            }
        }
    }

    pub fn moment_map<F: Scalar>(&self, z: F) -> Vec<F> {
        let mut out = vec![F::zero(); self.param_dim()];
        self.moment_map_into(z, &mut out);
        out
    }

    /// Log density (or log mass) of one realization.
    pub fn log_density<F: Scalar>(&self, theta: &[F], z: F) -> Result<F> {
        self.validate(theta)?;
        let v = match self.kind {
            FamilyKind::Exponential => -theta[0].ln() - z / theta[0],
            FamilyKind::Poisson => {
                let k = z.to_u64().unwrap_or(0);
                let ln_fact = (2..=k).map(|j| F::of_count(j).ln()).fold(F::zero(), |a, b| a + b);
                z * theta[0].ln() - theta[0] - ln_fact
            }
            FamilyKind::NormalMoment => {
                let mean = theta[0];
                let var = theta[1] - mean * mean;
                let d = z - mean;
                -F::lit(0.5) * (F::TAU() * var).ln() - d * d / (F::lit(2.0) * var)
            }
        };
        Ok(v)
    }

    /// Adds the score of each draw in `draws` into `out` without validating.
    #[inline]
    pub fn accumulate_score<F: Scalar>(&self, theta: &[F], draws: &[F], out: &mut [F]) {
        match self.kind {
            FamilyKind::Exponential => {
                let t = theta[0];
                let t2 = t * t;
                for &z in draws {
                    out[0] = out[0] + (z - t) / t2;
                }
            }
            FamilyKind::Poisson => {
                let t = theta[0];
                for &z in draws {
                    out[0] = out[0] + z / t - F::one();
                }
            }
            FamilyKind::NormalMoment => {
                // natural (mean, var) scores, then chain rule to (m1, m2)
                let mean = theta[0];
                let var = theta[1] - mean * mean;
                let two = F::lit(2.0);
                for &z in draws {
                    let d = z - mean;
                    let d_mean = d / var;
                    let d_var = (d * d / var - F::one()) / (two * var);
                    out[0] = out[0] + d_mean - two * mean * d_var;
                    out[1] = out[1] + d_var;
                }
            }
        }
    }

    /// Gradient in `theta` of the joint log density of independent `draws`.
    pub fn score<F: Scalar>(&self, theta: &[F], draws: &[F]) -> Result<Vec<F>> {
        self.validate(theta)?;
        if let Some(z) = draws.iter().find(|z| !self.in_support(**z)) {
            return self.invalid(format!("draw {z} outside the support"));
        }
        let mut out = vec![F::zero(); self.param_dim()];
        self.accumulate_score(theta, draws, &mut out);
        Ok(out)
    }

    /// Covariance of the moment map at `theta`, row-major `param_dim x param_dim`.
    pub fn moment_covariance<F: Scalar>(&self, theta: &[F]) -> Result<Vec<F>> {
        self.validate(theta)?;
        Ok(match self.kind {
            FamilyKind::Exponential => vec![theta[0] * theta[0]],
            FamilyKind::Poisson => vec![theta[0]],
            FamilyKind::NormalMoment => {
                let mean = theta[0];
                let var = theta[1] - mean * mean;
                let two = F::lit(2.0);
                let c12 = two * mean * var;
                let c22 = F::lit(4.0) * mean * mean * var + two * var * var;
                vec![var, c12, c12, c22]
            }
        })
    }
}

/// Raw input realizations consumed by one simulation replication: one list
/// of draws per stream.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario<F> {
    pub draws: Vec<Vec<F>>,
}

impl<F: Scalar> Scenario<F> {
    pub fn new(draws: Vec<Vec<F>>) -> Self {
        Self { draws }
    }

    pub fn with_shape(streams: usize, per_stream: usize) -> Self {
        Self { draws: vec![Vec::with_capacity(per_stream); streams] }
    }

    pub fn stream_count(&self) -> usize {
        self.draws.len()
    }

    pub fn stream(&self, s: usize) -> &[F] {
        &self.draws[s]
    }

    /// Refills every stream with `per_stream` draws from its sampler, in
    /// stream order.
    pub fn refill(&mut self, samplers: &[Sampler], per_stream: usize, rng: &mut dyn RngCore) {
        for (buf, sampler) in self.draws.iter_mut().zip(samplers) {
            buf.clear();
            buf.extend((0..per_stream).map(|_| sampler.draw::<F>(rng)));
        }
    }
}
