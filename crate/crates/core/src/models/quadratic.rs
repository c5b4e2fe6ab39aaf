use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_design, check_shape, DesignMoments, SimulationModel};
use crate::error::{Error, Result};
use crate::input::Scenario;
use crate::scalar::Scalar;

/// `X_i = -(x_i - sum_s z_s)^2 + eps`, one exponential draw per stream and
/// Gaussian noise `eps ~ N(0, noise_sd^2)`.
///
/// The closed-form helpers assume exponential streams with means `theta_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel<F> {
    pub points: Vec<F>,
    pub streams: usize,
    pub noise_sd: F,
}

impl<F: Scalar> QuadraticModel<F> {
    pub fn new(points: Vec<F>, streams: usize, noise_sd: F) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("quadratic model needs at least one design".into()));
        }
        if streams == 0 {
            return Err(Error::Config("quadratic model needs at least one stream".into()));
        }
        if !(noise_sd >= F::zero()) {
            return Err(Error::Config("noise_sd must be nonnegative".into()));
        }
        Ok(Self { points, streams, noise_sd })
    }

    /// Designs `x_i = x_star + i` for `i = 0..designs`.
    pub fn centered(x_star: F, designs: usize, streams: usize, noise_sd: F) -> Result<Self> {
        let points = (0..designs).map(|i| x_star + F::of_count(i as u64)).collect();
        Self::new(points, streams, noise_sd)
    }

    fn check_theta(&self, theta: &[F]) -> Result<()> {
        if theta.len() != self.streams {
            return Err(Error::Config(format!(
                "expected {} stream means, got {}",
                self.streams,
                theta.len()
            )));
        }
        if let Some(t) = theta.iter().find(|t| !(**t > F::zero())) {
            return Err(Error::InvalidParameter {
                family: crate::FamilyKind::Exponential,
                detail: format!("mean must be positive, got {t}"),
            });
        }
        Ok(())
    }

    /// `-[(x_i - sum theta)^2 + sum theta^2]`.
    pub fn true_mean(&self, design: usize, theta: &[F]) -> Result<F> {
        check_design(design, self.points.len())?;
        self.check_theta(theta)?;
        let total = theta.iter().fold(F::zero(), |a, &t| a + t);
        let var = theta.iter().fold(F::zero(), |a, &t| a + t * t);
        let d = self.points[design] - total;
        Ok(-(d * d + var))
    }

    /// Partial derivatives `2 (x_i - sum theta) - 2 theta_s`.
    pub fn true_gradient(&self, design: usize, theta: &[F]) -> Result<Vec<F>> {
        check_design(design, self.points.len())?;
        self.check_theta(theta)?;
        let total = theta.iter().fold(F::zero(), |a, &t| a + t);
        let two = F::lit(2.0);
        let d = self.points[design] - total;
        Ok(theta.iter().map(|&t| two * d - two * t).collect())
    }

    /// Output variance from the cumulants of `x_i - sum z_s`.
    pub fn true_variance(&self, design: usize, theta: &[F]) -> Result<F> {
        check_design(design, self.points.len())?;
        self.check_theta(theta)?;
        let sum = |p: i32| theta.iter().fold(F::zero(), |a, &t| a + t.powi(p));
        let k1 = self.points[design] - sum(1);
        let k2 = sum(2);
        let k3 = -F::lit(2.0) * sum(3);
        let k4 = F::lit(6.0) * sum(4);
        let var_sq = k4 + F::lit(4.0) * k3 * k1 + F::lit(2.0) * k2 * k2 + F::lit(4.0) * k2 * k1 * k1;
        Ok(var_sq + self.noise_sd * self.noise_sd)
    }
}

impl<F: Scalar> SimulationModel<F> for QuadraticModel<F> {
    fn design_count(&self) -> usize {
        self.points.len()
    }

    fn stream_count(&self) -> usize {
        self.streams
    }

    fn draws_per_stream(&self) -> usize {
        1
    }

    fn evaluate(&self, design: usize, scenario: &Scenario<F>, rng: &mut dyn RngCore) -> Result<F> {
        check_design(design, self.points.len())?;
        check_shape(scenario, self.streams, 1)?;
        let total = scenario.draws.iter().fold(F::zero(), |a, d| a + d[0]);
        let d = self.points[design] - total;
        let noise = if self.noise_sd > F::zero() {
            let z: f64 = StandardNormal.sample(rng);
            self.noise_sd * F::lit(z)
        } else {
            F::zero()
        };
        Ok(-(d * d) + noise)
    }

    fn true_moments(&self, design: usize, theta: &[Vec<F>]) -> Option<Result<DesignMoments<F>>> {
        let flat: Vec<F> = theta.iter().map(|t| t[0]).collect();
        Some((|| {
            Ok(DesignMoments {
                mean: self.true_mean(design, &flat)?,
                variance: self.true_variance(design, &flat)?,
                gradient: self.true_gradient(design, &flat)?,
            })
        })())
    }
}
