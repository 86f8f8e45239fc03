//! Generative renewal models and Monte Carlo trajectory ensembles.

mod ensemble;
mod model;
mod simulate;

pub use ensemble::{stopping_time, QuantileTable, StoppingTimes, Trajectory, TrajectoryEnsemble};
pub use model::{sample_rate, step_incidence, GenerativeModel};
pub use simulate::{simulate, simulate_renewal, SimulationConfig, MAX_REDRAWS};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::special::gamma_quantile;
use crate::{Error, Result};

/// Default number of lag days in the infectivity profile.
pub const DEFAULT_K: usize = 7;

/// Shape/rate of the Gamma law of the reproductive number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RLawParams {
    pub shape: f64,
    pub rate: f64,
}

impl RLawParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "Gamma law needs positive finite shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(RLawParams { shape, rate })
    }

    /// Maps the sampler's unconstrained coordinates to `(1 + e^alpha, 1 + e^beta)`.
    pub fn from_unconstrained(alpha: f64, beta: f64) -> Self {
        RLawParams {
            shape: 1.0 + alpha.exp(),
            rate: 1.0 + beta.exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn cv(&self) -> f64 {
        self.shape.powf(-0.5)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        gamma_quantile(p, self.shape, self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_gamma(rng, self.shape, self.rate)
    }
}

/// Normalised infectivity profile `w_1..w_K` over lag days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfectivityWeights {
    w: Vec<f64>,
}

impl InfectivityWeights {
    /// Linearly decreasing profile `w_s ∝ K - s + 1`, normalised to sum to one.
    pub fn linear(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("infectivity profile needs K >= 1"));
        }
        let total = (k * (k + 1)) as f64 / 2.0;
        Ok(InfectivityWeights {
            w: (1..=k).map(|s| (k - s + 1) as f64 / total).collect(),
        })
    }

    /// Arbitrary positive profile, normalised on construction.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("infectivity weights must be positive and finite"));
        }
        let total: f64 = values.iter().sum();
        Ok(InfectivityWeights {
            w: values.into_iter().map(|v| v / total).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// Weights for lags `1..=m` (with `m` capped at K), renormalised to sum to one.
    /// Used when fewer than K days of history exist.
    pub fn truncated(&self, available: usize) -> Vec<f64> {
        let m = available.min(self.w.len());
        let total: f64 = self.w[..m].iter().sum();
        self.w[..m].iter().map(|v| v / total).collect()
    }
}

impl Default for InfectivityWeights {
    fn default() -> Self {
        InfectivityWeights::linear(DEFAULT_K).expect("default K is positive")
    }
}

pub(crate) fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("validated gamma parameters")
        .sample(rng)
}

/// Poisson draw; non-positive rates give 0 and astronomically large rates
/// (beyond the sampler's range) return the rounded mean.
pub(crate) fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    if rate >= 1e18 || !rate.is_finite() {
        return rate.min(u64::MAX as f64).round() as u64;
    }
    let d = Poisson::new(rate).expect("positive finite rate");
    let v: f64 = d.sample(rng);
    v as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_examples() {
        assert_eq!(InfectivityWeights::linear(1).unwrap().as_slice(), &[1.0]);
        let w3 = InfectivityWeights::linear(3).unwrap();
        assert_eq!(w3.as_slice(), &[3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0]);
        let w7 = InfectivityWeights::linear(7).unwrap();
        assert_eq!(w7.as_slice()[0], 0.25);
        assert!(InfectivityWeights::linear(0).is_err());
    }

    #[test]
    fn weights_sum_and_decrease() {
        for k in 1..=100 {
            let w = InfectivityWeights::linear(k).unwrap();
            assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12, "K={k}");
            assert!(w.as_slice().windows(2).all(|p| p[1] < p[0]));
        }
    }

    #[test]
    fn truncated_weights_renormalise() {
        let w = InfectivityWeights::linear(7).unwrap();
        let t = w.truncated(2);
        assert_relative_eq!(t[0], 7.0 / 13.0);
        assert_relative_eq!(t[1], 6.0 / 13.0);
        assert_eq!(w.truncated(50).len(), 7);
    }

    #[test]
    fn law_moments() {
        let p = RLawParams::from_unconstrained(0.0, 0.0);
        assert_eq!((p.shape, p.rate), (2.0, 2.0));
        assert_eq!(p.mean(), 1.0);
        assert_relative_eq!(p.cv(), 0.5f64.sqrt());
        assert!(RLawParams::new(0.0, 1.0).is_err());
        assert!(RLawParams::new(1.0, f64::NAN).is_err());
    }
}
