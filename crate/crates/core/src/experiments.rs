//! Synthetic branching-process studies: trajectory envelopes, stopping
//! times, and recovery of R by the constant-R estimator.

use serde::{Deserialize, Serialize};

use crate::inference::ml_constant_r;
use crate::renewal::{simulate, stopping_time, GenerativeModel, InfectivityWeights, SimulationConfig, TrajectoryEnsemble};
use crate::rng::Seed;
use crate::stats::{mean, quantiles};
use crate::{IncidenceSeries, Result};

/// Shape used for the Gamma models when none is given.
pub const DEFAULT_ALPHA: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingSetup {
    pub r0: f64,
    pub alpha: f64,
    pub x0: f64,
    pub horizon: usize,
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for BranchingSetup {
    fn default() -> Self {
        BranchingSetup { r0: 1.0, alpha: DEFAULT_ALPHA, x0: 100.0, horizon: 100, n_draws: 5000, seed: 7 }
    }
}

impl BranchingSetup {
    pub fn models(&self) -> [GenerativeModel; 3] {
        [
            GenerativeModel::ConstantR { r0: self.r0 },
            GenerativeModel::AdditiveGamma { r0: self.r0, alpha: self.alpha },
            GenerativeModel::MultiplicativeGamma { r0: self.r0, alpha: self.alpha },
        ]
    }

    /// Uncapped ensemble for one model. Every model reuses the same seed.
    pub fn run(&self, model: &GenerativeModel) -> Result<TrajectoryEnsemble> {
        let cfg = SimulationConfig { horizon: self.horizon, n_draws: self.n_draws, cap_fraction: None, seed: self.seed };
        simulate(model, &IncidenceSeries::synthetic(vec![self.x0]), &cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub model: String,
    pub q99_cumulative: f64,
    pub q99_incidence: f64,
    pub mean_cumulative: f64,
    pub stopping_fraction: f64,
}

pub fn tail_summary(model: &GenerativeModel, e: &TrajectoryEnsemble, threshold: u64) -> Result<TailSummary> {
    let last = e.horizon() - 1;
    let cum = e.cumulative_values(last);
    Ok(TailSummary {
        model: model.short_name().to_string(),
        q99_cumulative: quantiles(&cum, &[0.99])[0],
        q99_incidence: quantiles(&e.day_values(last), &[0.99])[0],
        mean_cumulative: mean(&cum),
        stopping_fraction: stopping_time(e, threshold, e.horizon())?.fraction_reached,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlRecoveryReport {
    pub n: usize,
    pub true_mean: f64,
    pub mean_estimate: f64,
    /// Mean of (estimate - true mean).
    pub mean_bias: f64,
    pub mean_abs_error: f64,
    /// Fraction of 95% intervals containing the true mean.
    pub coverage: f64,
    /// Epidemics whose estimator was undefined (no infectious pressure).
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlRecoverySetup {
    pub n: usize,
    /// Gamma law of the daily R: shape and rate.
    pub shape: f64,
    pub rate: f64,
    pub x0: f64,
    pub days: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for MlRecoverySetup {
    fn default() -> Self {
        MlRecoverySetup { n: 200, shape: 1.2, rate: 1.0, x0: 100.0, days: 20, k: crate::renewal::DEFAULT_K, seed: 7 }
    }
}

/// Simulates `n` epidemics of `days` days under M2 with R_t ~ Gamma(shape, rate)
/// and scores the constant-R estimator against the true mean shape / rate.
pub fn ml_recovery(setup: &MlRecoverySetup) -> Result<MlRecoveryReport> {
    // M2 with R0 = shape / rate and alpha = rate gives R_t ~ Gamma(shape, rate).
    let model = GenerativeModel::MultiplicativeGamma { r0: setup.shape / setup.rate, alpha: setup.rate };
    let truth = setup.shape / setup.rate;
    let weights = InfectivityWeights::linear(setup.k)?;
    let root = Seed(setup.seed).child_str("ml_recovery");
    let seed_window = IncidenceSeries::synthetic(vec![setup.x0]);
    let (mut est, mut hits, mut skipped) = (Vec::new(), 0usize, 0usize);
    for i in 0..setup.n {
        let cfg = SimulationConfig {
            horizon: setup.days - 1,
            n_draws: 1,
            cap_fraction: None,
            seed: root.child(i as u64).0,
        };
        let e = simulate(&model, &seed_window, &cfg)?;
        let mut x = vec![setup.x0];
        x.extend(e.trajectories[0].incidence.iter().map(|&v| v as f64));
        match ml_constant_r(&IncidenceSeries::synthetic(x), &weights) {
            Ok(m) => {
                hits += m.covers(truth) as usize;
                est.push(m.r_hat);
            }
            Err(_) => skipped += 1,
        }
    }
    let scored = est.len().max(1) as f64;
    let mean_estimate = mean(&est);
    Ok(MlRecoveryReport {
        n: setup.n,
        true_mean: truth,
        mean_estimate,
        mean_bias: mean_estimate - truth,
        mean_abs_error: est.iter().map(|r| (r - truth).abs()).sum::<f64>() / scored,
        coverage: hits as f64 / scored,
        skipped,
    })
}
