use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_gamma, sample_poisson, InfectivityWeights, RLawParams};
use crate::{Error, Result};

/// The branching-process models compared in the synthetic study, plus the
/// fitted Gamma–Poisson renewal model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum GenerativeModel {
    /// λ_t = R0 · X_t.
    ConstantR { r0: f64 },
    /// λ_t ~ Gamma(α R0 X_t, α): per-case Gamma emissions summed, CV → 0.
    AdditiveGamma { r0: f64, alpha: f64 },
    /// λ_t ~ Gamma(α R0, α / X_t): constant CV 1/√(α R0).
    MultiplicativeGamma { r0: f64, alpha: f64 },
    /// λ_t = Σ_k w_k I_{t-k} with I_t ~ Gamma(a, b / X_t).
    FittedRenewal {
        params: RLawParams,
        weights: InfectivityWeights,
    },
}

impl GenerativeModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            // R0 = 0 is allowed for the constant model (extinction scenario).
            GenerativeModel::ConstantR { r0 } => *r0 >= 0.0 && r0.is_finite(),
            GenerativeModel::AdditiveGamma { r0, alpha }
            | GenerativeModel::MultiplicativeGamma { r0, alpha } => {
                *r0 > 0.0 && *alpha > 0.0 && r0.is_finite() && alpha.is_finite()
            }
            GenerativeModel::FittedRenewal { params, .. } => {
                RLawParams::new(params.shape, params.rate).is_ok()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("model parameters must be positive: {self:?}")))
        }
    }

    /// Mean reproductive number implied by the model.
    pub fn mean_r(&self) -> f64 {
        match self {
            GenerativeModel::ConstantR { r0 }
            | GenerativeModel::AdditiveGamma { r0, .. }
            | GenerativeModel::MultiplicativeGamma { r0, .. } => *r0,
            GenerativeModel::FittedRenewal { params, .. } => params.mean(),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            GenerativeModel::ConstantR { .. } => "m0",
            GenerativeModel::AdditiveGamma { .. } => "m1",
            GenerativeModel::MultiplicativeGamma { .. } => "m2",
            GenerativeModel::FittedRenewal { .. } => "renewal",
        }
    }
}

/// Draws the (possibly random) Poisson rate for the next day given the recent
/// incidence `history` (most recent value last).
///
/// For the fitted renewal model the latent secondary totals of the last
/// `min(K, history.len())` days are drawn afresh from Gamma(a, b / X).
pub fn sample_rate<R: Rng + ?Sized>(
    model: &GenerativeModel,
    history: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let &x = history.last().ok_or(Error::EmptyHistory)?;
    let rate = match model {
        GenerativeModel::ConstantR { r0 } => r0 * x,
        GenerativeModel::AdditiveGamma { r0, alpha } => {
            if x > 0.0 {
                sample_gamma(rng, alpha * r0 * x, *alpha)
            } else {
                0.0
            }
        }
        GenerativeModel::MultiplicativeGamma { r0, alpha } => {
            if x > 0.0 {
                x * sample_gamma(rng, alpha * r0, *alpha)
            } else {
                0.0
            }
        }
        GenerativeModel::FittedRenewal { params, weights } => {
            let w = weights.truncated(history.len());
            w.iter()
                .zip(history.iter().rev())
                .map(|(wk, &xk)| if xk > 0.0 { wk * xk * params.sample(rng) } else { 0.0 })
                .sum()
        }
    };
    Ok(rate)
}

/// One forward step: a Poisson draw at the model's rate.
pub fn step_incidence<R: Rng + ?Sized>(
    model: &GenerativeModel,
    history: &[f64],
    rng: &mut R,
) -> Result<u64> {
    let rate = sample_rate(model, history, rng)?;
    Ok(sample_poisson(rng, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::stats;

    const N: usize = 200_000;

    fn rates(model: &GenerativeModel, x: f64, seed: u64) -> Vec<f64> {
        let mut rng = Seed(seed).rng();
        (0..N).map(|_| sample_rate(model, &[x], &mut rng).unwrap()).collect()
    }

    fn cv(v: &[f64]) -> f64 {
        stats::variance(v).sqrt() / stats::mean(v)
    }

    #[test]
    fn constant_model_zero_is_absorbing() {
        let m = GenerativeModel::ConstantR { r0: 2.0 };
        let mut rng = Seed(1).rng();
        for _ in 0..100 {
            assert_eq!(step_incidence(&m, &[0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn all_models_absorb_at_zero() {
        let models = [
            GenerativeModel::AdditiveGamma { r0: 3.0, alpha: 0.5 },
            GenerativeModel::MultiplicativeGamma { r0: 3.0, alpha: 0.5 },
            GenerativeModel::FittedRenewal {
                params: RLawParams::new(2.0, 0.5).unwrap(),
                weights: InfectivityWeights::linear(3).unwrap(),
            },
        ];
        let mut rng = Seed(2).rng();
        for m in &models {
            for _ in 0..100 {
                assert_eq!(step_incidence(m, &[0.0, 0.0, 0.0], &mut rng).unwrap(), 0);
            }
        }
    }

    #[test]
    fn empty_history_is_rejected() {
        let m = GenerativeModel::ConstantR { r0: 1.0 };
        assert!(matches!(step_incidence(&m, &[], &mut Seed(0).rng()), Err(Error::EmptyHistory)));
    }

    #[test]
    fn constant_model_poisson_mean() {
        let m = GenerativeModel::ConstantR { r0: 2.0 };
        let mut rng = Seed(3).rng();
        let draws: Vec<f64> = (0..N).map(|_| step_incidence(&m, &[100.0], &mut rng).unwrap() as f64).collect();
        // sd of the mean = sqrt(200 / N) ≈ 0.032
        assert!((stats::mean(&draws) - 200.0).abs() < 0.15);
    }

    #[test]
    fn multiplicative_rate_is_exponential_at_unit_shape() {
        let m = GenerativeModel::MultiplicativeGamma { r0: 1.0, alpha: 1.0 };
        let r = rates(&m, 100.0, 4);
        assert!((stats::mean(&r) / 100.0 - 1.0).abs() < 0.01);
        assert!((cv(&r) - 1.0).abs() < 0.02);
    }

    #[test]
    fn cv_laws() {
        let (r0, alpha) = (1.2, 1.2);
        for &x in &[10.0, 100.0, 1000.0] {
            let m1 = rates(&GenerativeModel::AdditiveGamma { r0, alpha }, x, 5);
            let m2 = rates(&GenerativeModel::MultiplicativeGamma { r0, alpha }, x, 6);
            let want1 = (alpha * r0 * x).powf(-0.5);
            let want2 = (alpha * r0).powf(-0.5);
            assert!((cv(&m1) / want1 - 1.0).abs() < 0.05, "M1 x={x}");
            assert!((cv(&m2) / want2 - 1.0).abs() < 0.05, "M2 x={x}");
        }
    }

    #[test]
    fn renewal_rate_mean_matches_weighted_history() {
        let params = RLawParams::new(3.0, 2.0).unwrap();
        let weights = InfectivityWeights::linear(3).unwrap();
        let m = GenerativeModel::FittedRenewal { params, weights: weights.clone() };
        let history = [40.0, 0.0, 100.0, 60.0];
        let mut rng = Seed(7).rng();
        let r: Vec<f64> = (0..N).map(|_| sample_rate(&m, &history, &mut rng).unwrap()).collect();
        let w = weights.as_slice();
        let expect = params.mean() * (w[0] * 60.0 + w[1] * 100.0 + w[2] * 0.0);
        assert!((stats::mean(&r) / expect - 1.0).abs() < 0.01);
    }
}
