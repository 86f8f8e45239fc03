//! Maximum-likelihood constant-R baseline.

use serde::{Deserialize, Serialize};

use crate::ingest::IncidenceSeries;
use crate::renewal::InfectivityWeights;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlEstimate {
    pub r_hat: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MlEstimate {
    pub fn covers(&self, r: f64) -> bool {
        self.ci_low <= r && r <= self.ci_high
    }
}

/// Total infectious pressure `Lambda_t = sum_k w_k X_{t-k}` for days `1..T`,
/// with weights truncated to the available history.
pub fn infectious_pressure(data: &IncidenceSeries, weights: &InfectivityWeights) -> Vec<f64> {
    let x = &data.incidence;
    (1..x.len())
        .map(|t| weights.truncated(t).iter().enumerate().map(|(k, w)| w * x[t - 1 - k]).sum())
        .collect()
}

/// `R = sum X_t / sum Lambda_t` with a Wald interval from Poisson counts.
pub fn ml_constant_r(data: &IncidenceSeries, weights: &InfectivityWeights) -> Result<MlEstimate> {
    if data.len() < 2 {
        return Err(Error::SeriesTooShort { len: data.len(), min: 2 });
    }
    let pressure: f64 = infectious_pressure(data, weights).iter().sum();
    if pressure <= 0.0 {
        return Err(Error::DegenerateWindow);
    }
    let cases: f64 = data.incidence[1..].iter().sum();
    let r_hat = cases / pressure;
    let std_error = (r_hat / pressure).sqrt();
    Ok(MlEstimate {
        r_hat,
        std_error,
        ci_low: r_hat - 1.96 * std_error,
        ci_high: r_hat + 1.96 * std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_computed() {
        let s = IncidenceSeries::synthetic(vec![10.0, 20.0, 30.0]);
        let w = InfectivityWeights::linear(2).unwrap();
        // Lambda = [10, (2*20 + 10)/3]; R = 50 / (10 + 50/3).
        let e = ml_constant_r(&s, &w).unwrap();
        assert_relative_eq!(e.r_hat, 50.0 / (10.0 + 50.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(e.std_error, (e.r_hat / (80.0 / 3.0)).sqrt(), max_relative = 1e-12);
        assert!(e.covers(e.r_hat));
    }

    #[test]
    fn degenerate() {
        let w = InfectivityWeights::linear(3).unwrap();
        assert!(matches!(
            ml_constant_r(&IncidenceSeries::synthetic(vec![0.0, 4.0]), &w),
            Err(Error::DegenerateWindow)
        ));
        assert!(ml_constant_r(&IncidenceSeries::synthetic(vec![4.0]), &w).is_err());
    }
}
