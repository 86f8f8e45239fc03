use serde::{Deserialize, Serialize};

use super::posterior::PosteriorDraws;
use crate::renewal::RLawParams;
use crate::rng::Seed;
use crate::stats::{mean, quantiles};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RLawSummary {
    pub mean: f64,
    pub median: f64,
    pub probs: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Posterior mean of E[R] = a / b, without the extra Gamma draw.
    pub mean_of_means: f64,
    pub n: usize,
}

/// Summary of the R law mixed over the posterior: one R ~ Gamma(a, b) per draw.
pub fn r_law_summary(draws: &PosteriorDraws, probs: &[f64], seed: u64) -> RLawSummary {
    summarize_laws(&draws.r_laws(), probs, seed)
}

pub fn summarize_laws(laws: &[RLawParams], probs: &[f64], seed: u64) -> RLawSummary {
    let mut rng = Seed(seed).child_str("r_law_summary").rng();
    let r: Vec<f64> = laws.iter().map(|l| l.sample(&mut rng)).collect();
    let means: Vec<f64> = laws.iter().map(|l| l.mean()).collect();
    RLawSummary {
        mean: mean(&r),
        median: quantiles(&r, &[0.5])[0],
        probs: probs.to_vec(),
        quantiles: quantiles(&r, probs),
        mean_of_means: mean(&means),
        n: r.len(),
    }
}

/// Equal-tailed credible interval of E[R] across draws.
pub fn mean_r_interval(draws: &PosteriorDraws, level: f64) -> (f64, f64) {
    let m: Vec<f64> = draws.iter().map(|s| s.mean_r()).collect();
    let a = (1.0 - level) / 2.0;
    let q = quantiles(&m, &[a, 1.0 - a]);
    (q[0], q[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma_cdf;

    #[test]
    fn degenerate_posterior_is_gamma_2_2() {
        let laws = vec![RLawParams::from_unconstrained(0.0, 0.0); 200_000];
        let s = summarize_laws(&laws, &[0.5, 0.95], 1);
        // Median oracle: bisection on the Gamma(2, 2) CDF.
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_cdf(mid, 2.0, 2.0) < 0.5 { lo = mid } else { hi = mid }
        }
        assert!((lo - 0.8391).abs() < 1e-4);
        assert!((s.mean - 1.0).abs() < 0.01, "{}", s.mean);
        assert!((s.median - lo).abs() < 0.01, "{}", s.median);
        assert_eq!(s.mean_of_means, 1.0);
    }

    #[test]
    fn empty_probs() {
        let laws = vec![RLawParams::from_unconstrained(0.0, 0.0); 10];
        let s = summarize_laws(&laws, &[], 1);
        assert!(s.quantiles.is_empty());
        assert!(s.mean.is_finite());
    }
}
