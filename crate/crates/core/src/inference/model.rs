//! Log-joint density of the Gamma–Poisson renewal model on the unconstrained
//! scale `(alpha, beta, log I_t)`.

use serde::{Deserialize, Serialize};

use crate::ingest::IncidenceSeries;
use crate::renewal::InfectivityWeights;
use crate::special::{digamma, ln_gamma, LN_2PI};
use crate::{Error, Result};

/// How the latent secondary totals scale with the day's incidence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// I_t ~ Gamma(a, b / X_t): constant CV.
    #[default]
    Multiplicative,
    /// I_t ~ Gamma(a X_t, b): CV shrinks like X_t^(-1/2).
    Additive,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Multiplicative => "multiplicative",
            Variant::Additive => "additive",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" | "mult" => Ok(Variant::Multiplicative),
            "additive" | "add" => Ok(Variant::Additive),
            other => Err(Error::invalid(format!("unknown model variant `{other}`"))),
        }
    }
}

/// One point of the sampler's state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub alpha: f64,
    pub beta: f64,
    /// Log latent totals, aligned with [`RenewalTarget::latent_days`].
    pub log_i: Vec<f64>,
}

impl LatentState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.log_i.len());
        v.push(self.alpha);
        v.push(self.beta);
        v.extend_from_slice(&self.log_i);
        v
    }

    pub fn from_slice(q: &[f64]) -> Self {
        LatentState {
            alpha: q[0],
            beta: q[1],
            log_i: q[2..].to_vec(),
        }
    }

    pub fn mean_r(&self) -> f64 {
        (1.0 + self.alpha.exp()) / (1.0 + self.beta.exp())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct PoissonTerm {
    pub day: usize,
    pub y: u64,
    ln_y_fact: f64,
    /// (latent coordinate, renormalised weight) for every lag with X > 0.
    pub lags: Vec<(usize, f64)>,
}

/// The fitted window with lag structure precomputed.
///
/// Latent totals exist for days `t < T` (0-based, all but the last) with
/// `X_t > 0`; the final day's total feeds no observation inside the window
/// and integrates out of the joint exactly. Observations are days `1..T`;
/// lags are truncated to the available history with weights renormalised.
#[derive(Clone, Debug)]
pub struct RenewalTarget {
    pub variant: Variant,
    latent_days: Vec<usize>,
    latent_x: Vec<f64>,
    pub(crate) terms: Vec<PoissonTerm>,
}

impl RenewalTarget {
    pub fn new(data: &IncidenceSeries, weights: &InfectivityWeights, variant: Variant) -> Result<Self> {
        let x = &data.incidence;
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("incidence must be finite and non-negative"));
        }
        let n = x.len();
        let mut coord_of_day = vec![None; n];
        let mut latent_days = Vec::new();
        let mut latent_x = Vec::new();
        for (t, &xt) in x.iter().enumerate().take(n.saturating_sub(1)) {
            if xt > 0.0 {
                coord_of_day[t] = Some(latent_days.len());
                latent_days.push(t);
                latent_x.push(xt);
            }
        }
        let terms = (1..n)
            .map(|t| {
                let w = weights.truncated(t);
                let lags = w
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &wk)| coord_of_day[t - 1 - k].map(|j| (j, wk)))
                    .collect();
                let y = x[t].round() as u64;
                PoissonTerm {
                    day: t,
                    y,
                    ln_y_fact: ln_gamma(y as f64 + 1.0),
                    lags,
                }
            })
            .collect();
        Ok(RenewalTarget {
            variant,
            latent_days,
            latent_x,
            terms,
        })
    }

    /// 0-based window days carrying a latent coordinate.
    pub fn latent_days(&self) -> &[usize] {
        &self.latent_days
    }

    pub fn dim(&self) -> usize {
        2 + self.latent_days.len()
    }

    /// Window days with a Poisson observation (0-based).
    pub fn observed_days(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.day).collect()
    }

    /// Poisson rate of each observed day given latent totals on the natural scale.
    pub fn rates(&self, latent: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| term.lags.iter().map(|&(j, w)| w * latent[j]).sum())
            .collect()
    }

    /// Per-observation log-likelihood given latent totals.
    pub fn pointwise_loglik(&self, latent: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| {
                let rate: f64 = term.lags.iter().map(|&(j, w)| w * latent[j]).sum();
                poisson_term(term.y, term.ln_y_fact, rate)
            })
            .collect()
    }

    fn shape_rate(&self, j: usize, a: f64, b: f64) -> (f64, f64) {
        match self.variant {
            Variant::Multiplicative => (a, b / self.latent_x[j]),
            Variant::Additive => (a * self.latent_x[j], b),
        }
    }

    /// Log joint density (including the log-transform Jacobian) at `q`.
    pub fn log_density(&self, q: &[f64]) -> f64 {
        let (alpha, beta) = (q[0], q[1]);
        let (a, b) = (1.0 + alpha.exp(), 1.0 + beta.exp());
        let mut lp = -0.5 * (alpha * alpha + beta * beta) - LN_2PI;
        let lgamma_a = ln_gamma(a);
        let mut latent = Vec::with_capacity(self.latent_days.len());
        for (j, &log_i) in q[2..].iter().enumerate() {
            let (s, r) = self.shape_rate(j, a, b);
            let lg = match self.variant {
                Variant::Multiplicative => lgamma_a,
                Variant::Additive => ln_gamma(s),
            };
            let i = log_i.exp();
            lp += s * r.ln() - lg + s * log_i - r * i;
            latent.push(i);
        }
        for term in &self.terms {
            let rate: f64 = term.lags.iter().map(|&(j, w)| w * latent[j]).sum();
            lp += poisson_term(term.y, term.ln_y_fact, rate);
        }
        lp
    }

    /// Log joint density and its gradient.
    pub fn log_density_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let (alpha, beta) = (q[0], q[1]);
        let (ea, eb) = (alpha.exp(), beta.exp());
        let (a, b) = (1.0 + ea, 1.0 + eb);
        let mut lp = -0.5 * (alpha * alpha + beta * beta) - LN_2PI;
        let mut d_alpha = -alpha;
        let mut d_beta = -beta;
        let (lgamma_a, digamma_a) = (ln_gamma(a), digamma(a));
        let latent: Vec<f64> = q[2..].iter().map(|v| v.exp()).collect();
        for (j, &log_i) in q[2..].iter().enumerate() {
            let i = latent[j];
            let xj = self.latent_x[j];
            let (s, r) = self.shape_rate(j, a, b);
            match self.variant {
                Variant::Multiplicative => {
                    lp += s * r.ln() - lgamma_a + s * log_i - r * i;
                    d_alpha += (r.ln() - digamma_a + log_i) * ea;
                    d_beta += (a / b - i / xj) * eb;
                }
                Variant::Additive => {
                    lp += s * r.ln() - ln_gamma(s) + s * log_i - r * i;
                    d_alpha += xj * (b.ln() - digamma(s) + log_i) * ea;
                    d_beta += (s / b - i) * eb;
                }
            }
            grad[2 + j] = s - r * i;
        }
        for term in &self.terms {
            let rate: f64 = term.lags.iter().map(|&(j, w)| w * latent[j]).sum();
            lp += poisson_term(term.y, term.ln_y_fact, rate);
            if rate > 0.0 {
                let coef = term.y as f64 / rate - 1.0;
                for &(j, w) in &term.lags {
                    grad[2 + j] += coef * w * latent[j];
                }
            }
        }
        grad[0] = d_alpha;
        grad[1] = d_beta;
        lp
    }

    fn check(&self, state: &LatentState) -> Result<Vec<f64>> {
        if state.log_i.len() != self.latent_days.len() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_days.len(),
                got: state.log_i.len(),
            });
        }
        let q = state.to_vec();
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(q)
    }
}

fn poisson_term(y: u64, ln_y_fact: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        y as f64 * rate.ln() - rate - ln_y_fact
    } else if y == 0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Log joint of priors, latent Gamma densities, Poisson observations and the
/// Jacobian of the log transform.
pub fn log_joint(
    state: &LatentState,
    data: &IncidenceSeries,
    weights: &InfectivityWeights,
    variant: Variant,
) -> Result<f64> {
    let target = RenewalTarget::new(data, weights, variant)?;
    let q = target.check(state)?;
    Ok(target.log_density(&q))
}

/// Analytic gradient of [`log_joint`] with respect to `(alpha, beta, log I)`.
pub fn grad_log_joint(
    state: &LatentState,
    data: &IncidenceSeries,
    weights: &InfectivityWeights,
    variant: Variant,
) -> Result<Vec<f64>> {
    let target = RenewalTarget::new(data, weights, variant)?;
    let q = target.check(state)?;
    let mut g = vec![0.0; q.len()];
    target.log_density_grad(&q, &mut g);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{gamma_ln_pdf, poisson_ln_pmf, std_normal_ln_pdf};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn series(v: &[f64]) -> IncidenceSeries {
        IncidenceSeries::synthetic(v.to_vec())
    }

    #[test]
    fn prior_only() {
        let s = LatentState { alpha: 0.0, beta: 0.0, log_i: vec![] };
        let w = InfectivityWeights::linear(1).unwrap();
        let lp = log_joint(&s, &series(&[]), &w, Variant::Multiplicative).unwrap();
        assert_relative_eq!(lp, -(2.0 * std::f64::consts::PI).ln(), max_relative = 1e-15);
        assert_relative_eq!(lp, -1.8379, epsilon = 1e-4);
        let g = grad_log_joint(&s, &series(&[]), &w, Variant::Multiplicative).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn two_day_closed_form() {
        // X = [1, 1], K = 1: one latent (day 1) with Gamma(2, 2 / 1) and one
        // Poisson observation with rate I_1.
        let w = InfectivityWeights::linear(1).unwrap();
        for &log_i in &[-1.3, 0.0, 0.4, 2.0] {
            let s = LatentState { alpha: 0.0, beta: 0.0, log_i: vec![log_i] };
            let i = f64::exp(log_i);
            let expect = 2.0 * std_normal_ln_pdf(0.0) + gamma_ln_pdf(i, 2.0, 2.0) + poisson_ln_pmf(1, i) + log_i;
            let got = log_joint(&s, &series(&[1.0, 1.0]), &w, Variant::Multiplicative).unwrap();
            assert_relative_eq!(got, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn alpha_beta_shift_closed_form() {
        let w = InfectivityWeights::linear(2).unwrap();
        let data = series(&[4.0, 6.0, 5.0]);
        let s = LatentState { alpha: 0.3, beta: -0.7, log_i: vec![1.1, 1.9] };
        let (a, b) = (1.0 + 0.3f64.exp(), 1.0 + (-0.7f64).exp());
        let (i1, i2) = (1.1f64.exp(), 1.9f64.exp());
        let prior = std_normal_ln_pdf(0.3) + std_normal_ln_pdf(-0.7);
        let mult = prior
            + gamma_ln_pdf(i1, a, b / 4.0) + 1.1
            + gamma_ln_pdf(i2, a, b / 6.0) + 1.9
            + poisson_ln_pmf(6, i1)
            + poisson_ln_pmf(5, (2.0 * i2 + i1) / 3.0);
        assert_relative_eq!(log_joint(&s, &data, &w, Variant::Multiplicative).unwrap(), mult, max_relative = 1e-12);
        let add = prior
            + gamma_ln_pdf(i1, a * 4.0, b) + 1.1
            + gamma_ln_pdf(i2, a * 6.0, b) + 1.9
            + poisson_ln_pmf(6, i1)
            + poisson_ln_pmf(5, (2.0 * i2 + i1) / 3.0);
        assert_relative_eq!(log_joint(&s, &data, &w, Variant::Additive).unwrap(), add, max_relative = 1e-12);
    }

    #[test]
    fn zero_days_carry_no_latent() {
        let data = series(&[3.0, 0.0, 2.0, 4.0]);
        let t = RenewalTarget::new(&data, &InfectivityWeights::linear(2).unwrap(), Variant::Multiplicative).unwrap();
        assert_eq!(t.latent_days(), &[0, 2]);
        assert_eq!(t.observed_days(), vec![1, 2, 3]);
        let bad = LatentState { alpha: 0.0, beta: 0.0, log_i: vec![0.0; 3] };
        assert!(matches!(
            log_joint(&bad, &data, &InfectivityWeights::linear(2).unwrap(), Variant::Multiplicative),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
        let nan = LatentState { alpha: f64::NAN, beta: 0.0, log_i: vec![0.0; 2] };
        assert!(matches!(
            log_joint(&nan, &data, &InfectivityWeights::linear(2).unwrap(), Variant::Multiplicative),
            Err(Error::NonFiniteState)
        ));
    }

    #[test]
    fn smoothed_counts_round_in_poisson_only() {
        // X_2 = 2.6 rounds to 3 in the Poisson mass; X_1 = 1.4 enters the Gamma rate as-is.
        let w = InfectivityWeights::linear(1).unwrap();
        let s = LatentState { alpha: 0.0, beta: 0.0, log_i: vec![0.5] };
        let i = 0.5f64.exp();
        let expect = 2.0 * std_normal_ln_pdf(0.0) + gamma_ln_pdf(i, 2.0, 2.0 / 1.4) + 0.5 + poisson_ln_pmf(3, i);
        let got = log_joint(&s, &series(&[1.4, 2.6]), &w, Variant::Multiplicative).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = series(&[20.0, 25.0, 0.0, 31.0, 40.0, 38.0, 52.0, 60.0, 0.0, 75.0]);
        let w = InfectivityWeights::linear(3).unwrap();
        let mut rng = crate::rng::Seed(99).rng();
        for variant in [Variant::Multiplicative, Variant::Additive] {
            let t = RenewalTarget::new(&data, &w, variant).unwrap();
            for _ in 0..10 {
                let mut q: Vec<f64> = vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                for &d in t.latent_days() {
                    q.push(data.incidence[d].ln() + rng.random_range(-0.5..0.5));
                }
                let mut g = vec![0.0; q.len()];
                t.log_density_grad(&q, &mut g);
                assert_relative_eq!(t.log_density_grad(&q, &mut g.clone()), t.log_density(&q), max_relative = 1e-13);
                for k in 0..q.len() {
                    let h = 1e-5;
                    let (mut up, mut dn) = (q.clone(), q.clone());
                    up[k] += h;
                    dn[k] -= h;
                    let fd = (t.log_density(&up) - t.log_density(&dn)) / (2.0 * h);
                    let err = (g[k] - fd).abs() / g[k].abs().max(1.0);
                    assert!(err < 1e-4, "{variant:?} coord {k}: {} vs {fd}", g[k]);
                }
            }
        }
    }

    #[test]
    fn latent_storage_order_is_consistent() {
        // Explicit sum over the three latents in day order.
        let data = series(&[5.0, 9.0, 7.0, 11.0]);
        let w = InfectivityWeights::linear(2).unwrap();
        let t = RenewalTarget::new(&data, &w, Variant::Multiplicative).unwrap();
        let q = vec![0.2, -0.1, 1.5, 2.1, 2.0];
        let (a, b) = (1.0 + 0.2f64.exp(), 1.0 + (-0.1f64).exp());
        let i: Vec<f64> = q[2..].iter().map(|v: &f64| v.exp()).collect();
        let mut expect = std_normal_ln_pdf(0.2) + std_normal_ln_pdf(-0.1);
        for (j, &d) in t.latent_days().iter().enumerate() {
            expect += gamma_ln_pdf(i[j], a, b / data.incidence[d]) + q[2 + j];
        }
        expect += poisson_ln_pmf(9, i[0]);
        expect += poisson_ln_pmf(7, (2.0 * i[1] + i[0]) / 3.0);
        expect += poisson_ln_pmf(11, (2.0 * i[2] + i[1]) / 3.0);
        assert_relative_eq!(t.log_density(&q), expect, max_relative = 1e-12);
    }
}
