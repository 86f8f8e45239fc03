//! Split R-hat and effective sample size.

use serde::{Deserialize, Serialize};

use crate::stats::{mean, variance};
use crate::{Error, Result};

pub const MIN_CHAINS: usize = 2;
pub const MIN_DRAWS: usize = 10;
pub const RHAT_THRESHOLD: f64 = 1.1;
pub const MIN_NEFF_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub n_eff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostic>,
    pub total_draws: usize,
    pub converged: bool,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.params.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_neff(&self) -> f64 {
        self.params.iter().map(|p| p.n_eff).fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostic> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    let n = chains.first().map_or(0, |c| c.len());
    if chains.len() < MIN_CHAINS || n < MIN_DRAWS {
        return Err(Error::TooFewDraws {
            chains: chains.len(),
            draws: n,
            min_chains: MIN_CHAINS,
            min_draws: MIN_DRAWS,
        });
    }
    if let Some(c) = chains.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: c.len() });
    }
    Ok(n)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let half = chains[0].len() / 2;
    chains
        .iter()
        .flat_map(|c| {
            let n = c.len();
            [&c[..half], &c[n - half..]]
        })
        .collect()
}

/// Potential scale reduction on split chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let parts = split(chains);
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let w = mean(&parts.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b = n * variance(&means);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

fn autocov(c: &[f64], mu: f64, lag: usize) -> f64 {
    let n = c.len();
    c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| (a - mu) * (b - mu)).sum::<f64>() / n as f64
}

/// Bulk effective sample size on split chains, using Geyer's initial
/// monotone positive sequence to truncate the autocorrelation sum.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let parts = split(chains);
    let m = parts.len();
    let n = parts[0].len();
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| parts.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
    let mean_var = parts
        .iter()
        .zip(&means)
        .map(|(c, &mu)| autocov(c, mu, 0) * n as f64 / (n as f64 - 1.0))
        .sum::<f64>()
        / m as f64;
    let var_plus = mean_var * (n as f64 - 1.0) / n as f64 + variance(&means);
    if var_plus == 0.0 {
        return Ok(f64::NAN);
    }
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - acov(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut s = 1;
    while s + 3 <= max_s {
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s] {
            rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
            rho[s + 2] = rho[s + 1];
        }
        s += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1]).max(1.0 / total.log10());
    Ok(total / tau)
}

/// Diagnostics for named scalar parameters, each given as draws per chain.
pub fn diagnose_params(params: &[(String, Vec<Vec<f64>>)]) -> Result<Diagnostics> {
    let mut out = Vec::with_capacity(params.len());
    let mut total = 0;
    for (name, chains) in params {
        let n = check_shape(chains)?;
        total = chains.len() * n;
        out.push(ParamDiagnostic {
            name: name.clone(),
            rhat: split_rhat(chains)?,
            n_eff: effective_sample_size(chains)?,
        });
    }
    let converged = out
        .iter()
        .all(|p| p.rhat <= RHAT_THRESHOLD && p.n_eff >= MIN_NEFF_FRACTION * total as f64);
    Ok(Diagnostics { params: out, total_draws: total, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal_chains(chains: usize, n: usize, seed: u64, offsets: &[f64]) -> Vec<Vec<f64>> {
        (0..chains)
            .map(|c| {
                let mut rng = Seed(seed).child(c as u64).rng();
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + offsets[c % offsets.len()]).collect()
            })
            .collect()
    }

    #[test]
    fn iid_chains_mix() {
        let c = normal_chains(4, 1000, 3, &[0.0]);
        let r = split_rhat(&c).unwrap();
        assert!((0.99..=1.02).contains(&r), "{r}");
        let ess = effective_sample_size(&c).unwrap();
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn separated_chains_flagged() {
        let c = normal_chains(2, 500, 4, &[0.0, 5.0]);
        assert!(split_rhat(&c).unwrap() > 1.1);
        let d = diagnose_params(&[("x".into(), c)]).unwrap();
        assert!(!d.converged);
    }

    #[test]
    fn autocorrelated_chain_has_small_ess() {
        // AR(1) with phi = 0.9: ESS / N is about (1 - phi) / (1 + phi) ~ 0.053.
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                let mut rng = Seed(8).child(c).rng();
                let mut x = 0.0;
                (0..4000)
                    .map(|_| {
                        x = 0.9 * x + rng.sample::<f64, _>(StandardNormal) * (1.0f64 - 0.81).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let ratio = effective_sample_size(&chains).unwrap() / 16000.0;
        assert!((ratio - 0.0526).abs() < 0.015, "{ratio}");
    }

    #[test]
    fn rejects_small_inputs() {
        let one = normal_chains(1, 100, 1, &[0.0]);
        assert!(matches!(split_rhat(&one), Err(Error::TooFewDraws { chains: 1, .. })));
        let short = normal_chains(3, 9, 1, &[0.0]);
        assert!(matches!(effective_sample_size(&short), Err(Error::TooFewDraws { draws: 9, .. })));
    }

    #[test]
    fn constant_chains() {
        let c = vec![vec![2.0; 20], vec![2.0; 20]];
        assert_eq!(split_rhat(&c).unwrap(), 1.0);
        let d = vec![vec![2.0; 20], vec![3.0; 20]];
        assert!(split_rhat(&d).unwrap().is_infinite());
    }
}
