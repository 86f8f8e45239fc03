//! Predictive-ordinate fit metrics and trajectory-envelope coverage.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::IncidenceSeries;
use crate::inference::{PosteriorDraws, RenewalTarget};
use crate::renewal::{InfectivityWeights, TrajectoryEnsemble};
use crate::special::log_sum_exp;
use crate::{Error, Result};

/// Per-observation predictive ordinates and their aggregates.
///
/// Ordinates are carried on the log scale; `ppo()` / `cpo()` exponentiate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    /// 0-based window days of the scored observations.
    pub days: Vec<usize>,
    pub log_ppo: Vec<f64>,
    pub log_cpo: Vec<f64>,
    pub lppd: f64,
    pub lpml: f64,
    pub avg_loglik: f64,
    pub n_draws: usize,
}

impl FitMetrics {
    pub fn ppo(&self) -> Vec<f64> {
        self.log_ppo.iter().map(|v| v.exp()).collect()
    }

    pub fn cpo(&self) -> Vec<f64> {
        self.log_cpo.iter().map(|v| v.exp()).collect()
    }
}

/// Metrics from a matrix of log-likelihoods `ll[draw][obs]`.
pub fn metrics_from_loglik(days: Vec<usize>, ll: &[Vec<f64>]) -> Result<FitMetrics> {
    let s = ll.len();
    if s == 0 {
        return Err(Error::invalid("no posterior draws"));
    }
    let n = days.len();
    let ln_s = (s as f64).ln();
    let mut log_ppo = Vec::with_capacity(n);
    let mut log_cpo = Vec::with_capacity(n);
    for i in 0..n {
        log_ppo.push(log_sum_exp(ll.iter().map(|row| row[i])) - ln_s);
        // Harmonic mean in log space.
        log_cpo.push(-(log_sum_exp(ll.iter().map(|row| -row[i])) - ln_s));
    }
    let lppd = log_ppo.iter().sum();
    let lpml = if n > 0 { log_cpo.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let avg_loglik = ll.iter().map(|row| row.iter().sum::<f64>()).sum::<f64>() / s as f64;
    Ok(FitMetrics { days, log_ppo, log_cpo, lppd, lpml, avg_loglik, n_draws: s })
}

/// PPO, CPO, LPPD, LPML and the average log-likelihood of a posterior
/// sample on its window. The draws must carry their latent totals.
pub fn predictive_ordinates(
    draws: &PosteriorDraws,
    data: &IncidenceSeries,
    weights: &InfectivityWeights,
) -> Result<FitMetrics> {
    let target = RenewalTarget::new(data, weights, draws.variant)?;
    if target.latent_days() != draws.latent_days.as_slice() {
        return Err(Error::invalid("posterior latent layout does not match the window"));
    }
    if draws.is_empty() || !draws.has_latents() {
        return Err(Error::invalid("posterior draws lack latent totals"));
    }
    let ll: Vec<Vec<f64>> = draws
        .iter()
        .map(|s| {
            let latent: Vec<f64> = s.log_i.iter().map(|v| v.exp()).collect();
            target.pointwise_loglik(&latent)
        })
        .collect();
    metrics_from_loglik(target.observed_days(), &ll)
}

/// Which envelope an observed trajectory must stay inside.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Envelope {
    #[default]
    MinMax,
    /// Pointwise quantile band.
    Band { lo: f64, hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: Vec<bool>,
    pub fraction: f64,
}

/// Whether each observed trajectory lies inside its ensemble's envelope on
/// every day.
pub fn envelope_coverage(
    ensembles: &[TrajectoryEnsemble],
    observed: &[IncidenceSeries],
    envelope: Envelope,
) -> Result<Coverage> {
    if ensembles.len() != observed.len() {
        return Err(Error::DimensionMismatch { expected: ensembles.len(), got: observed.len() });
    }
    let mut covered = Vec::with_capacity(ensembles.len());
    for (e, obs) in ensembles.iter().zip(observed) {
        if e.horizon() != obs.len() {
            return Err(Error::HorizonMismatch { ensemble: e.horizon(), observed: obs.len() });
        }
        let bounds: Vec<(f64, f64)> = match envelope {
            Envelope::MinMax => e.min_max(),
            Envelope::Band { lo, hi } => {
                let q = e.quantile_envelope(&[lo, hi])?;
                q.values.iter().map(|row| (row[0], row[1])).collect()
            }
        };
        covered.push(
            obs.incidence
                .iter()
                .zip(&bounds)
                .all(|(&x, &(lo, hi))| lo <= x && x <= hi),
        );
    }
    let fraction = if covered.is_empty() {
        0.0
    } else {
        covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64
    };
    Ok(Coverage { covered, fraction })
}

/// One row of the flat metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub region: String,
    pub window: String,
    pub lppd: f64,
    pub lpml: f64,
    pub avg_loglik: f64,
    pub n_obs: usize,
}

impl MetricsRow {
    pub fn new(variant: &str, region: &str, window: &str, m: &FitMetrics) -> Self {
        MetricsRow {
            variant: variant.to_string(),
            region: region.to_string(),
            window: window.to_string(),
            lppd: m.lppd,
            lpml: m.lpml,
            avg_loglik: m.avg_loglik,
            n_obs: m.days.len(),
        }
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
