use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_poisson, GenerativeModel, InfectivityWeights, RLawParams, Trajectory, TrajectoryEnsemble};
use crate::ingest::IncidenceSeries;
use crate::rng::{Seed, StreamRng};
use crate::{Error, Result};

/// Redraws allowed per step before a draw above the population cap is
/// clamped and the trajectory flagged as truncated.
pub const MAX_REDRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub n_draws: usize,
    /// Reject daily counts above this fraction of the population; `None`
    /// disables the cap.
    pub cap_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            horizon: 30,
            n_draws: 1000,
            cap_fraction: Some(0.01),
            seed: 0,
        }
    }
}

impl SimulationConfig {
    fn validate(&self, seed_window: &IncidenceSeries) -> Result<Option<u64>> {
        if seed_window.is_empty() {
            return Err(Error::invalid("seed window is empty"));
        }
        if self.horizon < 1 || self.n_draws < 1 {
            return Err(Error::invalid("horizon and draw count must be at least 1"));
        }
        match self.cap_fraction {
            None => Ok(None),
            Some(f) if !(f > 0.0) => Err(Error::invalid("cap fraction must be positive")),
            Some(f) => {
                let pop = seed_window.population.ok_or(Error::MissingPopulation)?;
                Ok(Some(((f * pop as f64).floor() as u64).max(1)))
            }
        }
    }
}

// Stream layout for trajectory `i`: seed.child(i).stream(0) sets up the path,
// streams 2d - 1 and 2d carry the rate and Poisson draws of day d. Keeping
// the two layers on separate counters keeps paired scenarios aligned.
fn setup_stream(base: Seed) -> StreamRng {
    base.stream(0)
}

fn day_streams(base: Seed, day: usize) -> (StreamRng, StreamRng) {
    let d = day as u64;
    (base.stream(2 * d - 1), base.stream(2 * d))
}

fn map_draws<F>(n: usize, f: F) -> Vec<Trajectory>
where
    F: Fn(usize) -> Trajectory + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Draws `n_draws` forward paths of `horizon` days after `seed_window`.
pub fn simulate(
    model: &GenerativeModel,
    seed_window: &IncidenceSeries,
    cfg: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    model.validate()?;
    if let GenerativeModel::FittedRenewal { params, weights } = model {
        let law = *params;
        return simulate_renewal(&[law], weights, seed_window, cfg, move |_, rng| law.sample(rng));
    }
    let cap = cfg.validate(seed_window)?;
    let x0 = *seed_window.incidence.last().expect("validated non-empty");
    let root = Seed(cfg.seed);

    let trajectories = map_draws(cfg.n_draws, |i| {
        let base = root.child(i as u64);
        let mut x = x0;
        let mut out = Vec::with_capacity(cfg.horizon);
        let mut truncated = false;
        for day in 1..=cfg.horizon {
            let (mut rate_rng, mut pois_rng) = day_streams(base, day);
            let mut attempt = 0;
            let next = loop {
                let rate = super::sample_rate(model, &[x], &mut rate_rng).expect("non-empty history");
                let v = sample_poisson(&mut pois_rng, rate);
                match cap {
                    Some(c) if v > c => {
                        if attempt == MAX_REDRAWS {
                            truncated = true;
                            break c;
                        }
                        attempt += 1;
                    }
                    _ => break v,
                }
            };
            out.push(next);
            x = next as f64;
        }
        Trajectory {
            incidence: out,
            truncated,
        }
    });
    Ok(TrajectoryEnsemble::new(trajectories, seed_window.incidence.clone(), cfg.seed))
}

/// Forward simulation of the Gamma–Poisson renewal model.
///
/// Each trajectory picks one law from `laws` (uniformly, from its own stream)
/// and draws per-day reproductive numbers with `draw_r(law_index, rng)`; the
/// latent secondary total of day t is `X_t · R_t`, and day t + 1's incidence is
/// Poisson with rate `Σ_k w_k I_{t+1-k}`. Latent totals of the seed days are
/// drawn fresh per trajectory. A step whose count exceeds the population cap
/// redraws both the latest latent total and the Poisson count.
pub fn simulate_renewal<F>(
    laws: &[RLawParams],
    weights: &InfectivityWeights,
    seed_window: &IncidenceSeries,
    cfg: &SimulationConfig,
    draw_r: F,
) -> Result<TrajectoryEnsemble>
where
    F: Fn(usize, &mut StreamRng) -> f64 + Sync + Send,
{
    if laws.is_empty() {
        return Err(Error::invalid("at least one R law is required"));
    }
    let cap = cfg.validate(seed_window)?;
    let root = Seed(cfg.seed);
    let seed_x = &seed_window.incidence;
    let k = weights.k();
    let full_w = weights.as_slice();

    let trajectories = map_draws(cfg.n_draws, |i| {
        let base = root.child(i as u64);
        let mut setup = setup_stream(base);
        let law = if laws.len() == 1 { 0 } else { setup.random_range(0..laws.len()) };

        // latent[t] pairs with x[t]; the newest latent is drawn inside each step.
        let mut x: Vec<f64> = seed_x.clone();
        let mut latent: Vec<f64> = seed_x[..seed_x.len() - 1]
            .iter()
            .map(|&xt| if xt > 0.0 { xt * draw_r(law, &mut setup) } else { 0.0 })
            .collect();
        let mut out = Vec::with_capacity(cfg.horizon);
        let mut truncated = false;

        for day in 1..=cfg.horizon {
            let (mut rate_rng, mut pois_rng) = day_streams(base, day);
            let x_last = *x.last().expect("non-empty");
            let available = latent.len() + 1;
            let w_short;
            let w: &[f64] = if available >= k {
                full_w
            } else {
                w_short = weights.truncated(available);
                &w_short
            };
            let mut attempt = 0;
            let (i_last, next) = loop {
                let i_last = if x_last > 0.0 { x_last * draw_r(law, &mut rate_rng) } else { 0.0 };
                let older: f64 = w[1..]
                    .iter()
                    .zip(latent.iter().rev())
                    .map(|(wk, ik)| wk * ik)
                    .sum();
                let rate = w[0] * i_last + older;
                let v = sample_poisson(&mut pois_rng, rate);
                match cap {
                    Some(c) if v > c => {
                        if attempt == MAX_REDRAWS {
                            truncated = true;
                            break (i_last, c);
                        }
                        attempt += 1;
                    }
                    _ => break (i_last, v),
                }
            };
            latent.push(i_last);
            x.push(next as f64);
            out.push(next);
        }
        Trajectory {
            incidence: out,
            truncated,
        }
    });
    Ok(TrajectoryEnsemble::new(trajectories, seed_x.clone(), cfg.seed))
}
