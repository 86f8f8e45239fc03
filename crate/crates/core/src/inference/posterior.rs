use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::diagnostics::{diagnose_params, Diagnostics, MIN_CHAINS};
use super::model::{LatentState, RenewalTarget, Variant};
use super::nuts::{run_chain, ChainStats, LogDensity, MetricKind, NutsSettings};
use crate::ingest::IncidenceSeries;
use crate::renewal::{InfectivityWeights, RLawParams};
use crate::rng::Seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub metric: MetricKind,
    pub rng_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 10,
            n_warmup: 5000,
            n_samples: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            metric: MetricKind::default(),
            rng_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < MIN_CHAINS {
            return Err(Error::invalid(format!("n_chains must be at least {MIN_CHAINS}")));
        }
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if self.max_tree_depth == 0 || self.max_tree_depth > 20 {
            return Err(Error::invalid("max_tree_depth must be in 1..=20"));
        }
        Ok(())
    }
}

/// Multi-chain posterior sample for one fitted window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub config: SamplerConfig,
    pub region: String,
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub variant: Variant,
    pub data_digest: String,
    /// 0-based window days of the latent coordinates.
    pub latent_days: Vec<usize>,
    pub chains: Vec<Vec<LatentState>>,
    pub chain_stats: Vec<ChainStats>,
}

/// SHA-256 over the window's dates and values.
pub fn data_digest(data: &IncidenceSeries) -> String {
    let mut h = Sha256::new();
    h.update(data.region.as_bytes());
    h.update(data.start_date.to_string().as_bytes());
    for v in &data.incidence {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl LogDensity for RenewalTarget {
    fn dim(&self) -> usize {
        RenewalTarget::dim(self)
    }
    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.log_density_grad(q, grad)
    }
}

fn initial_point(target: &RenewalTarget, data: &IncidenceSeries, rng: &mut impl Rng) -> Vec<f64> {
    let alpha = rng.random_range(-1.0..1.0);
    let beta = rng.random_range(-1.0..1.0);
    let (a, b) = (1.0 + f64::exp(alpha), 1.0 + f64::exp(beta));
    let mut q = vec![alpha, beta];
    for &d in target.latent_days() {
        let x = data.incidence[d];
        q.push((x * a / b).ln() + rng.random_range(-0.5..0.5));
    }
    q
}

/// Runs `config.n_chains` independent NUTS chains on the window.
///
/// Chain `c` draws all randomness from `Seed(rng_seed).child(c)` so results
/// do not depend on the number of chains or on thread scheduling.
pub fn sample_posterior(
    data: &IncidenceSeries,
    weights: &InfectivityWeights,
    config: &SamplerConfig,
    variant: Variant,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::SeriesTooShort { len: data.len(), min: 2 });
    }
    let target = RenewalTarget::new(data, weights, variant)?;
    if target.latent_days().is_empty() {
        return Err(Error::DegenerateWindow);
    }
    let settings = NutsSettings {
        n_warmup: config.n_warmup,
        n_samples: config.n_samples,
        target_accept: config.target_accept,
        max_depth: config.max_tree_depth,
        metric: config.metric,
    };
    let run = |c: usize| {
        let mut rng = Seed(config.rng_seed).child(c as u64).rng();
        let mut init = initial_point(&target, data, &mut rng);
        let mut grad = vec![0.0; init.len()];
        for _ in 0..100 {
            if target.log_density_grad(&init, &mut grad).is_finite() {
                break;
            }
            init = initial_point(&target, data, &mut rng);
        }
        let out = run_chain(&target, init, &settings, &mut rng);
        let states = out.draws.iter().map(|q| LatentState::from_slice(q)).collect();
        (states, out.stats)
    };
    let results = map_chains(config.n_chains, run);
    let (chains, chain_stats) = results.into_iter().unzip();
    Ok(PosteriorDraws {
        config: *config,
        region: data.region.clone(),
        start_date: data.start_date,
        n_days: data.len(),
        variant,
        data_digest: data_digest(data),
        latent_days: target.latent_days().to_vec(),
        chains,
        chain_stats,
    })
}

#[cfg(feature = "parallel")]
fn map_chains<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chains<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

#[derive(Serialize, Deserialize)]
struct ChainRecord {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    stats: ChainStats,
}

#[derive(Serialize, Deserialize)]
struct PosteriorFile {
    config: SamplerConfig,
    region: String,
    start_date: NaiveDate,
    n_days: usize,
    variant: Variant,
    data_digest: String,
    latent_days: Vec<usize>,
    chains: Vec<ChainRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Diagnostics>,
}

impl PosteriorDraws {
    /// The fitted window cut out of `series`, checked against the digest.
    pub fn window_of(&self, series: &IncidenceSeries) -> Result<IncidenceSeries> {
        let offset = (self.start_date - series.start_date).num_days();
        if offset < 0 {
            return Err(Error::InsufficientDateRange { needed: self.n_days, available: 0 });
        }
        let w = series.slice(offset as usize, self.n_days)?;
        if data_digest(&w) != self.data_digest {
            return Err(Error::invalid(format!(
                "series does not match the fitted window ({} from {})",
                self.region, self.start_date
            )));
        }
        Ok(w)
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatentState> {
        self.chains.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// R law of every retained draw, chain-major.
    pub fn r_laws(&self) -> Vec<RLawParams> {
        self.iter().map(|s| RLawParams::from_unconstrained(s.alpha, s.beta)).collect()
    }

    pub fn has_latents(&self) -> bool {
        self.iter().all(|s| s.log_i.len() == self.latent_days.len())
    }

    pub fn divergence_rate(&self) -> f64 {
        let div: usize = self.chain_stats.iter().map(|s| s.n_divergent).sum();
        div as f64 / self.len().max(1) as f64
    }

    fn scalar(&self, f: impl Fn(&LatentState) -> f64) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(&f).collect()).collect()
    }

    /// Split R-hat and ESS for alpha, beta, E[R] and every stored latent.
    pub fn diagnose(&self) -> Result<Diagnostics> {
        let mut params = vec![
            ("alpha".to_string(), self.scalar(|s| s.alpha)),
            ("beta".to_string(), self.scalar(|s| s.beta)),
            ("mean_r".to_string(), self.scalar(|s| s.mean_r())),
        ];
        if self.has_latents() {
            for (j, d) in self.latent_days.iter().enumerate() {
                params.push((format!("log_i[{d}]"), self.scalar(|s| s.log_i[j])));
            }
        }
        diagnose_params(&params)
    }

    pub fn write_json<W: Write>(&self, w: W, diagnostics: Option<&Diagnostics>) -> Result<()> {
        let file = PosteriorFile {
            config: self.config,
            region: self.region.clone(),
            start_date: self.start_date,
            n_days: self.n_days,
            variant: self.variant,
            data_digest: self.data_digest.clone(),
            latent_days: self.latent_days.clone(),
            chains: self
                .chains
                .iter()
                .zip(&self.chain_stats)
                .map(|(c, st)| ChainRecord {
                    alpha: c.iter().map(|s| s.alpha).collect(),
                    beta: c.iter().map(|s| s.beta).collect(),
                    stats: st.clone(),
                })
                .collect(),
            diagnostics: diagnostics.cloned(),
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    /// Latent draws as CSV: `chain,draw,log_i_<day>...`.
    pub fn write_latents_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.latent_days.iter().map(|d| format!("log_i_{d}")));
        out.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, s) in chain.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(s.log_i.iter().map(|v| format!("{v:?}")));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a posterior file; latents are filled from the sidecar if given,
    /// otherwise left empty.
    pub fn read_json<R: std::io::Read>(r: R, latents: Option<impl BufRead>) -> Result<(Self, Option<Diagnostics>)> {
        let file: PosteriorFile = serde_json::from_reader(r)?;
        if file.chains.len() < MIN_CHAINS {
            return Err(Error::invalid(format!("posterior file holds {} chains", file.chains.len())));
        }
        let n = file.chains[0].alpha.len();
        let mut chains: Vec<Vec<LatentState>> = Vec::with_capacity(file.chains.len());
        for c in &file.chains {
            if c.alpha.len() != n || c.beta.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: c.alpha.len().min(c.beta.len()) });
            }
            chains.push(
                c.alpha
                    .iter()
                    .zip(&c.beta)
                    .map(|(&alpha, &beta)| LatentState { alpha, beta, log_i: Vec::new() })
                    .collect(),
            );
        }
        if let Some(src) = latents {
            let mut rdr = csv::Reader::from_reader(src);
            let width = rdr.headers()?.len();
            if width != 2 + file.latent_days.len() {
                return Err(Error::DimensionMismatch { expected: 2 + file.latent_days.len(), got: width });
            }
            for (row, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let parse = |col: usize| -> Result<f64> {
                    rec[col].parse().map_err(|_| Error::MalformedRow {
                        row: row + 2,
                        column: format!("column {}", col + 1),
                        value: rec[col].to_string(),
                    })
                };
                let (c, i) = (parse(0)? as usize, parse(1)? as usize);
                let state = chains
                    .get_mut(c)
                    .and_then(|ch| ch.get_mut(i))
                    .ok_or_else(|| Error::invalid(format!("latent row {} out of range", row + 2)))?;
                state.log_i = (2..width).map(parse).collect::<Result<_>>()?;
            }
        }
        let chain_stats = file.chains.into_iter().map(|c| c.stats).collect();
        Ok((
            PosteriorDraws {
                config: file.config,
                region: file.region,
                start_date: file.start_date,
                n_days: file.n_days,
                variant: file.variant,
                data_digest: file.data_digest,
                latent_days: file.latent_days,
                chains,
                chain_stats,
            },
            file.diagnostics,
        ))
    }

    pub fn read_files(path: impl AsRef<Path>, latents: Option<&Path>) -> Result<(Self, Option<Diagnostics>)> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let l = match latents {
            Some(p) => Some(std::io::BufReader::new(std::fs::File::open(p)?)),
            None => None,
        };
        Self::read_json(f, l)
    }
}

/// Free-function form of [`PosteriorDraws::diagnose`].
pub fn diagnose(draws: &PosteriorDraws) -> Result<Diagnostics> {
    draws.diagnose()
}
