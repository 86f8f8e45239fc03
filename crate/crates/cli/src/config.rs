use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use hetr_core::inference::{MetricKind, SamplerConfig};
use hetr_core::interventions::InterventionKind;
use serde::{Deserialize, Serialize};

/// Everything a run needs besides per-command inputs. Loaded from a JSON
/// file, then overridden by command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub population_table: Option<PathBuf>,
    pub regions: Vec<String>,
    pub smoothing: Option<usize>,
    pub k: Option<usize>,
    pub window: WindowConfig,
    pub sampler: SamplerSection,
    pub simulation: SimulationSection,
    pub interventions: InterventionSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub start: Option<NaiveDate>,
    pub len: Option<usize>,
    pub count: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub target_accept: Option<f64>,
    pub max_tree_depth: Option<usize>,
    pub metric: Option<MetricKind>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: Option<usize>,
    pub draws: Option<usize>,
    /// `null` in the file keeps the default; use a negative value to disable.
    pub cap_fraction: Option<f64>,
    pub seed_days: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionSection {
    pub kinds: Vec<InterventionKind>,
    pub levels: Vec<f64>,
}

pub const DEFAULT_SMOOTHING: usize = 7;
pub const DEFAULT_WINDOW_LEN: usize = 30;
pub const DEFAULT_WINDOW_COUNT: usize = 7;
pub const DEFAULT_SEED_DAYS: usize = 7;
pub const DEFAULT_LEVELS: [f64; 3] = [0.6, 0.9, 0.95];

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(p) = &cfg.population_table {
            if !p.exists() {
                anyhow::bail!("population table {} does not exist", p.display());
            }
        }
        Ok(cfg)
    }

    /// Seed precedence: flag or HETR_SEED, then the config file, then 0.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    pub fn k(&self, flag: Option<usize>) -> usize {
        flag.or(self.k).unwrap_or(hetr_core::renewal::DEFAULT_K)
    }

    pub fn cap_fraction(&self, flag: Option<f64>, disabled: bool) -> Option<f64> {
        if disabled {
            return None;
        }
        match flag.or(self.simulation.cap_fraction) {
            Some(f) if f < 0.0 => None,
            Some(f) => Some(f),
            None => Some(0.01),
        }
    }
}

/// Sampler flags shared by `fit` and `evaluate`.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Mass-matrix shape: block (dense over alpha and beta), dense or diag.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    match s {
        "dense" => Ok(MetricKind::Dense),
        "block" => Ok(MetricKind::Block(2)),
        "diag" | "diagonal" => Ok(MetricKind::Diag),
        other => Err(format!("unknown metric `{other}` (block | dense | diag)")),
    }
}

impl SamplerArgs {
    pub fn resolve(&self, cfg: &RunConfig, seed: u64) -> SamplerConfig {
        let d = SamplerConfig::default();
        let s = &cfg.sampler;
        SamplerConfig {
            n_chains: self.chains.or(s.chains).unwrap_or(d.n_chains),
            n_warmup: self.warmup.or(s.warmup).unwrap_or(d.n_warmup),
            n_samples: self.samples.or(s.samples).unwrap_or(d.n_samples),
            target_accept: self.target_accept.or(s.target_accept).unwrap_or(d.target_accept),
            max_tree_depth: self.max_depth.or(s.max_tree_depth).unwrap_or(d.max_tree_depth),
            metric: self.metric.or(s.metric).unwrap_or(d.metric),
            rng_seed: seed,
        }
    }
}

/// Window selection shared by the commands that read a series.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct WindowArgs {
    /// Index of the fitting window; omit to use the whole series.
    #[arg(long)]
    pub window: Option<usize>,
    /// First day of window 0 (defaults to the series start).
    #[arg(long)]
    pub window_start: Option<NaiveDate>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub n_windows: Option<usize>,
}

impl WindowArgs {
    pub fn select(
        &self,
        cfg: &RunConfig,
        series: &hetr_core::IncidenceSeries,
    ) -> Result<(hetr_core::IncidenceSeries, Option<usize>)> {
        let Some(idx) = self.window else {
            return Ok((series.clone(), None));
        };
        let start = self.window_start.or(cfg.window.start).unwrap_or(series.start_date);
        let len = self.window_len.or(cfg.window.len).unwrap_or(DEFAULT_WINDOW_LEN);
        let count = self.n_windows.or(cfg.window.count).unwrap_or(DEFAULT_WINDOW_COUNT).max(idx + 1);
        let windows = available_windows(series, start, len, count)?;
        let w = windows
            .into_iter()
            .nth(idx)
            .with_context(|| format!("window {idx} is outside the series"))?;
        Ok((w, Some(idx)))
    }
}

/// As many of the requested windows as the series covers (at least one).
pub fn available_windows(
    series: &hetr_core::IncidenceSeries,
    start: NaiveDate,
    len: usize,
    count: usize,
) -> Result<Vec<hetr_core::IncidenceSeries>> {
    let offset = (start - series.start_date).num_days().max(0) as usize;
    let fit = series.len().saturating_sub(offset) / len.max(1);
    let n = count.min(fit).max(1);
    Ok(hetr_core::ingest::split_windows(series, start, len, n)?)
}

/// Filesystem-safe lowercase name for a region.
pub fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let t = out.trim_matches('_');
    if t.is_empty() { "series".to_string() } else { t.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("Korea, South"), "korea_south");
        assert_eq!(slug("United Kingdom"), "united_kingdom");
        assert_eq!(slug("../"), "series");
    }

    #[test]
    fn precedence() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 5, "sampler": {"chains": 3}}"#).unwrap();
        assert_eq!(cfg.seed(None), 5);
        assert_eq!(cfg.seed(Some(9)), 9);
        let s = SamplerArgs { chains: None, warmup: Some(10), ..Default::default() }.resolve(&cfg, 1);
        assert_eq!((s.n_chains, s.n_warmup, s.n_samples, s.rng_seed), (3, 10, 1000, 1));
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
    }
}
