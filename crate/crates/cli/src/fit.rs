use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hetr_core::evaluation::{envelope_coverage, predictive_ordinates, write_metrics_csv, Envelope, FitMetrics, MetricsRow};
use hetr_core::inference::diagnostics::{MIN_NEFF_FRACTION, RHAT_THRESHOLD};
use hetr_core::inference::{mean_r_interval, sample_posterior, Diagnostics, PosteriorDraws, SamplerConfig, Variant};
use hetr_core::renewal::simulate_renewal;
use hetr_core::{IncidenceSeries, InfectivityWeights, SimulationConfig};
use serde::Serialize;

use crate::config::{slug, SamplerArgs, WindowArgs, DEFAULT_SEED_DAYS};
use crate::{Ctx, NotConverged};

/// Divergence rate above which `fit` prints a warning.
const DIVERGENCE_WARNING: f64 = 0.2;

pub fn load_series(path: &Path) -> Result<IncidenceSeries> {
    IncidenceSeries::read_json(path).with_context(|| format!("reading series {}", path.display()))
}

pub fn weights(ctx: &Ctx, k: Option<usize>) -> Result<InfectivityWeights> {
    Ok(InfectivityWeights::linear(ctx.cfg.k(k))?)
}

pub fn posterior_stem(region: &str, window: Option<usize>, variant: Variant) -> String {
    let w = window.map(|i| format!("_w{i}")).unwrap_or_default();
    format!("posterior_{}{w}_{}", slug(region), variant.as_str())
}

/// `x.json` → `x.latents.csv`.
pub fn latents_path(posterior: &Path) -> PathBuf {
    posterior.with_extension("latents.csv")
}

/// Reads a posterior file plus its latent sidecar when one exists.
pub fn read_posterior(path: &Path) -> Result<(PosteriorDraws, Option<Diagnostics>)> {
    let lat = latents_path(path);
    let lat = lat.exists().then_some(lat);
    PosteriorDraws::read_files(path, lat.as_deref()).with_context(|| format!("reading posterior {}", path.display()))
}

/// File stem of a posterior without the `posterior_` prefix.
pub fn short_stem(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("posterior_").map(str::to_string).unwrap_or(stem)
}

fn fit_window(ctx: &Ctx, window: &IncidenceSeries, w: &InfectivityWeights, base: &SamplerConfig, v: Variant) -> Result<PosteriorDraws> {
    let cfg = SamplerConfig { rng_seed: ctx.window_seed(window).child_str("fit").0, ..*base };
    Ok(sample_posterior(window, w, &cfg, v)?)
}

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Series JSON written by `ingest`.
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Model variant; repeat to fit several.
    #[arg(long, default_value = "multiplicative")]
    variant: Vec<Variant>,
    /// Lag days of the infectivity profile.
    #[arg(long)]
    k: Option<usize>,
    /// Also write the latent totals, which `evaluate --posterior` needs.
    #[arg(long)]
    latents: bool,
}

pub fn run_fit(ctx: &Ctx, a: FitArgs) -> Result<()> {
    let series = load_series(&a.series)?;
    let (window, idx) = a.window.select(&ctx.cfg, &series)?;
    let w = weights(ctx, a.k)?;
    let base = a.sampler.resolve(&ctx.cfg, ctx.seed);
    base.validate()?;
    for &v in &a.variant {
        let stem = posterior_stem(&window.region, idx, v);
        let json = format!("{stem}.json");
        if ctx.out.exists(&json)? && !ctx.force {
            bail!("{} exists; pass --force to replace it", ctx.out.path(&json)?.display());
        }
        let draws = fit_window(ctx, &window, &w, &base, v)?;
        let diag = draws.diagnose()?;
        let path = ctx.out.write_with(&json, |out| Ok(draws.write_json(out, Some(&diag))?))?;
        if a.latents {
            ctx.out.write_with(&format!("{stem}.latents.csv"), |out| Ok(draws.write_latents_csv(out)?))?;
        }
        let (lo, hi) = mean_r_interval(&draws, 0.9);
        let m = draws.iter().map(|s| s.mean_r()).sum::<f64>() / draws.len() as f64;
        println!(
            "{}: {} x {} draws, E[R] {m:.3} (90% CrI {lo:.3} to {hi:.3}), max R-hat {:.3}, min n_eff {:.0}, converged {}",
            path.display(),
            draws.n_chains(),
            draws.draws_per_chain(),
            diag.max_rhat(),
            diag.min_neff(),
            diag.converged
        );
        let rate = draws.divergence_rate();
        if rate > DIVERGENCE_WARNING {
            eprintln!("warning: {:.0}% of post-warmup transitions diverged", 100.0 * rate);
        }
    }
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct DiagnoseArgs {
    /// Posterior JSON written by `fit`; repeatable.
    #[arg(long, required = true)]
    posterior: Vec<PathBuf>,
}

pub fn run_diagnose(ctx: &Ctx, a: DiagnoseArgs) -> Result<()> {
    let mut failed = Vec::new();
    for p in &a.posterior {
        let (draws, _) = read_posterior(p)?;
        let d = draws.diagnose()?;
        ctx.out.write_json(&format!("diagnostics_{}.json", short_stem(p)), &d)?;
        println!(
            "{}: max R-hat {:.3}, min n_eff {:.0} of {} ({}), divergences {:.1}%",
            p.display(),
            d.max_rhat(),
            d.min_neff(),
            d.total_draws,
            if d.converged { "converged" } else { "NOT converged" },
            100.0 * draws.divergence_rate()
        );
        for q in d.params.iter().filter(|q| !(q.rhat <= RHAT_THRESHOLD && q.n_eff >= MIN_NEFF_FRACTION * d.total_draws as f64)) {
            println!("  {}: R-hat {:.3}, n_eff {:.0}", q.name, q.rhat, q.n_eff);
        }
        if !d.converged {
            failed.push(p.display().to_string());
        }
    }
    if !failed.is_empty() {
        return Err(NotConverged(failed.join(", ")).into());
    }
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Series JSON the posteriors were fitted on.
    #[arg(long)]
    series: PathBuf,
    /// Score stored posteriors (with latent sidecars) instead of fitting.
    #[arg(long)]
    posterior: Vec<PathBuf>,
    /// Variants to fit and score when no posterior is given; repeatable.
    #[arg(long)]
    variant: Vec<Variant>,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    k: Option<usize>,
    /// Also check whether the following window stays inside the forecast envelope.
    #[arg(long)]
    coverage: bool,
    /// Quantile band `lo,hi` for --coverage instead of the min-max envelope.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    band: Option<Vec<f64>>,
    /// Forecast trajectories for --coverage.
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Serialize)]
struct Scored {
    variant: Variant,
    region: String,
    start_date: String,
    metrics: FitMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    covered: Option<bool>,
}

pub fn run_evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let series = load_series(&a.series)?;
    let w = weights(ctx, a.k)?;
    let mut fitted: Vec<(PosteriorDraws, IncidenceSeries)> = Vec::new();
    if a.posterior.is_empty() {
        let (window, _) = a.window.select(&ctx.cfg, &series)?;
        let base = a.sampler.resolve(&ctx.cfg, ctx.seed);
        base.validate()?;
        let variants = if a.variant.is_empty() { vec![Variant::Multiplicative, Variant::Additive] } else { a.variant.clone() };
        for v in variants {
            fitted.push((fit_window(ctx, &window, &w, &base, v)?, window.clone()));
        }
    } else {
        for p in &a.posterior {
            let (draws, _) = read_posterior(p)?;
            if !draws.has_latents() {
                bail!("{} has no latent sidecar; refit with --latents", p.display());
            }
            let window = draws.window_of(&series)?;
            fitted.push((draws, window));
        }
    }

    let envelope = match a.band.as_deref() {
        Some([lo, hi]) if lo < hi => Envelope::Band { lo: *lo, hi: *hi },
        Some(_) => bail!("--band needs lo,hi with lo < hi"),
        None => Envelope::MinMax,
    };
    let mut scored = Vec::new();
    for (draws, window) in &fitted {
        let metrics = predictive_ordinates(draws, window, &w)?;
        let covered = if a.coverage { Some(covers_next(ctx, &series, window, draws, &w, envelope, a.draws)?) } else { None };
        println!(
            "{} {} {}: LPPD {:.3}, LPML {:.3}, mean log-lik {:.3}{}",
            window.region,
            window.start_date,
            draws.variant.as_str(),
            metrics.lppd,
            metrics.lpml,
            metrics.avg_loglik,
            covered.map(|c| format!(", next window covered: {c}")).unwrap_or_default()
        );
        scored.push(Scored {
            variant: draws.variant,
            region: window.region.clone(),
            start_date: window.start_date.to_string(),
            metrics,
            covered,
        });
    }
    let rows: Vec<MetricsRow> = scored
        .iter()
        .map(|s| MetricsRow::new(s.variant.as_str(), &s.region, &s.start_date, &s.metrics))
        .collect();
    ctx.out.write_json("metrics.json", &scored)?;
    ctx.out.write_with("metrics.csv", |out| Ok(write_metrics_csv(&rows, out)?))?;
    Ok(())
}

/// Simulates the days after `window` from its posterior and checks the
/// observed continuation against the envelope.
fn covers_next(
    ctx: &Ctx,
    series: &IncidenceSeries,
    window: &IncidenceSeries,
    draws: &PosteriorDraws,
    w: &InfectivityWeights,
    envelope: Envelope,
    n_draws: Option<usize>,
) -> Result<bool> {
    let offset = (window.start_date - series.start_date).num_days() as usize + window.len();
    let next = series
        .slice(offset, window.len())
        .context("--coverage needs the window that follows the fitted one")?;
    let sim = &ctx.cfg.simulation;
    let seed_days = sim.seed_days.unwrap_or(DEFAULT_SEED_DAYS).min(window.len());
    let cfg = SimulationConfig {
        horizon: next.len(),
        n_draws: n_draws.or(sim.draws).unwrap_or(1000),
        cap_fraction: ctx.cfg.cap_fraction(None, false),
        seed: ctx.window_seed(window).child_str("coverage").0,
    };
    let laws = draws.r_laws();
    let e = simulate_renewal(&laws, w, &window.tail(seed_days)?, &cfg, |j, rng| laws[j].sample(rng))?;
    Ok(envelope_coverage(&[e], &[next], envelope)?.covered[0])
}
