use std::path::PathBuf;

use anyhow::{bail, Result};
use hetr_core::interventions::{scenario_grid, write_reduction_table, InterventionKind};
use hetr_core::renewal::simulate_renewal;
use hetr_core::{IncidenceSeries, SimulationConfig};

use crate::config::{DEFAULT_LEVELS, DEFAULT_SEED_DAYS};
use crate::fit::{load_series, read_posterior, short_stem, weights};
use crate::Ctx;

fn parse_kind(s: &str) -> Result<InterventionKind, String> {
    match s {
        "cap" => Ok(InterventionKind::TailCap),
        "shrink" => Ok(InterventionKind::MeanShrink),
        other => other.parse().map_err(|e: hetr_core::Error| e.to_string()),
    }
}

#[derive(Debug, clap::Args)]
pub struct InterveneArgs {
    /// Posterior JSON written by `fit`; repeatable.
    #[arg(long, required = true)]
    posterior: Vec<PathBuf>,
    /// Series JSON files; each posterior is matched to the one it was fitted on.
    #[arg(long, required = true)]
    series: Vec<PathBuf>,
    /// tail_cap (cap) and/or mean_shrink (shrink).
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    kind: Vec<InterventionKind>,
    /// Stringency levels in (0, 1]; smaller is stricter.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    /// Forecast trajectories per scenario.
    #[arg(long)]
    draws: Option<usize>,
    /// Forecast days.
    #[arg(long)]
    horizon: Option<usize>,
    /// Last days of the fitted window that seed the forecast.
    #[arg(long)]
    seed_days: Option<usize>,
    /// Population fraction above which daily counts are redrawn.
    #[arg(long)]
    cap_fraction: Option<f64>,
    /// Disable the population cap.
    #[arg(long)]
    no_cap: bool,
    #[arg(long)]
    k: Option<usize>,
}

pub fn run(ctx: &Ctx, a: InterveneArgs) -> Result<()> {
    let series: Vec<IncidenceSeries> = a.series.iter().map(|p| load_series(p)).collect::<Result<_>>()?;
    let w = weights(ctx, a.k)?;
    let icfg = &ctx.cfg.interventions;
    let kinds = if !a.kind.is_empty() {
        a.kind.clone()
    } else if !icfg.kinds.is_empty() {
        icfg.kinds.clone()
    } else {
        vec![InterventionKind::TailCap, InterventionKind::MeanShrink]
    };
    let levels = if !a.levels.is_empty() {
        a.levels.clone()
    } else if !icfg.levels.is_empty() {
        icfg.levels.clone()
    } else {
        DEFAULT_LEVELS.to_vec()
    };
    let sim = &ctx.cfg.simulation;

    for p in &a.posterior {
        let (draws, _) = read_posterior(p)?;
        let Some(window) = series.iter().find_map(|s| (s.region == draws.region).then(|| draws.window_of(s).ok()).flatten())
        else {
            bail!("no --series matches the window of {} ({} from {})", p.display(), draws.region, draws.start_date);
        };
        let seed_days = a.seed_days.or(sim.seed_days).unwrap_or(DEFAULT_SEED_DAYS).min(window.len());
        let seed_window = window.tail(seed_days)?;
        let cfg = SimulationConfig {
            horizon: a.horizon.or(sim.horizon).unwrap_or(30),
            n_draws: a.draws.or(sim.draws).unwrap_or(1000),
            cap_fraction: ctx.cfg.cap_fraction(a.cap_fraction, a.no_cap),
            seed: ctx.window_seed(&window).child_str("intervene").0,
        };
        let grid = scenario_grid(&draws, &w, &kinds, &levels, &seed_window, &cfg)?;
        // Same seed and laws as the grid's baseline, kept for envelope figures.
        let laws = draws.r_laws();
        let baseline = simulate_renewal(&laws, &w, &seed_window, &cfg, |j, rng| laws[j].sample(rng))?;

        let stem = short_stem(p);
        let rows = vec![(draws.region.clone(), grid)];
        ctx.out.write_with(&format!("scenarios_{stem}.csv"), |out| Ok(write_reduction_table(&rows, out)?))?;
        let grid = &rows[0].1;
        ctx.out.write_with(&format!("scenario_series_{stem}.csv"), |out| Ok(grid.write_series_csv(out)?))?;
        ctx.out.write_json(&format!("scenarios_{stem}.json"), &serde_json::json!({
            "region": draws.region,
            "start_date": draws.start_date,
            "simulation": cfg,
            "grid": grid,
        }))?;
        ctx.out.write_with(&format!("baseline_{stem}.ensemble.csv"), |out| Ok(baseline.write_csv(out)?))?;

        println!("{} from {} (baseline day-{} mean {:.1}):", draws.region, draws.start_date, cfg.horizon, grid.baseline_mean.last().copied().unwrap_or(0.0));
        for c in &grid.cells {
            println!("  {:<18} reduction {:6.1}% (median {:6.1}%)", c.spec.label(), 100.0 * c.reduction, 100.0 * c.reduction_median);
        }
    }
    Ok(())
}
