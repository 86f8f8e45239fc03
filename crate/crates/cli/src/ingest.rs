use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use hetr_core::ingest::{parse_cumulative_csv, read_population_table, rolling_average, to_incidence};

use crate::config::{slug, DEFAULT_SMOOTHING};
use crate::Ctx;

#[derive(Debug, clap::Args)]
pub struct IngestArgs {
    /// Wide cumulative-count CSV. Repeat to search several tables in order
    /// (for example the global table, then the US one).
    #[arg(long, required = true)]
    csv: Vec<PathBuf>,
    /// Region as named in the CSV label columns. Repeatable; defaults to the
    /// config's region list.
    #[arg(long)]
    region: Vec<String>,
    /// Population of the single region given with --region.
    #[arg(long)]
    population: Option<u64>,
    /// `region,population` CSV.
    #[arg(long)]
    population_table: Option<PathBuf>,
    /// Trailing rolling-average length in days; 1 keeps raw counts.
    #[arg(long)]
    smooth: Option<usize>,
}

pub fn run(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let regions = if a.region.is_empty() { ctx.cfg.regions.clone() } else { a.region.clone() };
    if regions.is_empty() {
        bail!("no regions: pass --region or list them in the config");
    }
    if a.population.is_some() && regions.len() != 1 {
        bail!("--population applies to exactly one region; use --population-table for several");
    }
    let tables: Vec<String> = a
        .csv
        .iter()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<_>>()?;
    let populations = match a.population_table.as_ref().or(ctx.cfg.population_table.as_ref()) {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            read_population_table(&text)?
        }
        None => Default::default(),
    };
    let smooth = a.smooth.or(ctx.cfg.smoothing).unwrap_or(DEFAULT_SMOOTHING);

    for region in &regions {
        let mut first_err = None;
        let mut found = None;
        for t in &tables {
            match parse_cumulative_csv(t, region) {
                Ok(c) => {
                    found = Some(c);
                    break;
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let Some(cum) = found else {
            return Err(first_err.expect("at least one table").into());
        };
        let mut series = rolling_average(&to_incidence(&cum)?, smooth)?;
        match a.population.or_else(|| populations.get(region).copied()) {
            Some(p) => series = series.with_population(p),
            None => eprintln!("warning: no population for {region}; capped simulation will refuse this series"),
        }
        let name = format!("{}.json", slug(region));
        let path = ctx.out.write_bytes(&name, series.to_json()?.as_bytes())?;
        println!("{}: {} days from {}", path.display(), series.len(), series.start_date);
    }
    Ok(())
}
