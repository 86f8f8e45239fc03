use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hetr_core::inference::{ml_constant_r, r_law_summary, PosteriorDraws};
use hetr_core::stats::mean;
use hetr_core::{IncidenceSeries, TrajectoryEnsemble};

use crate::config::slug;
use crate::fit::{load_series, read_posterior, weights};
use crate::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// Per-day quantile band, median and mean of a stored ensemble.
    Envelope,
}

#[derive(Debug, clap::Args)]
pub struct ReportArgs {
    /// 1: Bayesian R against the constant-R estimate; 2: mean (q95) of R;
    /// 3: the scenario reduction tables stacked.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    table: Option<u8>,
    #[arg(long, value_enum)]
    figure: Option<Figure>,
    /// Posterior JSON files (tables 1 and 2).
    #[arg(long)]
    posterior: Vec<PathBuf>,
    /// Series JSON files (table 1).
    #[arg(long)]
    series: Vec<PathBuf>,
    /// `scenarios_*.csv` files (table 3); default: every one in the output directory.
    #[arg(long)]
    scenarios: Vec<PathBuf>,
    /// Ensemble CSV for the envelope figure.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Region whose stored baseline ensemble is plotted when --ensemble is absent.
    #[arg(long)]
    region: Option<String>,
    /// Band quantiles of the envelope figure.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.5, 0.95])]
    probs: Vec<f64>,
    /// Credible level of table 1.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    k: Option<usize>,
}

pub fn run(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    match (a.table, a.figure) {
        (Some(1), None) => table1(ctx, &a),
        (Some(2), None) => table2(ctx, &a),
        (Some(_), None) => table3(ctx, &a),
        (None, Some(Figure::Envelope)) => envelope(ctx, &a),
        _ => bail!("pass exactly one of --table or --figure"),
    }
}

fn posteriors(a: &ReportArgs) -> Result<Vec<PosteriorDraws>> {
    if a.posterior.is_empty() {
        bail!("--posterior is required for this table");
    }
    a.posterior.iter().map(|p| Ok(read_posterior(p)?.0)).collect()
}

/// Mean and standard deviation of R mixed over the posterior draws.
fn mixture_moments(draws: &PosteriorDraws) -> (f64, f64) {
    let laws = draws.r_laws();
    let means: Vec<f64> = laws.iter().map(|l| l.mean()).collect();
    let m = mean(&means);
    let within = mean(&laws.iter().map(|l| l.shape / (l.rate * l.rate)).collect::<Vec<_>>());
    let between = mean(&means.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>());
    (m, (within + between).sqrt())
}

fn table1(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        bail!("--level must lie in (0, 1)");
    }
    let series: Vec<IncidenceSeries> = a.series.iter().map(|p| load_series(p)).collect::<Result<_>>()?;
    let w = weights(ctx, a.k)?;
    let tail = (1.0 - a.level) / 2.0;
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record([
        "region", "start_date", "variant", "bayes_mean", "bayes_sd", "bayes_lo", "bayes_hi", "ml_r", "ml_lo", "ml_hi",
        "width_ratio",
    ])?;
    for draws in posteriors(a)? {
        let window = series
            .iter()
            .find_map(|s| (s.region == draws.region).then(|| draws.window_of(s).ok()).flatten())
            .with_context(|| format!("no --series matches {} from {}", draws.region, draws.start_date))?;
        let (m, sd) = mixture_moments(&draws);
        let s = r_law_summary(&draws, &[tail, 1.0 - tail], ctx.seed);
        let (lo, hi) = (s.quantiles[0], s.quantiles[1]);
        let ml = ml_constant_r(&window, &w)?;
        let ratio = (ml.ci_high - ml.ci_low) / (hi - lo);
        println!(
            "{} {}: Bayes {m:.2} +- {sd:.2} [{lo:.2}, {hi:.2}], ML {:.2} [{:.2}, {:.2}], ML/Bayes width {ratio:.3}",
            draws.region, draws.start_date, ml.r_hat, ml.ci_low, ml.ci_high
        );
        out.write_record([
            draws.region.clone(),
            draws.start_date.to_string(),
            draws.variant.as_str().to_string(),
            m.to_string(),
            sd.to_string(),
            lo.to_string(),
            hi.to_string(),
            ml.r_hat.to_string(),
            ml.ci_low.to_string(),
            ml.ci_high.to_string(),
            ratio.to_string(),
        ])?;
    }
    ctx.out.write_bytes("table1.csv", &out.into_inner()?)?;
    Ok(())
}

fn table2(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["region", "start_date", "variant", "mean", "q95", "cell"])?;
    for draws in posteriors(a)? {
        let m = mixture_moments(&draws).0;
        let q95 = r_law_summary(&draws, &[0.95], ctx.seed).quantiles[0];
        let cell = format!("{m:.1} ({q95:.1})");
        println!("{} {}: {cell}", draws.region, draws.start_date);
        out.write_record([
            draws.region.clone(),
            draws.start_date.to_string(),
            draws.variant.as_str().to_string(),
            m.to_string(),
            q95.to_string(),
            cell,
        ])?;
    }
    ctx.out.write_bytes("table2.csv", &out.into_inner()?)?;
    Ok(())
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("scenarios_") && n.ends_with(".csv"))
        })
        .collect();
    v.sort();
    Ok(v)
}

fn table3(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let files = if a.scenarios.is_empty() { scenario_files(ctx.out.root())? } else { a.scenarios.clone() };
    if files.is_empty() {
        bail!("no scenario tables found; run `intervene` first or pass --scenarios");
    }
    let mut header: Option<csv::StringRecord> = None;
    let mut out = csv::Writer::from_writer(Vec::new());
    for f in &files {
        let mut r = csv::Reader::from_path(f).with_context(|| format!("reading {}", f.display()))?;
        let h = r.headers()?.clone();
        match &header {
            None => {
                out.write_record(&h)?;
                header = Some(h);
            }
            Some(first) if *first != h => bail!("{} has columns that differ from {}", f.display(), files[0].display()),
            Some(_) => {}
        }
        for rec in r.records() {
            out.write_record(&rec?)?;
        }
    }
    let path = ctx.out.write_bytes("table3.csv", &out.into_inner()?)?;
    println!("{}: {} scenario tables", path.display(), files.len());
    Ok(())
}

fn find_baseline(dir: &Path, region: &str) -> Result<PathBuf> {
    let prefix = format!("baseline_{}", slug(region));
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(".ensemble.csv"))
        })
        .collect();
    v.sort();
    v.into_iter()
        .next()
        .with_context(|| format!("no {prefix}*.ensemble.csv in {}; run `intervene` or pass --ensemble", dir.display()))
}

fn envelope(ctx: &Ctx, a: &ReportArgs) -> Result<()> {
    let (path, name) = match (&a.ensemble, &a.region) {
        (Some(p), r) => {
            let stem = p.file_name().and_then(|n| n.to_str()).unwrap_or("ensemble");
            let stem = stem.trim_end_matches(".csv").trim_end_matches(".ensemble");
            (p.clone(), r.as_deref().map(slug).unwrap_or_else(|| slug(stem)))
        }
        (None, Some(r)) => (find_baseline(ctx.out.root(), r)?, slug(r)),
        (None, None) => bail!("pass --ensemble or --region"),
    };
    let file = std::fs::File::open(&path).with_context(|| format!("reading {}", path.display()))?;
    let e = TrajectoryEnsemble::read_csv(file)?;
    let mut probs = a.probs.clone();
    probs.sort_by(|x, y| x.total_cmp(y));
    let q = e.quantile_envelope(&probs)?;
    let means = e.mean_by_day();

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["day".to_string(), "mean".to_string()];
    header.extend(probs.iter().map(|p| format!("q{p}")));
    csv_out.write_record(&header)?;
    for (d, row) in q.values.iter().enumerate() {
        let mut rec = vec![(d + 1).to_string(), means[d].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        csv_out.write_record(&rec)?;
    }
    ctx.out.write_bytes(&format!("envelope_{name}.csv"), &csv_out.into_inner()?)?;
    let svg = envelope_svg(&name, &probs, &q.values, &means);
    let p = ctx.out.write_bytes(&format!("envelope_{name}.svg"), svg.as_bytes())?;
    println!("{}: {} trajectories over {} days", p.display(), e.len(), e.horizon());
    Ok(())
}

/// Band between the outermost quantiles, the middle quantile as a solid
/// line, and the mean dashed.
fn envelope_svg(title: &str, probs: &[f64], q: &[Vec<f64>], means: &[f64]) -> String {
    let (w, h, pad) = (720.0, 420.0, 56.0);
    let days = q.len().max(2);
    let ymax = q
        .iter()
        .flatten()
        .chain(means)
        .fold(1.0f64, |m, &v| m.max(v))
        * 1.05;
    let x = |d: usize| pad + (w - 2.0 * pad) * d as f64 / (days - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v / ymax;
    let line = |vals: &mut dyn Iterator<Item = (usize, f64)>| {
        vals.map(|(d, v)| format!("{:.1},{:.1}", x(d), y(v))).collect::<Vec<_>>().join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-size="14">{title}: daily incidence</text>"#);
    let last = probs.len() - 1;
    if last > 0 {
        let upper = line(&mut q.iter().enumerate().map(|(d, r)| (d, r[last])));
        let lower = line(&mut q.iter().enumerate().rev().map(|(d, r)| (d, r[0])));
        let _ = writeln!(s, r##"<polygon points="{upper} {lower}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##);
    }
    let mid = line(&mut q.iter().enumerate().map(|(d, r)| (d, r[last / 2])));
    let _ = writeln!(s, r##"<polyline points="{mid}" fill="none" stroke="#08519c" stroke-width="2"/>"##);
    let mean_pts = line(&mut means.iter().copied().enumerate());
    let _ = writeln!(s, r##"<polyline points="{mean_pts}" fill="none" stroke="#d94801" stroke-width="1.5" stroke-dasharray="5,3"/>"##);

    // Axes with five ticks each.
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - pad, h - pad);
    let _ = writeln!(s, r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#, h - pad);
    for i in 0..=4 {
        let d = (days - 1) * i / 4;
        let v = ymax * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x(d), h - pad + 18.0, d + 1);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.0}</text>"#, pad - 6.0, y(v) + 4.0, v);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">day</text>"#, w / 2.0, h - 12.0);
    let legend = format!(
        "band q{} to q{}, solid q{}, dashed mean",
        probs[0], probs[last], probs[last / 2]
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="end">{legend}</text>"#, w - pad);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_enough() {
        let q = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![3.0, 5.0, 9.0]];
        let s = envelope_svg("test", &[0.05, 0.5, 0.95], &q, &[2.0, 4.0, 5.5]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("<polygon"));
    }
}
