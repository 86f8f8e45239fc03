//! Tail-capping and mean-shrinking interventions on the fitted law of R.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::IncidenceSeries;
use crate::inference::PosteriorDraws;
use crate::renewal::{simulate_renewal, InfectivityWeights, RLawParams, SimulationConfig, TrajectoryEnsemble};
use crate::stats::{mean, quantiles};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    /// Replace R by min(R, Q_level).
    TailCap,
    /// Multiply the Gamma shape by the level.
    MeanShrink,
}

impl InterventionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InterventionKind::TailCap => "tail_cap",
            InterventionKind::MeanShrink => "mean_shrink",
        }
    }
}

impl std::str::FromStr for InterventionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail_cap" | "tail-cap" => Ok(InterventionKind::TailCap),
            "mean_shrink" | "mean-shrink" => Ok(InterventionKind::MeanShrink),
            other => Err(Error::invalid(format!("unknown intervention `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    pub level: f64,
}

impl InterventionSpec {
    pub fn new(kind: InterventionKind, level: f64) -> Result<Self> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::invalid(format!("intervention level {level} outside (0, 1]")));
        }
        Ok(InterventionSpec { kind, level })
    }

    pub fn identity() -> Self {
        InterventionSpec { kind: InterventionKind::TailCap, level: 1.0 }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.kind.as_str(), self.level)
    }

    /// Precomputes the transformed law (the cap quantile, or the shrunk shape).
    pub fn apply(&self, params: RLawParams) -> IntervenedLaw {
        match self.kind {
            InterventionKind::TailCap => IntervenedLaw {
                law: params,
                cap: if self.level >= 1.0 { f64::INFINITY } else { params.quantile(self.level) },
            },
            InterventionKind::MeanShrink => IntervenedLaw {
                law: RLawParams { shape: params.shape * self.level, rate: params.rate },
                cap: f64::INFINITY,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervenedLaw {
    pub law: RLawParams,
    pub cap: f64,
}

impl IntervenedLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.law.sample(rng).min(self.cap)
    }
}

/// One R drawn from the intervened law.
pub fn draw_intervened_r<R: Rng + ?Sized>(params: RLawParams, spec: InterventionSpec, rng: &mut R) -> f64 {
    spec.apply(params).sample(rng)
}

fn final_day_stats(e: &TrajectoryEnsemble) -> (f64, f64) {
    let v = e.day_values(e.horizon() - 1);
    (mean(&v), quantiles(&v, &[0.5])[0])
}

fn reduction(base: f64, new: f64) -> f64 {
    if base == 0.0 { 0.0 } else { 1.0 - new / base }
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub spec: InterventionSpec,
    pub baseline: TrajectoryEnsemble,
    pub intervened: TrajectoryEnsemble,
    /// 1 - mean(intervened) / mean(baseline) on the last simulated day.
    pub reduction: f64,
    /// Same with medians.
    pub reduction_median: f64,
}

fn simulate_with(
    laws: &[RLawParams],
    spec: InterventionSpec,
    weights: &InfectivityWeights,
    seed_window: &IncidenceSeries,
    cfg: &SimulationConfig,
) -> Result<TrajectoryEnsemble> {
    let transformed: Vec<IntervenedLaw> = laws.iter().map(|&l| spec.apply(l)).collect();
    simulate_renewal(laws, weights, seed_window, cfg, |j, rng| transformed[j].sample(rng))
}

/// Baseline and intervened forward ensembles from the posterior laws of R.
///
/// Both ensembles use the same seed, so each trajectory picks the same
/// posterior draw and consumes the same random streams; only the R draws
/// pass through the intervention.
pub fn simulate_scenario(
    draws: &PosteriorDraws,
    weights: &InfectivityWeights,
    spec: InterventionSpec,
    seed_window: &IncidenceSeries,
    cfg: &SimulationConfig,
) -> Result<ScenarioResult> {
    let laws = draws.r_laws();
    let baseline = simulate_with(&laws, InterventionSpec::identity(), weights, seed_window, cfg)?;
    let intervened = simulate_with(&laws, spec, weights, seed_window, cfg)?;
    let (bm, bmed) = final_day_stats(&baseline);
    let (im, imed) = final_day_stats(&intervened);
    Ok(ScenarioResult {
        spec,
        baseline,
        intervened,
        reduction: reduction(bm, im),
        reduction_median: reduction(bmed, imed),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub spec: InterventionSpec,
    pub reduction: f64,
    pub reduction_median: f64,
    pub mean_trajectory: Vec<f64>,
    pub q95_trajectory: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub baseline_mean: Vec<f64>,
    pub baseline_q95: Vec<f64>,
    pub cells: Vec<GridCell>,
}

fn q95_by_day(e: &TrajectoryEnsemble) -> Vec<f64> {
    (0..e.horizon()).map(|d| quantiles(&e.day_values(d), &[0.95])[0]).collect()
}

/// Full factorial of `kinds` × `levels`. Every cell reuses the baseline's
/// seed, so cells differ only by the intervention.
pub fn scenario_grid(
    draws: &PosteriorDraws,
    weights: &InfectivityWeights,
    kinds: &[InterventionKind],
    levels: &[f64],
    seed_window: &IncidenceSeries,
    cfg: &SimulationConfig,
) -> Result<ScenarioGrid> {
    if kinds.is_empty() || levels.is_empty() {
        return Err(Error::invalid("scenario grid needs at least one kind and one level"));
    }
    let laws = draws.r_laws();
    let baseline = simulate_with(&laws, InterventionSpec::identity(), weights, seed_window, cfg)?;
    let (bm, bmed) = final_day_stats(&baseline);
    let mut cells = Vec::with_capacity(kinds.len() * levels.len());
    for &kind in kinds {
        for &level in levels {
            let spec = InterventionSpec::new(kind, level)?;
            let e = simulate_with(&laws, spec, weights, seed_window, cfg)?;
            let (im, imed) = final_day_stats(&e);
            cells.push(GridCell {
                spec,
                reduction: reduction(bm, im),
                reduction_median: reduction(bmed, imed),
                mean_trajectory: e.mean_by_day(),
                q95_trajectory: q95_by_day(&e),
            });
        }
    }
    Ok(ScenarioGrid { baseline_mean: baseline.mean_by_day(), baseline_q95: q95_by_day(&baseline), cells })
}

impl ScenarioGrid {
    /// Day-by-day mean and 95th-quantile series, one column pair per scenario.
    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["day".to_string(), "baseline_mean".into(), "baseline_q95".into()];
        for c in &self.cells {
            header.push(format!("{}_mean", c.spec.label()));
            header.push(format!("{}_q95", c.spec.label()));
        }
        out.write_record(&header)?;
        for d in 0..self.baseline_mean.len() {
            let mut row = vec![(d + 1).to_string(), self.baseline_mean[d].to_string(), self.baseline_q95[d].to_string()];
            for c in &self.cells {
                row.push(c.mean_trajectory[d].to_string());
                row.push(c.q95_trajectory[d].to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reduction table: one row per region, one column per intervention.
pub fn write_reduction_table<W: Write>(rows: &[(String, ScenarioGrid)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let Some((_, first)) = rows.first() else {
        out.flush()?;
        return Ok(());
    };
    let mut header = vec!["region".to_string()];
    header.extend(first.cells.iter().map(|c| c.spec.label()));
    out.write_record(&header)?;
    for (region, grid) in rows {
        let mut row = vec![region.clone()];
        row.extend(grid.cells.iter().map(|c| format!("{:.4}", c.reduction)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::stats::variance;

    #[test]
    fn level_validation() {
        assert!(InterventionSpec::new(InterventionKind::TailCap, 0.0).is_err());
        assert!(InterventionSpec::new(InterventionKind::MeanShrink, 1.2).is_err());
        assert!(InterventionSpec::new(InterventionKind::MeanShrink, 1.0).is_ok());
    }

    #[test]
    fn identities_reproduce_the_law() {
        let p = RLawParams::new(2.0, 2.0).unwrap();
        for kind in [InterventionKind::TailCap, InterventionKind::MeanShrink] {
            let spec = InterventionSpec::new(kind, 1.0).unwrap();
            let (mut a, mut b) = (Seed(3).rng(), Seed(3).rng());
            for _ in 0..1000 {
                assert_eq!(draw_intervened_r(p, spec, &mut a), p.sample(&mut b));
            }
        }
    }

    #[test]
    fn mean_shrink_moments() {
        let p = RLawParams::new(2.0, 2.0).unwrap();
        let spec = InterventionSpec::new(InterventionKind::MeanShrink, 0.5).unwrap();
        let mut rng = Seed(4).rng();
        let v: Vec<f64> = (0..1_000_000).map(|_| draw_intervened_r(p, spec, &mut rng)).collect();
        let m = mean(&v);
        assert!((m - 0.5).abs() / 0.5 < 0.01, "{m}");
        let cv = variance(&v).sqrt() / m;
        let expect = p.cv() * 0.5f64.powf(-0.5);
        assert!((cv - expect).abs() / expect < 0.02, "{cv} vs {expect}");
    }

    #[test]
    fn tail_cap_bounded_and_pointwise_below() {
        let p = RLawParams::new(1.5, 0.7).unwrap();
        let spec = InterventionSpec::new(InterventionKind::TailCap, 0.9).unwrap();
        let q = p.quantile(0.9);
        let (mut a, mut b) = (Seed(5).rng(), Seed(5).rng());
        for _ in 0..10_000 {
            let capped = draw_intervened_r(p, spec, &mut a);
            let raw = p.sample(&mut b);
            assert!(capped <= q);
            assert_eq!(capped, raw.min(q));
        }
    }
}
