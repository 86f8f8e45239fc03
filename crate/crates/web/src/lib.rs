//! Browser bindings: branching-process envelopes, stopping-time histograms
//! and the effect of an intervention on one fitted law of R.
//!
//! Every function returns a JSON string (or throws a string on bad input).

use hetr_core::experiments::BranchingSetup;
use hetr_core::interventions::{InterventionKind, InterventionSpec};
use hetr_core::renewal::{simulate_renewal, stopping_time};
use hetr_core::rng::Seed;
use hetr_core::{GenerativeModel, IncidenceSeries, InfectivityWeights, RLawParams, SimulationConfig, TrajectoryEnsemble};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Keeps a page from freezing the tab.
const MAX_WORK: usize = 2_000_000;

fn check_budget(draws: usize, horizon: usize) -> Result<(), String> {
    if draws == 0 || horizon == 0 {
        return Err("draws and horizon must be positive".into());
    }
    if draws.saturating_mul(horizon) > MAX_WORK {
        return Err(format!("draws x horizon is capped at {MAX_WORK} in the browser"));
    }
    Ok(())
}

fn band(e: &TrajectoryEnsemble) -> Result<Value, String> {
    let q = e.quantile_envelope(&[0.05, 0.5, 0.95]).map_err(|e| e.to_string())?;
    Ok(json!({
        "q05": q.column(0),
        "q50": q.column(1),
        "q95": q.column(2),
        "mean": e.mean_by_day(),
    }))
}

fn pick(setup: &BranchingSetup, model: &str) -> Result<GenerativeModel, String> {
    let [m0, m1, m2] = setup.models();
    match model {
        "m0" => Ok(m0),
        "m1" => Ok(m1),
        "m2" => Ok(m2),
        other => Err(format!("unknown model `{other}`")),
    }
}

fn envelopes_impl(r0: f64, alpha: f64, x0: f64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    check_budget(3 * draws, horizon)?;
    let setup = BranchingSetup { r0, alpha, x0, horizon, n_draws: draws, seed };
    let mut out = serde_json::Map::new();
    for m in setup.models() {
        let e = setup.run(&m).map_err(|e| e.to_string())?;
        out.insert(m.short_name().to_string(), band(&e)?);
    }
    Ok(Value::Object(out).to_string())
}

/// Per-day 5/50/95% quantiles and mean for M0, M1 and M2.
#[wasm_bindgen]
pub fn envelopes(r0: f64, alpha: f64, x0: f64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    envelopes_impl(r0, alpha, x0, horizon, draws, seed)
}

#[allow(clippy::too_many_arguments)]
fn stopping_impl(model: &str, r0: f64, alpha: f64, x0: f64, threshold: u64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    check_budget(draws, horizon)?;
    let setup = BranchingSetup { r0, alpha, x0, horizon, n_draws: draws, seed };
    let e = setup.run(&pick(&setup, model)?).map_err(|e| e.to_string())?;
    let st = stopping_time(&e, threshold, horizon).map_err(|e| e.to_string())?;
    let mut hist = vec![0usize; horizon];
    for d in st.hit_times.iter().flatten() {
        hist[d - 1] += 1;
    }
    Ok(json!({ "model": model, "fraction_reached": st.fraction_reached, "hits_by_day": hist }).to_string())
}

/// Histogram of the first day the cumulative count reaches `threshold`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn stopping_histogram(model: &str, r0: f64, alpha: f64, x0: f64, threshold: u64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    stopping_impl(model, r0, alpha, x0, threshold, horizon, draws, seed)
}

#[allow(clippy::too_many_arguments)]
fn intervention_impl(shape: f64, rate: f64, kind: &str, level: f64, x0: f64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    check_budget(2 * draws, horizon)?;
    let law = RLawParams::new(shape, rate).map_err(|e| e.to_string())?;
    let kind: InterventionKind = kind.parse().map_err(|e: hetr_core::Error| e.to_string())?;
    let spec = InterventionSpec::new(kind, level).map_err(|e| e.to_string())?;
    let intervened = spec.apply(law);

    // The R law before and after, from paired draws.
    let mut rng = Seed(seed).child_str("web_r_law").rng();
    let n = 20_000;
    let (mut before, mut after) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let r = law.sample(&mut rng);
        before.push(r);
        after.push(match kind {
            InterventionKind::TailCap => r.min(intervened.cap),
            InterventionKind::MeanShrink => intervened.law.sample(&mut rng),
        });
    }
    let hi = law.quantile(0.995).max(1e-9);
    let bins = 60;
    let hist = |v: &[f64]| {
        let mut h = vec![0usize; bins];
        for &r in v {
            h[((r / hi * bins as f64) as usize).min(bins - 1)] += 1;
        }
        h
    };

    // Forecasts from a flat seed window, with and without the intervention.
    let weights = InfectivityWeights::default();
    let seed_window = IncidenceSeries::synthetic(vec![x0; weights.k()]);
    let cfg = SimulationConfig { horizon, n_draws: draws, cap_fraction: None, seed };
    let base = simulate_renewal(&[law], &weights, &seed_window, &cfg, |_, rng| law.sample(rng)).map_err(|e| e.to_string())?;
    let new = simulate_renewal(&[law], &weights, &seed_window, &cfg, |_, rng| intervened.sample(rng)).map_err(|e| e.to_string())?;
    let last = |e: &TrajectoryEnsemble| e.mean_by_day()[horizon - 1];
    let (b, a) = (last(&base), last(&new));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(json!({
        "bin_width": hi / bins as f64,
        "before": hist(&before),
        "after": hist(&after),
        "mean_before": mean(&before),
        "mean_after": mean(&after),
        "cap": if intervened.cap.is_finite() { Some(intervened.cap) } else { None },
        "baseline": band(&base)?,
        "intervened": band(&new)?,
        "reduction": if b > 0.0 { 1.0 - a / b } else { 0.0 },
    })
    .to_string())
}

/// One R ~ Gamma(shape, rate) under an intervention: the law's histogram
/// before and after, and forecasts with common random numbers.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn intervention(shape: f64, rate: f64, kind: &str, level: f64, x0: f64, horizon: usize, draws: usize, seed: u64) -> Result<String, String> {
    intervention_impl(shape, rate, kind, level, x0, horizon, draws, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelopes_has_three_models() {
        let v: Value = serde_json::from_str(&envelopes_impl(1.0, 1.2, 100.0, 20, 200, 1).unwrap()).unwrap();
        for m in ["m0", "m1", "m2"] {
            assert_eq!(v[m]["q50"].as_array().unwrap().len(), 20);
        }
    }

    #[test]
    fn identity_intervention_changes_nothing() {
        let v: Value = serde_json::from_str(&intervention_impl(2.0, 2.0, "tail_cap", 1.0, 100.0, 15, 300, 4).unwrap()).unwrap();
        assert_eq!(v["reduction"], 0.0);
        assert_eq!(v["before"], v["after"]);
        let v: Value = serde_json::from_str(&intervention_impl(2.0, 2.0, "mean_shrink", 0.6, 100.0, 15, 300, 4).unwrap()).unwrap();
        assert!(v["reduction"].as_f64().unwrap() > 0.5);
    }

    #[test]
    fn stopping_and_budget() {
        let v: Value = serde_json::from_str(&stopping_impl("m0", 1.0, 1.2, 100.0, 50_000, 100, 100, 7).unwrap()).unwrap();
        assert_eq!(v["fraction_reached"], 0.0);
        assert!(stopping_impl("m9", 1.0, 1.2, 100.0, 10, 10, 10, 7).is_err());
        assert!(envelopes_impl(1.0, 1.2, 100.0, 1000, 10_000, 1).is_err());
    }
}
