use anyhow::Result;
use hetr_core::experiments::{ml_recovery, tail_summary, BranchingSetup, MlRecoverySetup, TailSummary, DEFAULT_ALPHA};
use hetr_core::renewal::stopping_time;
use hetr_core::GenerativeModel;
use serde::Serialize;

use crate::Ctx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Model {
    M0,
    M1,
    M2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    /// Constant-R estimator on M2-simulated epidemics.
    MlRecovery,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Models to simulate (comma-separated or repeated; default all three).
    #[arg(long, value_enum, value_delimiter = ',')]
    model: Vec<Model>,
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
    /// Gamma shape parameter of M1 and M2.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Incidence on day 0.
    #[arg(long, default_value_t = 100.0)]
    x0: f64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 5000)]
    draws: usize,
    /// Cumulative count whose first crossing is recorded.
    #[arg(long, default_value_t = 50_000)]
    threshold: u64,
    /// Quantiles of the envelope CSV.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99])]
    probs: Vec<f64>,
    /// Run a study instead of the envelopes.
    #[arg(long, value_enum)]
    experiment: Option<Experiment>,
    /// Epidemics in the recovery study.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Gamma law of R in the recovery study: shape and rate.
    #[arg(long, default_value_t = 1.2)]
    shape: f64,
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Days per epidemic in the recovery study.
    #[arg(long, default_value_t = 20)]
    days: usize,
    #[arg(long)]
    k: Option<usize>,
}

pub fn run(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    match a.experiment {
        Some(Experiment::MlRecovery) => recovery(ctx, &a),
        None => envelopes(ctx, &a),
    }
}

fn envelopes(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let setup = BranchingSetup { r0: a.r0, alpha: a.alpha, x0: a.x0, horizon: a.horizon, n_draws: a.draws, seed: ctx.seed };
    let wanted = if a.model.is_empty() { vec![Model::M0, Model::M1, Model::M2] } else { a.model.clone() };
    let [m0, m1, m2] = setup.models();
    let mut summaries: Vec<TailSummary> = Vec::new();
    for m in wanted {
        let model: &GenerativeModel = match m {
            Model::M0 => &m0,
            Model::M1 => &m1,
            Model::M2 => &m2,
        };
        let name = model.short_name();
        let e = setup.run(model)?;
        let q = e.quantile_envelope(&a.probs)?;
        ctx.out.write_with(&format!("synth_{name}_envelope.csv"), |w| Ok(q.write_csv(w)?))?;
        ctx.out.write_with(&format!("synth_{name}_ensemble.csv"), |w| Ok(e.write_csv(w)?))?;

        let st = stopping_time(&e, a.threshold, e.horizon())?;
        let mut hist = vec![0usize; e.horizon()];
        for d in st.hit_times.iter().flatten() {
            hist[d - 1] += 1;
        }
        ctx.out.write_with(&format!("synth_{name}_stopping.csv"), |w| {
            writeln!(w, "day,hits,fraction_reached")?;
            let mut acc = 0;
            for (d, h) in hist.iter().enumerate() {
                acc += h;
                writeln!(w, "{},{h},{}", d + 1, acc as f64 / e.len() as f64)?;
            }
            Ok(())
        })?;

        let s = tail_summary(model, &e, a.threshold)?;
        println!(
            "{name}: q99 cumulative {:.0}, mean cumulative {:.0}, reached {} in {:.2}% of {} paths",
            s.q99_cumulative,
            s.mean_cumulative,
            a.threshold,
            100.0 * s.stopping_fraction,
            e.len()
        );
        summaries.push(s);
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        setup: &'a BranchingSetup,
        threshold: u64,
        models: &'a [TailSummary],
    }
    ctx.out.write_json("synth_summary.json", &Summary { setup: &setup, threshold: a.threshold, models: &summaries })?;
    ctx.out.write_with("synth_summary.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        for s in &summaries {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn recovery(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let setup = MlRecoverySetup {
        n: a.n,
        shape: a.shape,
        rate: a.rate,
        x0: a.x0,
        days: a.days,
        k: ctx.cfg.k(a.k),
        seed: ctx.seed,
    };
    if setup.days < 2 || setup.n == 0 {
        anyhow::bail!("the recovery study needs --n >= 1 and --days >= 2");
    }
    let r = ml_recovery(&setup)?;
    println!(
        "{} epidemics: mean estimate {:.3} vs true {:.3}, bias {:+.3}, 95% CI coverage {:.1}%",
        r.n,
        r.mean_estimate,
        r.true_mean,
        r.mean_bias,
        100.0 * r.coverage
    );
    ctx.out.write_json("ml_recovery.json", &serde_json::json!({ "setup": setup, "report": r }))?;
    ctx.out.write_with("ml_recovery.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(&r)?;
        out.flush()?;
        Ok(())
    })?;
    Ok(())
}
