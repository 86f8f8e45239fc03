use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::stats::{self, quantile_sorted};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub incidence: Vec<u64>,
    /// Set when some step still exceeded the population cap after the
    /// allowed redraws and was clamped.
    pub truncated: bool,
}

impl Trajectory {
    pub fn cumulative(&self) -> Vec<u64> {
        self.incidence
            .iter()
            .scan(0u64, |acc, &v| {
                *acc = acc.saturating_add(v);
                Some(*acc)
            })
            .collect()
    }
}

/// Independent simulated paths sharing a horizon and seed window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub trajectories: Vec<Trajectory>,
    pub seed_window: Vec<f64>,
    pub rng_seed: u64,
}

/// Per-day quantiles: `values[day][j]` is the `probs[j]` quantile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub probs: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl QuantileTable {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "day")?;
        for p in &self.probs {
            write!(w, ",q{p}")?;
        }
        writeln!(w)?;
        for (d, row) in self.values.iter().enumerate() {
            write!(w, "{}", d + 1)?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl TrajectoryEnsemble {
    pub(crate) fn new(trajectories: Vec<Trajectory>, seed_window: Vec<f64>, rng_seed: u64) -> Self {
        debug_assert!(!trajectories.is_empty());
        debug_assert!(trajectories.windows(2).all(|p| p[0].incidence.len() == p[1].incidence.len()));
        TrajectoryEnsemble {
            trajectories,
            seed_window,
            rng_seed,
        }
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].incidence.len()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Values across trajectories on 0-based day `day`.
    pub fn day_values(&self, day: usize) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.incidence[day] as f64).collect()
    }

    /// Cumulative counts through 0-based day `day`, one per trajectory.
    pub fn cumulative_values(&self, day: usize) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|t| t.incidence[..=day].iter().map(|&v| v as f64).sum())
            .collect()
    }

    pub fn mean_by_day(&self) -> Vec<f64> {
        (0..self.horizon()).map(|d| stats::mean(&self.day_values(d))).collect()
    }

    pub fn fraction_truncated(&self) -> f64 {
        self.trajectories.iter().filter(|t| t.truncated).count() as f64 / self.len() as f64
    }

    pub fn quantile_envelope(&self, probs: &[f64]) -> Result<QuantileTable> {
        if probs.is_empty() {
            return Err(Error::invalid("at least one probability is required"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let values = (0..self.horizon())
            .map(|d| {
                let mut col = self.day_values(d);
                col.sort_by(|a, b| a.total_cmp(b));
                probs.iter().map(|&p| quantile_sorted(&col, p)).collect()
            })
            .collect();
        Ok(QuantileTable {
            probs: probs.to_vec(),
            values,
        })
    }

    /// Per-day `(min, max)` across trajectories.
    pub fn min_max(&self) -> Vec<(f64, f64)> {
        (0..self.horizon())
            .map(|d| {
                self.trajectories.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                    let v = t.incidence[d] as f64;
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }

    /// One row per draw, one column per day.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.horizon()).map(|d| format!("day_{d}")).collect();
        writeln!(w, "draw,truncated,{}", header.join(","))?;
        for (i, t) in self.trajectories.iter().enumerate() {
            let row: Vec<String> = t.incidence.iter().map(u64::to_string).collect();
            writeln!(w, "{i},{},{}", u8::from(t.truncated), row.join(","))?;
        }
        Ok(())
    }

    /// Reads the format written by [`Self::write_csv`]. The seed window is
    /// not stored there and comes back empty.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let width = rdr.headers()?.len();
        if width < 3 {
            return Err(Error::invalid("ensemble CSV has no day columns"));
        }
        let mut trajectories = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |col: usize| Error::MalformedRow {
                row: row + 2,
                column: format!("column {}", col + 1),
                value: rec.get(col).unwrap_or("").to_string(),
            };
            if rec.len() != width {
                return Err(bad(rec.len().min(width - 1)));
            }
            let truncated = match &rec[1] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(1)),
            };
            let incidence = (2..width)
                .map(|c| rec[c].parse::<u64>().map_err(|_| bad(c)))
                .collect::<Result<Vec<_>>>()?;
            trajectories.push(Trajectory { incidence, truncated });
        }
        if trajectories.is_empty() {
            return Err(Error::invalid("ensemble CSV has no draws"));
        }
        Ok(TrajectoryEnsemble::new(trajectories, Vec::new(), 0))
    }

    pub fn summary_json(&self, probs: &[f64]) -> Result<serde_json::Value> {
        let q = self.quantile_envelope(probs)?;
        Ok(serde_json::json!({
            "horizon": self.horizon(),
            "n_draws": self.len(),
            "rng_seed": self.rng_seed,
            "quantiles": q,
            "mean": self.mean_by_day(),
            "fraction_truncated": self.fraction_truncated(),
        }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingTimes {
    pub fraction_reached: f64,
    /// 1-based day on which the cumulative count first reached the threshold.
    pub hit_times: Vec<Option<usize>>,
}

/// First day on which each trajectory's cumulative count (over simulated days)
/// reaches `threshold`, within the first `horizon` days.
pub fn stopping_time(e: &TrajectoryEnsemble, threshold: u64, horizon: usize) -> Result<StoppingTimes> {
    if horizon > e.horizon() {
        return Err(Error::invalid(format!(
            "ensemble horizon {} shorter than requested {horizon}",
            e.horizon()
        )));
    }
    let hit_times: Vec<Option<usize>> = e
        .trajectories
        .iter()
        .map(|t| {
            t.cumulative()
                .iter()
                .take(horizon)
                .position(|&c| c >= threshold)
                .map(|p| p + 1)
        })
        .collect();
    let reached = hit_times.iter().filter(|h| h.is_some()).count();
    Ok(StoppingTimes {
        fraction_reached: reached as f64 / e.len() as f64,
        hit_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ens(rows: Vec<Vec<u64>>) -> TrajectoryEnsemble {
        TrajectoryEnsemble::new(
            rows.into_iter()
                .map(|incidence| Trajectory { incidence, truncated: false })
                .collect(),
            vec![1.0],
            0,
        )
    }

    #[test]
    fn identical_trajectories_collapse_quantiles() {
        let e = ens(vec![vec![3, 1, 4]; 5]);
        let q = e.quantile_envelope(&[0.0, 0.3, 0.99]).unwrap();
        for (d, row) in q.values.iter().enumerate() {
            assert!(row.iter().all(|&v| v == [3.0, 1.0, 4.0][d]));
        }
    }

    #[test]
    fn two_point_median() {
        let q = ens(vec![vec![0], vec![2]]).quantile_envelope(&[0.5]).unwrap();
        assert_eq!(q.values[0][0], 1.0);
    }

    #[test]
    fn envelope_errors() {
        let e = ens(vec![vec![0]]);
        assert!(e.quantile_envelope(&[]).is_err());
        assert!(e.quantile_envelope(&[1.5]).is_err());
    }

    #[test]
    fn stopping_examples() {
        let e = ens(vec![vec![10, 10, 10], vec![0, 0, 0], vec![25, 0, 0]]);
        let s = stopping_time(&e, 20, 3).unwrap();
        assert_eq!(s.hit_times, vec![Some(2), None, Some(1)]);
        assert!((s.fraction_reached - 2.0 / 3.0).abs() < 1e-15);
        let zero = stopping_time(&e, 0, 3).unwrap();
        assert_eq!(zero.fraction_reached, 1.0);
        assert!(zero.hit_times.iter().all(|&h| h == Some(1)));
        assert!(stopping_time(&e, 1, 4).is_err());
    }

    #[test]
    fn csv_shape() {
        let mut buf = Vec::new();
        ens(vec![vec![1, 2], vec![3, 4]]).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "draw,truncated,day_1,day_2\n0,0,1,2\n1,0,3,4\n");
    }

    proptest! {
        #[test]
        fn quantiles_monotone_in_prob(
            rows in proptest::collection::vec(proptest::collection::vec(0u64..1000, 4), 1..30),
            mut probs in proptest::collection::vec(0.0f64..=1.0, 1..6),
        ) {
            probs.sort_by(|a, b| a.total_cmp(b));
            let q = ens(rows).quantile_envelope(&probs).unwrap();
            for row in &q.values {
                prop_assert!(row.windows(2).all(|p| p[0] <= p[1]));
            }
        }
    }
}
