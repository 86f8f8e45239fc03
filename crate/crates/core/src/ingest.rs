//! Case-count ingestion: wide cumulative CSV → daily incidence → smoothed
//! series → fixed-length fitting windows.

use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cumulative case totals for one region over contiguous days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    pub region: String,
    pub start_date: NaiveDate,
    pub cumulative: Vec<u64>,
}

impl CumulativeSeries {
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        let start = self.start_date;
        (0..self.cumulative.len()).map(move |i| start + Duration::days(i as i64))
    }
}

/// Daily new cases for one region. This is also the canonical series file
/// exchanged between the pipeline stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncidenceSeries {
    pub region: String,
    pub start_date: NaiveDate,
    pub incidence: Vec<f64>,
    #[serde(default)]
    pub population: Option<u64>,
}

impl IncidenceSeries {
    pub fn new(region: impl Into<String>, start_date: NaiveDate, incidence: Vec<f64>) -> Self {
        IncidenceSeries {
            region: region.into(),
            start_date,
            incidence,
            population: None,
        }
    }

    /// Convenience constructor for synthetic data with no calendar meaning.
    pub fn synthetic(incidence: Vec<f64>) -> Self {
        Self::new("synthetic", NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), incidence)
    }

    pub fn with_population(mut self, population: u64) -> Self {
        self.population = Some(population);
        self
    }

    pub fn len(&self) -> usize {
        self.incidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidence.is_empty()
    }

    pub fn end_date(&self) -> NaiveDate {
        self.start_date + Duration::days(self.incidence.len() as i64 - 1)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        let start = self.start_date;
        (0..self.incidence.len()).map(move |i| start + Duration::days(i as i64))
    }

    /// Sub-series of `len` days starting `offset` days after `start_date`.
    pub fn slice(&self, offset: usize, len: usize) -> Result<IncidenceSeries> {
        if offset + len > self.incidence.len() {
            return Err(Error::InsufficientDateRange {
                needed: offset + len,
                available: self.incidence.len(),
            });
        }
        Ok(IncidenceSeries {
            region: self.region.clone(),
            start_date: self.start_date + Duration::days(offset as i64),
            incidence: self.incidence[offset..offset + len].to_vec(),
            population: self.population,
        })
    }

    /// The last `len` days.
    pub fn tail(&self, len: usize) -> Result<IncidenceSeries> {
        if len > self.len() {
            return Err(Error::SeriesTooShort {
                len: self.len(),
                min: len,
            });
        }
        self.slice(self.len() - len, len)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn parse_header_date(header: &str) -> Option<NaiveDate> {
    let h = header.trim();
    let mut parts = h.split('/');
    let (m, d, y) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let (m, d, y): (u32, u32, i32) = (m.parse().ok()?, d.parse().ok()?, y.parse().ok()?);
    let year = if y < 100 { 2000 + y } else { y };
    NaiveDate::from_ymd_opt(year, m, d)
}

fn parse_count(cell: &str) -> Option<u64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<u64>() {
        return Some(v);
    }
    // Some exports write integral counts as `12.0`.
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 => Some(v as u64),
        _ => None,
    }
}

/// Parses a wide-format cumulative CSV (label columns followed by one column
/// per `m/d/yy` date) and sums every row whose label columns name `region`.
pub fn parse_cumulative_csv(raw_text: &str, region: &str) -> Result<CumulativeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(raw_text.as_bytes());
    let headers = reader.headers()?.clone();

    let mut date_cols = Vec::new();
    let mut label_cols = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match parse_header_date(h) {
            Some(d) => date_cols.push((i, d)),
            None => label_cols.push(i),
        }
    }
    if date_cols.is_empty() {
        return Err(Error::invalid("header row has no m/d/y date columns"));
    }
    for pair in date_cols.windows(2) {
        let (prev, next) = (pair[0].1, pair[1].1);
        if next - prev != Duration::days(1) {
            return Err(Error::NonContiguousDates { prev, next });
        }
    }

    let mut totals = vec![0u64; date_cols.len()];
    let mut matched = false;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let is_match = label_cols
            .iter()
            .any(|&c| record.get(c).map(str::trim) == Some(region));
        if !is_match {
            continue;
        }
        matched = true;
        for (slot, &(col, _)) in totals.iter_mut().zip(&date_cols) {
            let cell = record.get(col).unwrap_or("");
            let v = parse_count(cell).ok_or_else(|| Error::MalformedRow {
                // 1-based line number including the header
                row: row_idx + 2,
                column: headers[col].to_string(),
                value: cell.to_string(),
            })?;
            *slot += v;
        }
    }
    if !matched {
        return Err(Error::RegionNotFound(region.to_string()));
    }
    Ok(CumulativeSeries {
        region: region.to_string(),
        start_date: date_cols[0].1,
        cumulative: totals,
    })
}

/// First differences, with negative corrections thresholded to zero. The first
/// day keeps its cumulative value.
pub fn to_incidence(c: &CumulativeSeries) -> Result<IncidenceSeries> {
    if c.cumulative.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: c.cumulative.len(),
            min: 2,
        });
    }
    let mut incidence = Vec::with_capacity(c.cumulative.len());
    incidence.push(c.cumulative[0] as f64);
    incidence.extend(
        c.cumulative
            .windows(2)
            .map(|w| w[1].saturating_sub(w[0]) as f64),
    );
    Ok(IncidenceSeries::new(c.region.clone(), c.start_date, incidence))
}

/// Trailing mean over the last `min(t + 1, window)` days.
pub fn rolling_average(s: &IncidenceSeries, window: usize) -> Result<IncidenceSeries> {
    if window == 0 {
        return Err(Error::invalid("rolling window must be at least 1"));
    }
    let x = &s.incidence;
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for t in 0..x.len() {
        acc += x[t];
        if t >= window {
            acc -= x[t - window];
        }
        let n = (t + 1).min(window);
        // Recompute exactly when the running sum could have drifted below 0.
        let mean = if acc < 0.0 {
            x[t + 1 - n..=t].iter().sum::<f64>() / n as f64
        } else {
            acc / n as f64
        };
        out.push(mean.max(0.0));
    }
    Ok(IncidenceSeries {
        incidence: out,
        ..s.clone()
    })
}

/// `n_windows` consecutive, non-overlapping slices of `window_len` days
/// beginning at `start`.
pub fn split_windows(
    s: &IncidenceSeries,
    start: NaiveDate,
    window_len: usize,
    n_windows: usize,
) -> Result<Vec<IncidenceSeries>> {
    if window_len == 0 || n_windows == 0 {
        return Err(Error::invalid("window length and count must be positive"));
    }
    let needed = window_len * n_windows;
    let offset = (start - s.start_date).num_days();
    if offset < 0 {
        return Err(Error::InsufficientDateRange {
            needed,
            available: 0,
        });
    }
    let offset = offset as usize;
    let available = s.len().saturating_sub(offset);
    if available < needed {
        return Err(Error::InsufficientDateRange { needed, available });
    }
    (0..n_windows)
        .map(|w| s.slice(offset + w * window_len, window_len))
        .collect()
}

/// Region → population side table, read from `region,population` CSV.
pub fn read_population_table(raw_text: &str) -> Result<std::collections::BTreeMap<String, u64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw_text.as_bytes());
    let mut table = std::collections::BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let region = rec.get(0).unwrap_or("").trim().to_string();
        let cell = rec.get(1).unwrap_or("");
        let pop = parse_count(cell).filter(|&p| p > 0).ok_or_else(|| Error::MalformedRow {
            row: i + 2,
            column: "population".into(),
            value: cell.to_string(),
        })?;
        table.insert(region, pop);
    }
    Ok(table)
}
