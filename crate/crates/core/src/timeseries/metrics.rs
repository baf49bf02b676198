use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapeResult {
    pub mape_pct: f64,
    pub ci_halfwidth_pct: f64,
    pub ci_level: f64,
    pub n_days: usize,
    /// Points dropped because the actual value was zero.
    pub excluded_points: usize,
    /// Days dropped for insufficient coverage.
    pub excluded_days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeOptions {
    /// Minimum share of a day's slots that must be present.
    pub min_day_coverage: f64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for MapeOptions {
    fn default() -> Self {
        MapeOptions {
            min_day_coverage: 0.5,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            seed: 0x5EED_0001,
        }
    }
}

/// Day-first MAPE (%) with a percentile-bootstrap interval over daily values.
pub fn mape(actual: &TimeSeries<f64>, forecast: &TimeSeries<f64>) -> Result<MapeResult> {
    mape_with(actual, forecast, &MapeOptions::default())
}

pub fn mape_with(actual: &TimeSeries<f64>, forecast: &TimeSeries<f64>, opts: &MapeOptions) -> Result<MapeResult> {
    actual.ensure_aligned(forecast)?;

    // date -> (sum of |a-f|/a, comparable, present, slots)
    let mut days: BTreeMap<NaiveDate, (f64, usize, usize, usize)> = BTreeMap::new();
    let mut excluded_points = 0;
    for (i, (t, a)) in actual.iter().enumerate() {
        let e = days.entry(t.date()).or_insert((0.0, 0, 0, 0));
        e.3 += 1;
        let (Some(&a), Some(&f)) = (a, forecast.get(i)) else {
            continue;
        };
        e.2 += 1;
        if a > 0.0 {
            e.0 += (a - f).abs() / a;
            e.1 += 1;
        } else {
            excluded_points += 1;
        }
    }

    let mut daily = Vec::with_capacity(days.len());
    let mut excluded_days = 0;
    for (sum, comparable, present, slots) in days.into_values() {
        if (present as f64) < opts.min_day_coverage * slots as f64 {
            excluded_days += 1;
            continue;
        }
        if comparable > 0 {
            daily.push(100.0 * sum / comparable as f64);
        }
    }
    if daily.is_empty() {
        return Err(Error::NoComparablePoints);
    }

    let mape_pct = mean(&daily);
    let ci_halfwidth_pct = bootstrap_halfwidth(&daily, opts);
    Ok(MapeResult {
        mape_pct,
        ci_halfwidth_pct,
        ci_level: opts.ci_level,
        n_days: daily.len(),
        excluded_points,
        excluded_days,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn bootstrap_halfwidth(daily: &[f64], opts: &MapeOptions) -> f64 {
    if daily.len() < 2 || opts.bootstrap_resamples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = daily.len();
    let mut means: Vec<f64> = (0..opts.bootstrap_resamples)
        .map(|_| (0..n).map(|_| daily[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - opts.ci_level) / 2.0;
    let lo = percentile(&means, alpha);
    let hi = percentile(&means, 1.0 - alpha);
    ((hi - lo) / 2.0).max(0.0)
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Pearson product-moment correlation of the jointly present points.
pub fn pearson_corr(x: &TimeSeries<f64>, y: &TimeSeries<f64>) -> Result<f64> {
    x.ensure_aligned(y)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .records()
        .iter()
        .zip(y.records())
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    pearson(&xs, &ys)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Misaligned(format!("lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
