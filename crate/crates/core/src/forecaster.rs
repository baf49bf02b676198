//! Weather-driven load forecasting.
//!
//! Two families:
//! - [`LinearModel`]: OLS of a daily or monthly aggregate on mean dry bulb.
//! - [`ProfileForecaster`]: a windowed autoregressive network over
//!   15-minute intervals, rolled forward recursively to produce a profile.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::plant::OperationRecord;
use crate::regressor::{Regressor, TrainConfig, TrainReport};
use crate::timeseries::{mape, resample_mean, BucketSeries, Granularity, MapeResult, TimeSeries, Timestamp, WeatherRecord};
use crate::{persist, Error, Result};

/// 15-minute load forecast; values are never negative.
pub type CoolingProfile = TimeSeries<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileTarget {
    Cooling,
    Power,
}

impl ProfileTarget {
    pub fn value(self, r: &OperationRecord) -> f64 {
        match self {
            ProfileTarget::Cooling => r.output.cooling_kw,
            ProfileTarget::Power => r.output.power_kw,
        }
    }
}

// ---------------------------------------------------------------------------
// linear

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub slope: f64,
    pub intercept: f64,
    pub granularity: Granularity,
    pub fit_r2: f64,
    pub n_points: usize,
    pub mean_temp: f64,
    pub mean_target: f64,
}

/// OLS of the bucket means of `targets` on the bucket means of `temps`.
pub fn fit_linear(temps: &TimeSeries<f64>, targets: &TimeSeries<f64>, granularity: Granularity) -> Result<LinearModel> {
    temps.ensure_aligned(targets)?;
    let t = resample_mean(temps, granularity)?;
    let y = resample_mean(targets, granularity)?;
    fit_linear_buckets(&t, &y)
}

/// As [`fit_linear`] on already aggregated series (matched by bucket date).
pub fn fit_linear_buckets(temps: &BucketSeries, targets: &BucketSeries) -> Result<LinearModel> {
    if temps.granularity != targets.granularity {
        return Err(Error::Misaligned("temperature and target granularity differ".into()));
    }
    let pairs: Vec<(f64, f64)> = temps
        .buckets
        .iter()
        .filter_map(|b| {
            let y = targets.buckets.iter().find(|c| c.start == b.start)?.value?;
            Some((b.value?, y))
        })
        .collect();
    let g = temps.granularity;
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "linear fit needs at least 3 {} buckets, got {}",
            granularity_name(g),
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 1e-12 * n * mx.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateSeries("zero temperature variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pairs.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let fit_r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearModel {
        slope,
        intercept,
        granularity: g,
        fit_r2,
        n_points: pairs.len(),
        mean_temp: mx,
        mean_target: my,
    })
}

pub fn predict_linear(model: &LinearModel, temp_aggregate: f64) -> f64 {
    (model.slope * temp_aggregate + model.intercept).max(0.0)
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Daily => "daily",
        Granularity::Monthly => "monthly",
    }
}

// ---------------------------------------------------------------------------
// profile

/// One-step model rolled forward by [`forecast_profile`].
pub trait StepForecaster: Sync {
    fn target(&self) -> ProfileTarget;
    /// Past intervals needed before the first step.
    fn lag_window(&self) -> usize;
    /// `window` holds the `lag_window` most recent values, oldest first.
    fn predict_step(&self, t: Timestamp, weather: &WeatherRecord, window: &[f64]) -> Result<f64>;
    /// Half-open span of the data the model was fitted on.
    fn training_span(&self) -> Option<(Timestamp, Timestamp)>;
    /// Last training values, ending at the training span end.
    fn context_tail(&self) -> Option<&[f64]> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub lag_window: usize,
    /// Lags (in intervals, each within the window) fed as features, along
    /// with the window mean.
    pub lags: Vec<usize>,
    /// Trailing share of whole days held out for the attached metrics.
    pub holdout_fraction: f64,
    pub train: TrainConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            lag_window: 96,
            lags: vec![1, 4, 96],
            holdout_fraction: 0.3,
            train: TrainConfig::default(),
        }
    }
}

impl ForecastConfig {
    /// Settings for counterfactual baselines rolled forward over whole
    /// reporting periods: no point lags, only the trailing window mean.
    pub fn baseline() -> ForecastConfig {
        ForecastConfig {
            lags: Vec::new(),
            holdout_fraction: 0.0,
            ..ForecastConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag_window == 0 {
            return Err(Error::Config("lag_window must be positive".into()));
        }
        if let Some(&bad) = self.lags.iter().find(|&&l| l == 0 || l > self.lag_window) {
            return Err(Error::Config(format!("lags: {bad} outside 1..={}", self.lag_window)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout_fraction must be in [0, 1)".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileForecaster {
    pub target: ProfileTarget,
    pub lag_window: usize,
    pub lags: Vec<usize>,
    pub step_minutes: u32,
    pub regressor: Regressor,
    pub training_start: Timestamp,
    pub training_end: Timestamp,
    pub context: Option<Vec<f64>>,
    pub train_report: TrainReport,
    pub holdout: Option<MapeResult>,
}

const FORMAT: &str = "chillopt.profile_forecaster";
const FORMAT_VERSION: u32 = 1;

impl ProfileForecaster {
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["dry_bulb_c", "rel_humidity_pct", "hour_sin", "hour_cos", "weekday"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        names.extend(self.lags.iter().map(|l| format!("lag_{l}")));
        names.push("window_mean".into());
        names
    }

    pub fn feature_row(&self, t: Timestamp, w: &WeatherRecord, window: &[f64]) -> Vec<f64> {
        features(&self.lags, t, w, window)
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(FORMAT, FORMAT_VERSION, self)
    }

    pub fn from_json(text: &str) -> Result<ProfileForecaster> {
        persist::from_json(FORMAT, FORMAT_VERSION, text)
    }
}

fn features(lags: &[usize], t: Timestamp, w: &WeatherRecord, window: &[f64]) -> Vec<f64> {
    let phase = TAU * t.minute_of_day() as f64 / 1440.0;
    let mut row = vec![
        w.dry_bulb_c,
        w.rel_humidity_pct,
        phase.sin(),
        phase.cos(),
        if t.is_weekday() { 1.0 } else { 0.0 },
    ];
    row.extend(lags.iter().map(|&l| window[window.len() - l]));
    row.push(window.iter().sum::<f64>() / window.len() as f64);
    row
}

impl StepForecaster for ProfileForecaster {
    fn target(&self) -> ProfileTarget {
        self.target
    }

    fn lag_window(&self) -> usize {
        self.lag_window
    }

    fn predict_step(&self, t: Timestamp, weather: &WeatherRecord, window: &[f64]) -> Result<f64> {
        if window.len() != self.lag_window {
            return Err(Error::DimensionMismatch {
                expected: self.lag_window,
                got: window.len(),
            });
        }
        Ok(self.regressor.predict(&self.feature_row(t, weather, window))?[0])
    }

    fn training_span(&self) -> Option<(Timestamp, Timestamp)> {
        Some((self.training_start, self.training_end))
    }

    fn context_tail(&self) -> Option<&[f64]> {
        self.context.as_deref()
    }
}

/// Trains on the leading share of whole days and scores the rest.
pub fn fit_profile(
    history: &TimeSeries<OperationRecord>,
    target: ProfileTarget,
    cfg: &ForecastConfig,
) -> Result<ProfileForecaster> {
    cfg.validate()?;
    let per_day = history.intervals_per_day();
    let days = history.len() / per_day;
    if days < 60 {
        return Err(Error::InsufficientData(format!(
            "profile forecaster needs at least 60 days of history, got {days}"
        )));
    }
    let train_days = if cfg.holdout_fraction > 0.0 {
        ((days as f64 * (1.0 - cfg.holdout_fraction)).round() as usize).clamp(1, days - 1)
    } else {
        days
    };
    let split = if train_days == days { history.len() } else { train_days * per_day };
    let train = history.slice(0..split)?;
    let values: Vec<Option<f64>> = train.records().iter().map(|r| r.as_ref().map(|r| target.value(r))).collect();

    let lw = cfg.lag_window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = Vec::with_capacity(lw);
    for i in lw..train.len() {
        let (Some(rec), Some(y)) = (train.get(i), values[i]) else { continue };
        window.clear();
        window.extend(values[i - lw..i].iter().map_while(|v| *v));
        if window.len() < lw {
            continue;
        }
        xs.push(features(&cfg.lags, rec.timestamp, &rec.weather, &window));
        ys.push(vec![y]);
    }
    if xs.is_empty() {
        return Err(Error::InsufficientData("no complete lag windows in training history".into()));
    }
    let (regressor, train_report) = Regressor::train(&xs, &ys, &cfg.train)?;
    let context = values[values.len().saturating_sub(lw)..]
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .filter(|c| c.len() == lw);

    let mut f = ProfileForecaster {
        target,
        lag_window: lw,
        lags: cfg.lags.clone(),
        step_minutes: history.step_minutes(),
        regressor,
        training_start: train.start(),
        training_end: train.end(),
        context,
        train_report,
        holdout: None,
    };
    if split < history.len() {
        let holdout = history.slice(split..history.len())?;
        f.holdout = Some(evaluate_forecaster(&f, &holdout)?);
    }
    Ok(f)
}

/// Recursive multi-step forecast over the span of `weather_forecast`.
/// `recent_history` must end where the forecast starts and cover the lag
/// window without gaps.
pub fn forecast_profile<M: StepForecaster + ?Sized>(
    model: &M,
    weather_forecast: &TimeSeries<WeatherRecord>,
    recent_history: &TimeSeries<f64>,
) -> Result<CoolingProfile> {
    let lw = model.lag_window();
    if weather_forecast.is_empty() {
        return TimeSeries::new(weather_forecast.start(), weather_forecast.step_minutes(), Vec::new());
    }
    if recent_history.end() != weather_forecast.start() || recent_history.step_minutes() != weather_forecast.step_minutes() {
        return Err(Error::InsufficientData(format!(
            "missing lag window: history ends {} but forecast starts {}",
            recent_history.end(),
            weather_forecast.start()
        )));
    }
    let tail = recent_history.records()[recent_history.len().saturating_sub(lw)..]
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .filter(|w| w.len() == lw)
        .ok_or_else(|| {
            Error::InsufficientData(format!("missing lag window: need {lw} gap-free intervals before the forecast"))
        })?;
    roll_forward(model, weather_forecast, tail)
}

fn roll_forward<M: StepForecaster + ?Sized>(
    model: &M,
    weather: &TimeSeries<WeatherRecord>,
    mut window: Vec<f64>,
) -> Result<CoolingProfile> {
    let mut out = Vec::with_capacity(weather.len());
    for (t, w) in weather.iter() {
        let w = w.ok_or_else(|| Error::InvalidSeries(format!("weather forecast missing at {t}")))?;
        let y = model.predict_step(t, w, &window)?.max(0.0);
        if !y.is_finite() {
            return Err(Error::InvalidSeries(format!("non-finite forecast at {t}")));
        }
        window.remove(0);
        window.push(y);
        out.push(y);
    }
    TimeSeries::from_values(weather.start(), weather.step_minutes(), out)
}

/// Day-by-day 24 h roll-forward forecasts over `holdout`, scored with
/// day-first MAPE. Each day starts from the actual values before it; when
/// the holdout directly follows training, the stored training tail serves
/// the first day, otherwise the first lag window is warm-up only.
pub fn evaluate_forecaster<M: StepForecaster + ?Sized>(model: &M, holdout: &TimeSeries<OperationRecord>) -> Result<MapeResult> {
    if holdout.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some((from, to)) = model.training_span() {
        if holdout.start() < to && from < holdout.end() {
            return Err(Error::DataLeakage(format!(
                "holdout {}..{} overlaps training span {from}..{to}",
                holdout.start(),
                holdout.end()
            )));
        }
    }
    let target = model.target();
    let actual = holdout.map(|r| target.value(r));
    let forecast = day_ahead_forecasts(model, holdout, &actual)?;
    mape(&actual, &forecast)
}

/// Day-ahead forecasts aligned with `actual`; `None` where no complete lag
/// window was available.
pub fn day_ahead_forecasts<M: StepForecaster + ?Sized>(
    model: &M,
    conditions: &TimeSeries<OperationRecord>,
    actual: &TimeSeries<f64>,
) -> Result<TimeSeries<f64>> {
    conditions.ensure_aligned(actual)?;
    let lw = model.lag_window();
    let prefix: Vec<Option<f64>> = match (model.context_tail(), model.training_span()) {
        (Some(tail), Some((_, end))) if end == actual.start() => tail.iter().map(|v| Some(*v)).collect(),
        _ => Vec::new(),
    };
    let offset = prefix.len();
    let full: Vec<Option<f64>> = prefix.into_iter().chain(actual.records().iter().copied()).collect();

    let per_day = actual.intervals_per_day();
    let mut starts = vec![0usize];
    let first_midnight = (0..actual.len()).find(|&i| i > 0 && actual.timestamp_at(i).minute_of_day() == 0);
    if let Some(m) = first_midnight {
        starts.extend((m..actual.len()).step_by(per_day));
    }
    starts.dedup();
    let weather = conditions.map(|r| r.weather);

    let segments = ExecMode::default().map(&starts, |&s| -> Result<Option<(usize, Vec<f64>)>> {
        let fi = s + offset;
        if fi < lw {
            return Ok(None);
        }
        let Some(window) = full[fi - lw..fi].iter().copied().collect::<Option<Vec<f64>>>() else {
            return Ok(None);
        };
        let end = starts.iter().find(|&&e| e > s).copied().unwrap_or(actual.len());
        let w = weather.slice(s..end)?;
        if w.present_count() < w.len() {
            return Ok(None);
        }
        Ok(Some((s, roll_forward(model, &w, window)?.records().iter().flatten().copied().collect())))
    });
    let mut forecast = vec![None; actual.len()];
    for seg in segments {
        if let Some((s, vals)) = seg? {
            for (k, v) in vals.into_iter().enumerate() {
                forecast[s + k] = Some(v);
            }
        }
    }
    TimeSeries::new(actual.start(), actual.step_minutes(), forecast)
}
