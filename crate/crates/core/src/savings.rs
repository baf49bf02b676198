//! Measurement and verification: adjusted-baseline savings and the naive
//! before/after comparison it corrects.
//!
//! The baseline is fitted on pre-change operation and re-evaluated under
//! the reporting period's weather. Energy is kWh per interval
//! (`power_kw * step_hours`).

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::forecaster::{fit_linear, fit_profile, forecast_profile, predict_linear, ForecastConfig, LinearModel, ProfileForecaster, ProfileTarget};
use crate::plant::OperationRecord;
use crate::timeseries::{resample_mean, Granularity, TimeSeries, Timestamp, WeatherRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LinearDaily,
    LinearMonthly,
    ProfileForecaster,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::LinearDaily => "linear_daily",
            BaselineKind::LinearMonthly => "linear_monthly",
            BaselineKind::ProfileForecaster => "profile_forecaster",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineFit {
    Linear(LinearModel),
    Profile(Box<ProfileForecaster>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub fit: BaselineFit,
    pub period_start: Timestamp,
    pub period_end: Timestamp,
    pub step_minutes: u32,
    /// Mean metered kWh per day over the baseline period.
    pub mean_daily_kwh: f64,
}

fn interval_kwh(history: &TimeSeries<OperationRecord>) -> TimeSeries<f64> {
    let h = history.step_hours();
    history.map(|r| r.output.power_kw * h)
}

fn covered_days(history: &TimeSeries<OperationRecord>) -> usize {
    history.present_count() / history.intervals_per_day()
}

fn covered_months(history: &TimeSeries<OperationRecord>) -> usize {
    let mut months: BTreeMap<(i32, u32), usize> = BTreeMap::new();
    for (t, r) in history.iter() {
        if r.is_some() {
            let d = t.date();
            *months.entry((d.year(), d.month())).or_default() += 1;
        }
    }
    // a month counts once at least half of it is present
    months.values().filter(|&&n| n >= 15 * history.intervals_per_day()).count()
}

fn check_coverage(history: &TimeSeries<OperationRecord>, kind: BaselineKind) -> Result<()> {
    match kind {
        BaselineKind::LinearDaily | BaselineKind::ProfileForecaster => {
            let days = covered_days(history);
            if days < 60 {
                return Err(Error::InsufficientData(format!(
                    "{} baseline requires at least 60 days, got {days}",
                    kind.name()
                )));
            }
        }
        BaselineKind::LinearMonthly => {
            let months = covered_months(history);
            if months < 6 {
                return Err(Error::InsufficientData(format!(
                    "{} baseline requires at least 6 months, got {months}",
                    kind.name()
                )));
            }
        }
    }
    Ok(())
}

/// Fits the baseline on `history` (the pre-change period). Profile
/// baselines train on the whole period, with no held-out tail.
pub fn fit_baseline(history: &TimeSeries<OperationRecord>, kind: BaselineKind, forecast: &ForecastConfig) -> Result<BaselineModel> {
    check_coverage(history, kind)?;
    let fit = match kind {
        BaselineKind::LinearDaily | BaselineKind::LinearMonthly => {
            let g = if kind == BaselineKind::LinearDaily {
                Granularity::Daily
            } else {
                Granularity::Monthly
            };
            BaselineFit::Linear(fit_linear(&history.map(|r| r.weather.dry_bulb_c), &history.map(|r| r.output.power_kw), g)?)
        }
        BaselineKind::ProfileForecaster => {
            let cfg = ForecastConfig {
                holdout_fraction: 0.0,
                ..forecast.clone()
            };
            BaselineFit::Profile(Box::new(fit_profile(history, ProfileTarget::Power, &cfg)?))
        }
    };
    let kwh: f64 = interval_kwh(history).records().iter().flatten().sum();
    Ok(BaselineModel {
        kind,
        fit,
        period_start: history.start(),
        period_end: history.end(),
        step_minutes: history.step_minutes(),
        mean_daily_kwh: kwh / (history.present_count() as f64 / history.intervals_per_day() as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedBaseline {
    pub interval_kwh: TimeSeries<f64>,
    pub total_kwh: f64,
}

/// Baseline energy re-stated under `conditions` (the reporting weather).
pub fn adjusted_baseline(model: &BaselineModel, conditions: &TimeSeries<WeatherRecord>) -> Result<AdjustedBaseline> {
    if conditions.step_minutes() != model.step_minutes {
        return Err(Error::Misaligned(format!(
            "conditions step {} min does not match the baseline's {} min",
            conditions.step_minutes(),
            model.step_minutes
        )));
    }
    if conditions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let h = conditions.step_hours();
    let series = match &model.fit {
        BaselineFit::Linear(m) => {
            let temps = resample_mean(&conditions.map(|w| w.dry_bulb_c), m.granularity)?;
            let by_bucket: BTreeMap<NaiveDate, f64> = temps.present().map(|(d, t)| (d, predict_linear(m, t))).collect();
            let key = |t: Timestamp| m.granularity.key(t.date());
            conditions.records().iter().enumerate().map(|(i, w)| {
                w.as_ref().and_then(|_| by_bucket.get(&key(conditions.timestamp_at(i))).map(|kw| kw * h))
            }).collect::<Vec<_>>()
        }
        BaselineFit::Profile(f) => {
            let tail = f.context.clone().ok_or_else(|| {
                Error::InsufficientData("profile baseline has no stored lag window".into())
            })?;
            let recent = TimeSeries::from_values(f.training_end.plus_minutes(-(tail.len() as i64) * model.step_minutes as i64), model.step_minutes, tail)?;
            if conditions.start() != f.training_end {
                return Err(Error::Misaligned(format!(
                    "profile baseline rolls forward from {} but conditions start {}",
                    f.training_end,
                    conditions.start()
                )));
            }
            let p = forecast_profile(f.as_ref(), conditions, &recent)?;
            p.records().iter().map(|v| v.map(|kw| kw * h)).collect()
        }
    };
    let interval_kwh = TimeSeries::new(conditions.start(), conditions.step_minutes(), series)?;
    let total_kwh = interval_kwh.records().iter().flatten().sum();
    Ok(AdjustedBaseline { interval_kwh, total_kwh })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsDetail {
    pub adjusted_baseline_kwh: f64,
    pub metered_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub reporting_start: Timestamp,
    pub reporting_end: Timestamp,
    pub adjusted_baseline_kwh: f64,
    pub metered_kwh: f64,
    pub avoided_kwh: f64,
    /// `None` when the adjusted baseline is not positive.
    pub savings_pct: Option<f64>,
    pub method: BaselineKind,
    pub baseline_start: Timestamp,
    pub baseline_end: Timestamp,
    pub detail: TimeSeries<SavingsDetail>,
}

impl SavingsReport {
    /// Builds a report from per-interval values; only intervals with both
    /// values present count.
    pub fn from_detail(method: BaselineKind, baseline: (Timestamp, Timestamp), detail: TimeSeries<SavingsDetail>) -> SavingsReport {
        let adjusted: f64 = detail.records().iter().flatten().map(|d| d.adjusted_baseline_kwh).sum();
        let metered: f64 = detail.records().iter().flatten().map(|d| d.metered_kwh).sum();
        let avoided = adjusted - metered;
        SavingsReport {
            reporting_start: detail.start(),
            reporting_end: detail.end(),
            adjusted_baseline_kwh: adjusted,
            metered_kwh: metered,
            avoided_kwh: avoided,
            savings_pct: (adjusted > 0.0).then(|| 100.0 * avoided / adjusted),
            method,
            baseline_start: baseline.0,
            baseline_end: baseline.1,
            detail,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Adjusted baseline minus metered energy over `reporting`.
pub fn avoided_energy(model: &BaselineModel, reporting: &TimeSeries<OperationRecord>) -> Result<SavingsReport> {
    if reporting.is_empty() {
        return Err(Error::EmptyInput);
    }
    if reporting.start() < model.period_end && model.period_start < reporting.end() {
        return Err(Error::Overlap(format!(
            "reporting {}..{} overlaps baseline {}..{}",
            reporting.start(),
            reporting.end(),
            model.period_start,
            model.period_end
        )));
    }
    if reporting.end() <= model.period_start {
        return Err(Error::Overlap(format!(
            "reporting period {}..{} precedes baseline {}..{}",
            reporting.start(),
            reporting.end(),
            model.period_start,
            model.period_end
        )));
    }
    let adj = adjusted_baseline(model, &reporting.map(|r| r.weather))?;
    let metered = interval_kwh(reporting);
    let detail = adj
        .interval_kwh
        .records()
        .iter()
        .zip(metered.records())
        .map(|(a, m)| match (a, m) {
            (Some(a), Some(m)) => Some(SavingsDetail {
                adjusted_baseline_kwh: *a,
                metered_kwh: *m,
            }),
            _ => None,
        })
        .collect();
    Ok(SavingsReport::from_detail(
        model.kind,
        (model.period_start, model.period_end),
        TimeSeries::new(reporting.start(), reporting.step_minutes(), detail)?,
    ))
}

/// Unadjusted before/after percentage.
pub fn naive_savings(baseline_energy_kwh: f64, reporting_energy_kwh: f64) -> Result<f64> {
    if !(baseline_energy_kwh > 0.0) {
        return Err(Error::OutOfRange {
            name: "baseline_energy_kwh",
            value: baseline_energy_kwh,
        });
    }
    Ok(100.0 * (baseline_energy_kwh - reporting_energy_kwh) / baseline_energy_kwh)
}

/// Naive comparison of mean daily energy in the two periods.
pub fn naive_savings_between(pre: &TimeSeries<OperationRecord>, post: &TimeSeries<OperationRecord>) -> Result<f64> {
    let per_day = |h: &TimeSeries<OperationRecord>| -> Result<f64> {
        let n = h.present_count();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let kwh: f64 = interval_kwh(h).records().iter().flatten().sum();
        Ok(kwh * h.intervals_per_day() as f64 / n as f64)
    };
    naive_savings(per_day(pre)?, per_day(post)?)
}

/// Daily and monthly linear baselines fitted on `pre`, scored on `post`.
pub fn linear_crossval(pre: &TimeSeries<OperationRecord>, post: &TimeSeries<OperationRecord>) -> Result<(f64, f64)> {
    let cfg = ForecastConfig::default();
    let mut out = [0.0; 2];
    for (slot, kind) in [BaselineKind::LinearDaily, BaselineKind::LinearMonthly].into_iter().enumerate() {
        check_coverage(post, kind)?;
        let model = fit_baseline(pre, kind, &cfg)?;
        out[slot] = avoided_energy(&model, post)?.savings_pct.ok_or_else(|| {
            Error::DegenerateReference(format!("{} adjusted baseline is not positive", kind.name()))
        })?;
    }
    Ok((out[0], out[1]))
}

/// `timestamp,adjusted_baseline_kwh,metered_kwh,avoided_kwh`.
pub fn write_detail_csv<W: Write>(report: &SavingsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "adjusted_baseline_kwh", "metered_kwh", "avoided_kwh"])?;
    for (t, d) in report.detail.iter() {
        match d {
            Some(d) => w.write_record([
                t.to_string(),
                d.adjusted_baseline_kwh.to_string(),
                d.metered_kwh.to_string(),
                (d.adjusted_baseline_kwh - d.metered_kwh).to_string(),
            ])?,
            None => w.write_record([t.to_string(), String::new(), String::new(), String::new()])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Metered kWh per calendar day.
pub fn daily_energy_kwh(history: &TimeSeries<OperationRecord>) -> Vec<(NaiveDate, f64)> {
    let mut days: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (t, v) in interval_kwh(history).iter() {
        if let Some(v) = v {
            *days.entry(t.date()).or_default() += v;
        }
    }
    days.into_iter().collect()
}

/// `date,kwh` rows as produced by [`daily_energy_kwh`].
pub fn write_daily_energy_csv<W: Write>(days: &[(NaiveDate, f64)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "kwh"])?;
    for (d, v) in days {
        w.write_record([d.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_daily_energy_csv<R: std::io::Read>(reader: R) -> Result<Vec<(NaiveDate, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "kwh"] {
        return Err(Error::InvalidSeries(format!("expected header date,kwh, got {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    r.records()
        .map(|row| {
            let row = row?;
            let d = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d")
                .map_err(|e| Error::InvalidSeries(format!("bad date {:?}: {e}", &row[0])))?;
            let v: f64 = row[1].parse().map_err(|_| Error::InvalidSeries(format!("bad kwh {:?}", &row[1])))?;
            Ok((d, v))
        })
        .collect()
}

/// Daily plot data: `date,baseline_kwh,adjusted_baseline_kwh,metered_kwh`.
/// Baseline-period rows carry the metered baseline energy (`baseline_daily`);
/// reporting rows carry the adjusted baseline and the metered energy.
pub fn write_savings_plot_csv<W: Write>(baseline_daily: &[(NaiveDate, f64)], report: &SavingsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "baseline_kwh", "adjusted_baseline_kwh", "metered_kwh"])?;
    for (d, v) in baseline_daily {
        w.write_record([d.to_string(), v.to_string(), String::new(), String::new()])?;
    }
    let mut rep: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
    for (t, d) in report.detail.iter() {
        if let Some(d) = d {
            let e = rep.entry(t.date()).or_default();
            e.0 += d.adjusted_baseline_kwh;
            e.1 += d.metered_kwh;
        }
    }
    for (d, (a, m)) in &rep {
        w.write_record([d.to_string(), String::new(), a.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{DemandModel, PlantConfig, PowerAdjustment, Scenario};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn scenario_history(days: usize, ecm: Option<PowerAdjustment>) -> TimeSeries<OperationRecord> {
        Scenario::default().history(&PlantConfig::default(), 17, days, ecm).unwrap()
    }

    fn detail(pairs: &[(f64, f64)]) -> TimeSeries<SavingsDetail> {
        TimeSeries::from_values(
            Timestamp::from_ymd_hm(2019, 10, 1, 0, 0).unwrap(),
            15,
            pairs
                .iter()
                .map(|&(a, m)| SavingsDetail {
                    adjusted_baseline_kwh: a,
                    metered_kwh: m,
                })
                .collect(),
        )
        .unwrap()
    }

    fn span() -> (Timestamp, Timestamp) {
        let t = Timestamp::from_ymd_hm(2019, 1, 1, 0, 0).unwrap();
        (t, t.plus_minutes(1440))
    }

    #[test]
    fn report_arithmetic() {
        let r = SavingsReport::from_detail(BaselineKind::LinearDaily, span(), detail(&[(600.0, 500.0), (400.0, 400.0)]));
        assert_eq!(r.adjusted_baseline_kwh, 1000.0);
        assert_eq!(r.metered_kwh, 900.0);
        assert_eq!(r.avoided_kwh, 100.0);
        assert_eq!(r.savings_pct, Some(10.0));
        let same = SavingsReport::from_detail(BaselineKind::LinearDaily, span(), detail(&[(5.0, 5.0)]));
        assert_eq!(same.savings_pct, Some(0.0));
    }

    #[test]
    fn naive_arithmetic() {
        assert_eq!(naive_savings(1000.0, 900.0).unwrap(), 10.0);
        assert_eq!(naive_savings(1000.0, 1000.0).unwrap(), 0.0);
        assert!(naive_savings(0.0, 1.0).is_err());
    }

    #[test]
    fn coverage_checks() {
        let h = scenario_history(95, None);
        let e = fit_baseline(&h, BaselineKind::LinearMonthly, &ForecastConfig::default()).unwrap_err();
        assert!(e.to_string().contains("6 months"), "{e}");
        let e = fit_baseline(&h.slice(0..50 * 96).unwrap(), BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap_err();
        assert!(e.to_string().contains("60 days"), "{e}");
        let a = fit_baseline(&h, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        assert_eq!(a, fit_baseline(&h, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap());
    }

    #[test]
    fn planted_linear_relation_is_recovered() {
        let h = scenario_history(120, None);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 40.0).unwrap();
        let planted: Vec<Option<OperationRecord>> = h
            .records()
            .iter()
            .map(|r| {
                r.clone().map(|mut r| {
                    r.output.power_kw = 12.0 * r.weather.dry_bulb_c + 300.0 + noise.sample(&mut rng);
                    r
                })
            })
            .collect();
        let planted = TimeSeries::new(h.start(), 15, planted).unwrap();
        let m = fit_baseline(&planted, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        let BaselineFit::Linear(lm) = &m.fit else { panic!() };
        assert!((lm.slope - 12.0).abs() < 0.6, "{}", lm.slope);
        assert!((lm.intercept - 300.0).abs() < 15.0, "{}", lm.intercept);
    }

    #[test]
    fn overlap_is_rejected() {
        let h = scenario_history(90, None);
        let m = fit_baseline(&h.slice(0..70 * 96).unwrap(), BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        let e = avoided_energy(&m, &h.slice(60 * 96..90 * 96).unwrap()).unwrap_err();
        assert!(e.to_string().contains("baseline/reporting overlap"), "{e}");
        let ok = avoided_energy(&m, &h.slice(70 * 96..90 * 96).unwrap()).unwrap();
        assert_eq!(ok.avoided_kwh, ok.adjusted_baseline_kwh - ok.metered_kwh);
    }

    #[test]
    fn linear_baseline_properties() {
        let h = scenario_history(120, None);
        let m = fit_baseline(&h, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        let BaselineFit::Linear(lm) = &m.fit else { panic!() };
        assert!(lm.slope > 0.0);
        // a day held at the baseline mean temperature re-states the mean
        let t = h.end();
        let w = WeatherRecord::new(lm.mean_temp, 70.0).unwrap();
        let cond = TimeSeries::from_values(t, 15, vec![w; 96]).unwrap();
        let adj = adjusted_baseline(&m, &cond).unwrap();
        assert!((adj.total_kwh / 24.0 - lm.mean_target).abs() < 1e-6 * lm.mean_target);
        let sum: f64 = adj.interval_kwh.records().iter().flatten().sum();
        assert!((sum - adj.total_kwh).abs() < 1e-9);
        // hotter than the mean means more than the mean
        let hot = TimeSeries::from_values(t, 15, vec![WeatherRecord::new(lm.mean_temp + 4.0, 70.0).unwrap(); 96]).unwrap();
        assert!(adjusted_baseline(&m, &hot).unwrap().total_kwh > m.mean_daily_kwh);
    }

    #[test]
    fn null_experiment_is_near_zero() {
        // a full year on each side so the seasonal mix matches
        let h = scenario_history(730, None);
        let pre = h.slice(0..365 * 96).unwrap();
        let post = h.slice(365 * 96..h.len()).unwrap();
        let m = fit_baseline(&pre, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        let r = avoided_energy(&m, &post).unwrap();
        assert!(r.savings_pct.unwrap().abs() < 2.0, "{:?}", r.savings_pct);
    }

    #[test]
    fn ecm_shows_positive_savings_and_exports() {
        let h = scenario_history(200, None);
        let ecm_from = h.timestamp_at(140 * 96);
        let with = Scenario::default()
            .history(&PlantConfig::default(), 17, 200, Some(PowerAdjustment { from: ecm_from, factor: 0.9 }))
            .unwrap();
        let pre = with.slice(0..140 * 96).unwrap();
        let post = with.slice(140 * 96..200 * 96).unwrap();
        let m = fit_baseline(&pre, BaselineKind::LinearDaily, &ForecastConfig::default()).unwrap();
        let r = avoided_energy(&m, &post).unwrap();
        assert!(r.avoided_kwh > 0.0);
        let mut buf = Vec::new();
        write_detail_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 60 * 96 + 1);
        let mut buf = Vec::new();
        write_savings_plot_csv(&daily_energy_kwh(&pre), &r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "date,baseline_kwh,adjusted_baseline_kwh,metered_kwh");
        assert_eq!(text.lines().count(), 200 + 1);
        let daily = daily_energy_kwh(&pre);
        let mut buf = Vec::new();
        write_daily_energy_csv(&daily, &mut buf).unwrap();
        assert_eq!(read_daily_energy_csv(buf.as_slice()).unwrap(), daily);
        let _ = DemandModel::default();
    }

    proptest! {
        #[test]
        fn scaling_metered_is_affine(pairs in prop::collection::vec((1.0f64..100.0, 0.0f64..100.0), 1..50), k in 0.0f64..3.0) {
            let r = SavingsReport::from_detail(BaselineKind::LinearDaily, span(), detail(&pairs));
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(a, m)| (a, k * m)).collect();
            let s = SavingsReport::from_detail(BaselineKind::LinearDaily, span(), detail(&scaled));
            prop_assert!((s.avoided_kwh - (r.adjusted_baseline_kwh - k * r.metered_kwh)).abs() < 1e-6 * r.adjusted_baseline_kwh);
            prop_assert_eq!(r.avoided_kwh, r.adjusted_baseline_kwh - r.metered_kwh);
        }

        #[test]
        fn strict_reduction_gives_positive_avoided(pairs in prop::collection::vec((1.0f64..100.0, 0.01f64..0.99), 1..50)) {
            let d: Vec<(f64, f64)> = pairs.iter().map(|&(a, f)| (a, a * f)).collect();
            prop_assert!(SavingsReport::from_detail(BaselineKind::LinearDaily, span(), detail(&d)).avoided_kwh > 0.0);
        }
    }
}
