//! Uniform-interval time series and the record types shared across the
//! pipeline.

pub(crate) mod csv_io;
mod metrics;
mod resample;

pub use csv_io::{
    read_energy_csv, read_scalar_csv, read_weather_csv, write_energy_csv, write_scalar_csv,
    write_weather_csv,
};
pub use metrics::{mape, mape_with, pearson, pearson_corr, MapeOptions, MapeResult};
pub use resample::{resample_mean, resample_sum, Bucket, BucketSeries, Granularity};

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default sampling interval of every series in the toolkit.
pub const DEFAULT_STEP_MINUTES: u32 = 15;

/// Calendar instant at minute resolution, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

impl Timestamp {
    pub fn from_ymd_hm(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Result<Self> {
        NaiveDate::from_ymd_opt(year, month, day)
            .and_then(|d| d.and_hms_opt(hour, minute, 0))
            .map(Timestamp)
            .ok_or_else(|| Error::InvalidSeries(format!("invalid date {year}-{month}-{day} {hour}:{minute}")))
    }

    pub fn from_datetime(dt: NaiveDateTime) -> Self {
        Timestamp(dt.with_second(0).and_then(|d| d.with_nanosecond(0)).unwrap_or(dt))
    }

    pub fn midnight(date: NaiveDate) -> Self {
        Timestamp(date.and_hms_opt(0, 0, 0).expect("midnight exists"))
    }

    pub fn datetime(&self) -> NaiveDateTime {
        self.0
    }

    pub fn date(&self) -> NaiveDate {
        self.0.date()
    }

    pub fn minute_of_day(&self) -> u32 {
        self.0.hour() * 60 + self.0.minute()
    }

    /// Monday..Friday.
    pub fn is_weekday(&self) -> bool {
        self.0.weekday().number_from_monday() <= 5
    }

    pub fn plus_minutes(&self, minutes: i64) -> Self {
        Timestamp(self.0 + Duration::minutes(minutes))
    }

    pub fn minutes_since(&self, earlier: &Timestamp) -> i64 {
        (self.0 - earlier.0).num_minutes()
    }

    pub fn is_aligned(&self, step_minutes: u32) -> bool {
        step_minutes > 0 && self.0.minute() % step_minutes == 0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl FromStr for Timestamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let trimmed = s.strip_suffix('Z').unwrap_or(s);
        let trimmed = trimmed.strip_suffix("+00:00").unwrap_or(trimmed);
        for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(trimmed, fmt) {
                return Ok(Timestamp::from_datetime(dt));
            }
        }
        Err(Error::InvalidSeries(format!("unparseable timestamp {s:?}")))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Uniformly sampled series. Missing intervals are `None`, never skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<R> {
    start: Timestamp,
    step_minutes: u32,
    records: Vec<Option<R>>,
}

impl<R> TimeSeries<R> {
    pub fn new(start: Timestamp, step_minutes: u32, records: Vec<Option<R>>) -> Result<Self> {
        if step_minutes == 0 || 60 % step_minutes != 0 {
            return Err(Error::InvalidSeries(format!("step {step_minutes} min does not divide 60")));
        }
        if !start.is_aligned(step_minutes) {
            return Err(Error::InvalidSeries(format!("start {start} not aligned to {step_minutes} min")));
        }
        Ok(TimeSeries {
            start,
            step_minutes,
            records,
        })
    }

    pub fn from_values(start: Timestamp, step_minutes: u32, values: Vec<R>) -> Result<Self> {
        Self::new(start, step_minutes, values.into_iter().map(Some).collect())
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    /// Exclusive end: the timestamp one step after the last record.
    pub fn end(&self) -> Timestamp {
        self.timestamp_at(self.records.len())
    }

    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    pub fn intervals_per_day(&self) -> usize {
        (1440 / self.step_minutes) as usize
    }

    pub fn step_hours(&self) -> f64 {
        self.step_minutes as f64 / 60.0
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Option<R>] {
        &self.records
    }

    pub fn get(&self, i: usize) -> Option<&R> {
        self.records.get(i).and_then(Option::as_ref)
    }

    pub fn present_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_some()).count()
    }

    pub fn timestamp_at(&self, i: usize) -> Timestamp {
        self.start.plus_minutes(i as i64 * self.step_minutes as i64)
    }

    pub fn index_of(&self, t: Timestamp) -> Option<usize> {
        let m = t.minutes_since(&self.start);
        if m < 0 || m % self.step_minutes as i64 != 0 {
            return None;
        }
        let i = (m / self.step_minutes as i64) as usize;
        (i < self.records.len()).then_some(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Timestamp, Option<&R>)> + '_ {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (self.timestamp_at(i), r.as_ref()))
    }

    pub fn push(&mut self, record: Option<R>) {
        self.records.push(record);
    }

    pub fn map<S>(&self, f: impl Fn(&R) -> S) -> TimeSeries<S> {
        TimeSeries {
            start: self.start,
            step_minutes: self.step_minutes,
            records: self.records.iter().map(|r| r.as_ref().map(&f)).collect(),
        }
    }

    /// Same start, step and length.
    pub fn is_aligned_with<S>(&self, other: &TimeSeries<S>) -> bool {
        self.start == other.start && self.step_minutes == other.step_minutes && self.len() == other.len()
    }

    pub fn ensure_aligned<S>(&self, other: &TimeSeries<S>) -> Result<()> {
        if self.is_aligned_with(other) {
            Ok(())
        } else {
            Err(Error::Misaligned(format!(
                "({}, {} min, n={}) vs ({}, {} min, n={})",
                self.start,
                self.step_minutes,
                self.len(),
                other.start,
                other.step_minutes,
                other.len()
            )))
        }
    }

    /// Overlap of the half-open spans `[start, end)`.
    pub fn overlaps<S>(&self, other: &TimeSeries<S>) -> bool {
        !self.is_empty() && !other.is_empty() && self.start < other.end() && other.start < self.end()
    }
}

impl<R: Clone> TimeSeries<R> {
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.records.len() {
            return Err(Error::InvalidSeries(format!(
                "slice {:?} out of bounds for length {}",
                range,
                self.records.len()
            )));
        }
        Ok(TimeSeries {
            start: self.timestamp_at(range.start),
            step_minutes: self.step_minutes,
            records: self.records[range].to_vec(),
        })
    }

    /// Records in `[from, to)`, clipped to the series span.
    pub fn between(&self, from: Timestamp, to: Timestamp) -> Result<Self> {
        let step = self.step_minutes as i64;
        let lo = (from.minutes_since(&self.start).max(0) + step - 1) / step;
        let hi = (to.minutes_since(&self.start).max(0) + step - 1) / step;
        let lo = (lo as usize).min(self.len());
        let hi = (hi as usize).clamp(lo, self.len());
        self.slice(lo..hi)
    }

    /// Appends a series that starts exactly where this one ends.
    pub fn concat(&self, other: &TimeSeries<R>) -> Result<Self> {
        if other.step_minutes != self.step_minutes || other.start != self.end() {
            return Err(Error::Misaligned(format!(
                "cannot append series starting {} to series ending {}",
                other.start,
                self.end()
            )));
        }
        let mut out = self.clone();
        out.records.extend(other.records.iter().cloned());
        Ok(out)
    }
}

/// Outdoor conditions for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub dry_bulb_c: f64,
    pub rel_humidity_pct: f64,
    pub wet_bulb_c: f64,
}

impl WeatherRecord {
    /// Builds a record, deriving the wet-bulb temperature.
    pub fn new(dry_bulb_c: f64, rel_humidity_pct: f64) -> Result<Self> {
        if !dry_bulb_c.is_finite() {
            return Err(Error::OutOfRange {
                name: "dry_bulb_c",
                value: dry_bulb_c,
            });
        }
        if !(0.0..=100.0).contains(&rel_humidity_pct) {
            return Err(Error::OutOfRange {
                name: "rel_humidity_pct",
                value: rel_humidity_pct,
            });
        }
        Ok(WeatherRecord {
            dry_bulb_c,
            rel_humidity_pct,
            wet_bulb_c: wet_bulb_stull(dry_bulb_c, rel_humidity_pct),
        })
    }
}

/// Stull (2011) empirical wet-bulb temperature, capped at the dry bulb.
pub fn wet_bulb_stull(dry_bulb_c: f64, rel_humidity_pct: f64) -> f64 {
    let t = dry_bulb_c;
    let rh = rel_humidity_pct;
    let tw = t * (0.151977 * (rh + 8.313659).sqrt()).atan() + (t + rh).atan() - (rh - 1.676331).atan()
        + 0.00391838 * rh.powf(1.5) * (0.023101 * rh).atan()
        - 4.686035;
    tw.min(t)
}

/// Metered plant energy state for one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub power_kw: f64,
    pub cooling_kw: f64,
}

impl EnergyRecord {
    pub fn new(power_kw: f64, cooling_kw: f64) -> Result<Self> {
        let rec = EnergyRecord { power_kw, cooling_kw };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.power_kw.is_finite() || self.power_kw < 0.0 {
            return Err(Error::OutOfRange {
                name: "power_kw",
                value: self.power_kw,
            });
        }
        if !self.cooling_kw.is_finite() || self.cooling_kw < 0.0 {
            return Err(Error::OutOfRange {
                name: "cooling_kw",
                value: self.cooling_kw,
            });
        }
        if self.power_kw > 0.0 && self.cooling_kw / self.power_kw > 12.0 {
            return Err(Error::OutOfRange {
                name: "instantaneous COP",
                value: self.cooling_kw / self.power_kw,
            });
        }
        Ok(())
    }
}

/// Calendar month key, used by monthly aggregation.
pub(crate) fn month_start(date: NaiveDate) -> NaiveDate {
    NaiveDate::from_ymd_opt(date.year(), date.month(), 1).expect("first of month")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t0() -> Timestamp {
        Timestamp::from_ymd_hm(2019, 6, 1, 0, 0).unwrap()
    }

    #[test]
    fn timestamp_round_trips_iso() {
        let t = Timestamp::from_ymd_hm(2018, 3, 1, 13, 45).unwrap();
        assert_eq!(t.to_string(), "2018-03-01T13:45:00Z");
        assert_eq!("2018-03-01T13:45:00Z".parse::<Timestamp>().unwrap(), t);
        assert_eq!("2018-03-01 13:45".parse::<Timestamp>().unwrap(), t);
        assert!("yesterday".parse::<Timestamp>().is_err());
    }

    #[test]
    fn series_rejects_bad_step_and_alignment() {
        assert!(TimeSeries::<f64>::new(t0(), 7, vec![]).is_err());
        let off = Timestamp::from_ymd_hm(2019, 6, 1, 0, 10).unwrap();
        assert!(TimeSeries::<f64>::new(off, 15, vec![]).is_err());
        assert!(TimeSeries::<f64>::new(off, 5, vec![]).is_ok());
    }

    #[test]
    fn index_and_span_bookkeeping() {
        let s = TimeSeries::from_values(t0(), 15, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.end(), t0().plus_minutes(60));
        assert_eq!(s.index_of(t0().plus_minutes(30)), Some(2));
        assert_eq!(s.index_of(t0().plus_minutes(31)), None);
        assert_eq!(s.index_of(t0().plus_minutes(60)), None);
        let tail = s.between(t0().plus_minutes(20), t0().plus_minutes(600)).unwrap();
        assert_eq!(tail.records(), &[Some(3.0), Some(4.0)]);
        let joined = s.slice(0..2).unwrap().concat(&s.slice(2..4).unwrap()).unwrap();
        assert_eq!(joined, s);
        assert!(s.slice(0..1).unwrap().concat(&s.slice(2..4).unwrap()).is_err());
    }

    #[test]
    fn wet_bulb_is_deterministic_and_bounded() {
        // Stull's published check value: 20 °C, 50% RH -> 13.7 °C.
        let w = WeatherRecord::new(20.0, 50.0).unwrap();
        assert!((w.wet_bulb_c - 13.7).abs() < 0.1, "{}", w.wet_bulb_c);
        for rh in [30.0, 60.0, 90.0, 100.0] {
            for t in [5.0, 15.0, 25.0, 38.0] {
                let w = WeatherRecord::new(t, rh).unwrap();
                assert!(w.wet_bulb_c <= w.dry_bulb_c);
            }
        }
        assert!(WeatherRecord::new(20.0, 120.0).is_err());
    }

    #[test]
    fn energy_record_rejects_unphysical_cop() {
        assert!(EnergyRecord::new(100.0, 500.0).is_ok());
        assert!(EnergyRecord::new(10.0, 500.0).is_err());
        assert!(EnergyRecord::new(-1.0, 0.0).is_err());
        assert!(EnergyRecord::new(0.0, 0.0).is_ok());
    }
}
