use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{month_start, TimeSeries};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Daily,
    Monthly,
}

impl Granularity {
    pub fn key(self, date: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Daily => date,
            Granularity::Monthly => month_start(date),
        }
    }
}

/// One calendar bucket. `value` is `None` when no present record fell in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub start: NaiveDate,
    pub value: Option<f64>,
    /// Present records that contributed.
    pub count: usize,
    /// Slots of the source series that fell in the bucket, present or not.
    pub slots: usize,
}

/// Calendar-aggregated series: one bucket per day or month, in order, with
/// no gaps between the first and last bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketSeries {
    pub granularity: Granularity,
    pub buckets: Vec<Bucket>,
}

impl BucketSeries {
    pub fn values(&self) -> Vec<Option<f64>> {
        self.buckets.iter().map(|b| b.value).collect()
    }

    pub fn present(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.buckets.iter().filter_map(|b| b.value.map(|v| (b.start, v)))
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Re-aggregates by mean of present bucket values. Same granularity is
    /// the identity; monthly -> daily is refused.
    pub fn resample_mean(&self, granularity: Granularity) -> Result<BucketSeries> {
        if self.buckets.is_empty() {
            return Err(Error::EmptyInput);
        }
        match (self.granularity, granularity) {
            (a, b) if a == b => Ok(self.clone()),
            (Granularity::Monthly, Granularity::Daily) => Err(Error::InvalidSeries(
                "cannot resample monthly buckets to daily".into(),
            )),
            _ => {
                let items = self.buckets.iter().map(|b| (b.start, b.value));
                Ok(aggregate(items, granularity, Agg::Mean))
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Agg {
    Mean,
    Sum,
}

fn aggregate(
    items: impl Iterator<Item = (NaiveDate, Option<f64>)>,
    granularity: Granularity,
    agg: Agg,
) -> BucketSeries {
    let mut acc: BTreeMap<NaiveDate, (f64, usize, usize)> = BTreeMap::new();
    for (date, value) in items {
        let e = acc.entry(granularity.key(date)).or_insert((0.0, 0, 0));
        e.2 += 1;
        if let Some(v) = value {
            e.0 += v;
            e.1 += 1;
        }
    }
    let buckets = acc
        .into_iter()
        .map(|(start, (sum, count, slots))| Bucket {
            start,
            value: (count > 0).then(|| match agg {
                Agg::Mean => sum / count as f64,
                Agg::Sum => sum,
            }),
            count,
            slots,
        })
        .collect();
    BucketSeries { granularity, buckets }
}

/// Arithmetic mean of present records per calendar day or month.
pub fn resample_mean(series: &TimeSeries<f64>, granularity: Granularity) -> Result<BucketSeries> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    let items = series.iter().map(|(t, v)| (t.date(), v.copied()));
    Ok(aggregate(items, granularity, Agg::Mean))
}

/// Sum of present records per calendar day or month.
pub fn resample_sum(series: &TimeSeries<f64>, granularity: Granularity) -> Result<BucketSeries> {
    if series.is_empty() {
        return Err(Error::EmptyInput);
    }
    let items = series.iter().map(|(t, v)| (t.date(), v.copied()));
    Ok(aggregate(items, granularity, Agg::Sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Timestamp;
    use proptest::prelude::*;

    fn day_start() -> Timestamp {
        Timestamp::from_ymd_hm(2019, 3, 4, 0, 0).unwrap()
    }

    #[test]
    fn constant_day_averages_to_constant() {
        let s = TimeSeries::from_values(day_start(), 15, vec![5.0; 96]).unwrap();
        let d = resample_mean(&s, Granularity::Daily).unwrap();
        assert_eq!(d.values(), vec![Some(5.0)]);
    }

    #[test]
    fn mean_of_one_to_ninety_six() {
        let s = TimeSeries::from_values(day_start(), 15, (1..=96).map(f64::from).collect()).unwrap();
        let d = resample_mean(&s, Granularity::Daily).unwrap();
        assert_eq!(d.values(), vec![Some(48.5)]);
    }

    #[test]
    fn two_days_in_one_month() {
        let mut v = vec![10.0; 96];
        v.extend(vec![20.0; 96]);
        let s = TimeSeries::from_values(day_start(), 15, v).unwrap();
        let m = resample_mean(&s, Granularity::Monthly).unwrap();
        assert_eq!(m.values(), vec![Some(15.0)]);
        assert_eq!(m.buckets[0].start, NaiveDate::from_ymd_opt(2019, 3, 1).unwrap());
    }

    #[test]
    fn absent_bucket_is_marked_not_dropped() {
        let mut recs = vec![Some(1.0); 96];
        recs.extend(vec![None; 96]);
        recs.extend(vec![Some(3.0); 96]);
        let s = TimeSeries::new(day_start(), 15, recs).unwrap();
        let d = resample_mean(&s, Granularity::Daily).unwrap();
        assert_eq!(d.values(), vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(d.buckets[1].slots, 96);
        let sums = resample_sum(&s, Granularity::Daily).unwrap();
        assert_eq!(sums.values(), vec![Some(96.0), None, Some(288.0)]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let s = TimeSeries::<f64>::new(day_start(), 15, vec![]).unwrap();
        assert_eq!(
            resample_mean(&s, Granularity::Daily).unwrap_err().to_string(),
            "empty input"
        );
    }

    proptest! {
        #[test]
        fn resampling_is_idempotent(
            values in prop::collection::vec(prop::option::weighted(0.9, -50.0f64..50.0), 1..800),
            monthly in any::<bool>(),
        ) {
            let g = if monthly { Granularity::Monthly } else { Granularity::Daily };
            let start = Timestamp::from_ymd_hm(2019, 1, 30, 12, 0).unwrap();
            let s = TimeSeries::new(start, 15, values).unwrap();
            let once = resample_mean(&s, g).unwrap();
            let twice = once.resample_mean(g).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
