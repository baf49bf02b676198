//! CSV formats: one row per interval, ISO-8601 timestamps, absent values as
//! empty fields.
//!
//! | file    | header                                  |
//! |---------|-----------------------------------------|
//! | weather | `timestamp,dry_bulb_c,rel_humidity_pct` |
//! | energy  | `timestamp,power_kw,cooling_kw`         |
//! | scalar  | `timestamp,<name>`                      |

use std::io::{Read, Write};

use super::{EnergyRecord, TimeSeries, Timestamp, WeatherRecord, DEFAULT_STEP_MINUTES};
use crate::{Error, Result};

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn parse_opt(field: &str, column: &str, line: usize) -> Result<Option<f64>> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::InvalidSeries(format!("line {line}: column {column}: not a number: {field:?}")))
}

/// Reads rows of `timestamp,<columns...>` into a uniform series of optional
/// value vectors. The step is inferred from the first two rows.
pub(crate) fn read_rows<R: Read>(reader: R, columns: &[&str]) -> Result<TimeSeries<Vec<Option<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("timestamp").chain(columns.iter().copied()).collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::InvalidSeries(format!(
            "header {:?}, expected {:?}",
            got.join(","),
            expected.join(",")
        )));
    }

    let mut stamps = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let t: Timestamp = rec[0].parse()?;
        let vals = columns
            .iter()
            .enumerate()
            .map(|(j, c)| parse_opt(&rec[j + 1], c, line))
            .collect::<Result<Vec<_>>>()?;
        stamps.push(t);
        rows.push(vals);
    }
    let Some(&start) = stamps.first() else {
        return Err(Error::EmptyInput);
    };
    let step = if stamps.len() > 1 {
        stamps[1].minutes_since(&stamps[0])
    } else {
        DEFAULT_STEP_MINUTES as i64
    };
    if step <= 0 || 60 % step != 0 {
        return Err(Error::InvalidSeries(format!("timestamps must be strictly increasing with a step dividing 60; got {step} min")));
    }
    for (i, w) in stamps.windows(2).enumerate() {
        if w[1].minutes_since(&w[0]) != step {
            return Err(Error::InvalidSeries(format!(
                "gap or irregular step between {} and {} (row {}); absent values must be empty fields",
                w[0],
                w[1],
                i + 3
            )));
        }
    }
    let records = rows
        .into_iter()
        .map(|v| if v.iter().all(Option::is_none) { None } else { Some(v) })
        .collect();
    TimeSeries::new(start, step as u32, records)
}

fn write_rows<W: Write>(
    writer: W,
    columns: &[&str],
    start: Timestamp,
    step: u32,
    rows: impl Iterator<Item = Vec<Option<f64>>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = std::iter::once("timestamp").chain(columns.iter().copied()).collect();
    w.write_record(&header)?;
    for (i, row) in rows.enumerate() {
        let t = start.plus_minutes(i as i64 * step as i64);
        let mut fields = vec![t.to_string()];
        fields.extend(row.into_iter().map(fmt_opt));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

const WEATHER_COLUMNS: [&str; 2] = ["dry_bulb_c", "rel_humidity_pct"];
const ENERGY_COLUMNS: [&str; 2] = ["power_kw", "cooling_kw"];

pub fn write_weather_csv<W: Write>(series: &TimeSeries<WeatherRecord>, writer: W) -> Result<()> {
    let rows = series.records().iter().map(|r| match r {
        Some(w) => vec![Some(w.dry_bulb_c), Some(w.rel_humidity_pct)],
        None => vec![None, None],
    });
    write_rows(writer, &WEATHER_COLUMNS, series.start(), series.step_minutes(), rows)
}

/// A row with either field missing is read as an absent record.
pub fn read_weather_csv<R: Read>(reader: R) -> Result<TimeSeries<WeatherRecord>> {
    let raw = read_rows(reader, &WEATHER_COLUMNS)?;
    let records = raw
        .records()
        .iter()
        .map(|r| match r.as_deref() {
            Some([Some(t), Some(rh)]) => WeatherRecord::new(*t, *rh).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(raw.start(), raw.step_minutes(), records)
}

pub fn write_energy_csv<W: Write>(series: &TimeSeries<EnergyRecord>, writer: W) -> Result<()> {
    let rows = series.records().iter().map(|r| match r {
        Some(e) => vec![Some(e.power_kw), Some(e.cooling_kw)],
        None => vec![None, None],
    });
    write_rows(writer, &ENERGY_COLUMNS, series.start(), series.step_minutes(), rows)
}

pub fn read_energy_csv<R: Read>(reader: R) -> Result<TimeSeries<EnergyRecord>> {
    let raw = read_rows(reader, &ENERGY_COLUMNS)?;
    let records = raw
        .records()
        .iter()
        .map(|r| match r.as_deref() {
            Some([Some(p), Some(c)]) => EnergyRecord::new(*p, *c).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(raw.start(), raw.step_minutes(), records)
}

pub fn write_scalar_csv<W: Write>(series: &TimeSeries<f64>, column: &str, writer: W) -> Result<()> {
    let rows = series.records().iter().map(|r| vec![*r]);
    write_rows(writer, &[column], series.start(), series.step_minutes(), rows)
}

pub fn read_scalar_csv<R: Read>(reader: R, column: &str) -> Result<TimeSeries<f64>> {
    let raw = read_rows(reader, &[column])?;
    Ok(TimeSeries::new(
        raw.start(),
        raw.step_minutes(),
        raw.records().iter().map(|r| r.as_ref().and_then(|v| v[0])).collect(),
    )?)
}
