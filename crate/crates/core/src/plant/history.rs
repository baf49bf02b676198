use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{legacy_policy, plant_step, synth_weather, DemandModel, PlantConfig, PlantLayout, PlantOutput, SetpointVector, WeatherProfile};
use crate::timeseries::csv_io::{fmt_opt, read_rows};
use crate::timeseries::{
    read_energy_csv, read_scalar_csv, read_weather_csv, write_energy_csv, write_scalar_csv, write_weather_csv,
    EnergyRecord, TimeSeries, Timestamp, WeatherRecord,
};
use crate::{Error, Result};

/// File names of a history export, in write order.
pub const HISTORY_FILES: [&str; 4] = ["weather.csv", "energy.csv", "setpoints.csv", "demand.csv"];

/// Extrinsic conditions of one interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub weather: WeatherRecord,
    pub cooling_demand_kw: f64,
}

/// One logged interval: what the plant saw, what it was told, what it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationRecord {
    pub timestamp: Timestamp,
    pub weather: WeatherRecord,
    pub cooling_demand_kw: f64,
    pub setpoints: SetpointVector,
    pub output: PlantOutput,
}

/// Multiplies metered power from `from` onwards (a planted efficiency measure).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAdjustment {
    pub from: Timestamp,
    pub factor: f64,
}

/// Calendar start, climate and load model of a synthetic site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub start: Timestamp,
    pub weather: WeatherProfile,
    pub demand: DemandModel,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            start: Timestamp::from_ymd_hm(2018, 3, 1, 0, 0).expect("valid date"),
            weather: WeatherProfile::default(),
            demand: DemandModel::default(),
        }
    }
}

impl Scenario {
    pub fn conditions(&self, seed: u64, n_days: usize) -> Result<TimeSeries<Conditions>> {
        let weather = synth_weather(seed, self.start, n_days, &self.weather)?;
        let demand = self.demand.generate(seed, &weather)?;
        let records = weather
            .records()
            .iter()
            .zip(demand.records())
            .map(|(w, d)| match (w, d) {
                (Some(w), Some(d)) => Some(Conditions {
                    weather: *w,
                    cooling_demand_kw: *d,
                }),
                _ => None,
            })
            .collect();
        TimeSeries::new(weather.start(), weather.step_minutes(), records)
    }

    /// Legacy-policy history.
    pub fn history(
        &self,
        config: &PlantConfig,
        seed: u64,
        n_days: usize,
        adjustment: Option<PowerAdjustment>,
    ) -> Result<TimeSeries<OperationRecord>> {
        let cond = self.conditions(seed, n_days)?;
        simulate_legacy(config, &cond, adjustment)
    }
}

/// Runs the legacy policy over `conditions`.
pub fn simulate_legacy(
    config: &PlantConfig,
    conditions: &TimeSeries<Conditions>,
    adjustment: Option<PowerAdjustment>,
) -> Result<TimeSeries<OperationRecord>> {
    let records = conditions
        .iter()
        .map(|(t, c)| {
            let Some(c) = c else { return Ok(None) };
            let setpoints = legacy_policy(config, &c.weather, c.cooling_demand_kw);
            let mut output = plant_step(config, &c.weather, &setpoints, c.cooling_demand_kw)?;
            if let Some(adj) = adjustment {
                if t >= adj.from {
                    output.power_kw *= adj.factor;
                }
            }
            Ok(Some(OperationRecord {
                timestamp: t,
                weather: c.weather,
                cooling_demand_kw: c.cooling_demand_kw,
                setpoints,
                output,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(conditions.start(), conditions.step_minutes(), records)
}

/// Legacy-policy history on the default calendar and climate.
pub fn generate_history(
    config: &PlantConfig,
    seed: u64,
    n_days: usize,
    demand_model: &DemandModel,
) -> Result<TimeSeries<OperationRecord>> {
    config.validate()?;
    let scenario = Scenario {
        demand: demand_model.clone(),
        ..Scenario::default()
    };
    scenario.history(config, seed, n_days, None)
}

/// Writes the four history CSVs into `dir` and returns their paths.
pub fn write_history_csvs(history: &TimeSeries<OperationRecord>, dir: &Path) -> Result<Vec<PathBuf>> {
    let layout = history
        .records()
        .iter()
        .flatten()
        .next()
        .map(|r| r.setpoints.layout())
        .ok_or(Error::EmptyInput)?;
    let paths: Vec<PathBuf> = HISTORY_FILES.iter().map(|f| dir.join(f)).collect();

    write_weather_csv(&history.map(|r| r.weather), BufWriter::new(File::create(&paths[0])?))?;
    write_energy_csv(
        &history.map(|r| EnergyRecord {
            power_kw: r.output.power_kw,
            cooling_kw: r.output.cooling_kw,
        }),
        BufWriter::new(File::create(&paths[1])?),
    )?;
    write_setpoints_csv(&history.map(|r| r.setpoints.clone()), layout, BufWriter::new(File::create(&paths[2])?))?;
    write_scalar_csv(
        &history.map(|r| r.cooling_demand_kw),
        "cooling_demand_kw",
        BufWriter::new(File::create(&paths[3])?),
    )?;
    Ok(paths)
}

/// `timestamp,` then one column per setpoint slot; on/off flags as 0/1.
pub fn write_setpoints_csv<W: std::io::Write>(
    series: &TimeSeries<SetpointVector>,
    layout: PlantLayout,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(layout.slot_names());
    w.write_record(&header)?;
    for (t, s) in series.iter() {
        let mut row = vec![t.to_string()];
        match s {
            Some(s) => row.extend(s.flatten().into_iter().map(|v| fmt_opt(Some(v)))),
            None => row.extend(std::iter::repeat_n(String::new(), layout.dim())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_setpoints_csv<R: std::io::Read>(mut reader: R) -> Result<TimeSeries<SetpointVector>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let header: Vec<String> = text
        .lines()
        .next()
        .ok_or(Error::EmptyInput)?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let layout = PlantLayout::from_slot_names(&header[1..])?;
    let names = layout.slot_names();
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let raw = read_rows(text.as_bytes(), &cols)?;
    let records = raw
        .records()
        .iter()
        .map(|r| match r {
            Some(v) if v.iter().all(Option::is_some) => {
                let flat: Vec<f64> = v.iter().map(|x| x.unwrap_or(0.0)).collect();
                SetpointVector::from_flat(layout, &flat).map(Some)
            }
            _ => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(raw.start(), raw.step_minutes(), records)
}

/// Reads a directory written by [`write_history_csvs`].
pub fn read_history_csvs(dir: &Path) -> Result<TimeSeries<OperationRecord>> {
    let open = |name: &str| -> Result<File> {
        File::open(dir.join(name)).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.join(name).display()))))
    };
    let weather = read_weather_csv(open(HISTORY_FILES[0])?)?;
    let energy = read_energy_csv(open(HISTORY_FILES[1])?)?;
    let setpoints = read_setpoints_csv(open(HISTORY_FILES[2])?)?;
    let demand = read_scalar_csv(open(HISTORY_FILES[3])?, "cooling_demand_kw")?;
    weather.ensure_aligned(&energy)?;
    weather.ensure_aligned(&setpoints)?;
    weather.ensure_aligned(&demand)?;
    let records = (0..weather.len())
        .map(|i| {
            Some(OperationRecord {
                timestamp: weather.timestamp_at(i),
                weather: *weather.get(i)?,
                cooling_demand_kw: *demand.get(i)?,
                setpoints: setpoints.get(i)?.clone(),
                output: {
                    let e = energy.get(i)?;
                    PlantOutput {
                        power_kw: e.power_kw,
                        cooling_kw: e.cooling_kw,
                    }
                },
            })
        })
        .collect();
    TimeSeries::new(weather.start(), weather.step_minutes(), records)
}
