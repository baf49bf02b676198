//! Holistic plant surrogate: one network from (setpoints, weather, load) to
//! (power, cooling), with a per-input min/max box of what it was trained on.

use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::plant::{OperationRecord, PlantLayout, PlantModel, PlantOutput, SetpointVector};
use crate::regressor::{Regressor, TrainConfig, TrainReport};
use crate::timeseries::{mape, MapeResult, TimeSeries, Timestamp, WeatherRecord};
use crate::{persist, Error, Result};

/// Inputs beyond the setpoint slots.
pub const CONTEXT_INPUTS: [&str; 3] = ["dry_bulb_c", "wet_bulb_c", "cooling_demand_kw"];

/// Per-input bounds seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DomainSummary {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DomainSummary> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        Ok(DomainSummary { min, max })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub layout: PlantLayout,
    pub input_names: Vec<String>,
    pub regressor: Regressor,
    pub domain: DomainSummary,
    /// Inputs that were constant in training (kept, but uninformative).
    pub degenerate_inputs: Vec<String>,
    /// Half-open spans of the records trained on.
    pub training_spans: Vec<(Timestamp, Timestamp)>,
    pub train_report: TrainReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMetrics {
    pub power_mape: MapeResult,
    pub cooling_mape: MapeResult,
    pub ood_fraction: f64,
    pub n_points: usize,
}

const FORMAT: &str = "chillopt.surrogate";
const FORMAT_VERSION: u32 = 1;

/// Canonical setpoint slots followed by [`CONTEXT_INPUTS`].
pub fn featurize(setpoints: &SetpointVector, weather: &WeatherRecord, cooling_demand_kw: f64) -> Vec<f64> {
    let mut x = setpoints.canonical().flatten();
    x.extend([weather.dry_bulb_c, weather.wet_bulb_c, cooling_demand_kw]);
    x
}

fn record_features(r: &OperationRecord) -> Vec<f64> {
    featurize(&r.setpoints, &r.weather, r.cooling_demand_kw)
}

pub fn train_surrogate(history: &TimeSeries<OperationRecord>, cfg: &TrainConfig) -> Result<SurrogateModel> {
    train_surrogate_augmented(history, None, cfg)
}

/// Trains from scratch on `history` plus `augmentation` repeated
/// `repeats` times, so a short window of new patterns is not swamped.
pub fn train_surrogate_augmented(
    history: &TimeSeries<OperationRecord>,
    augmentation: Option<(&TimeSeries<OperationRecord>, usize)>,
    cfg: &TrainConfig,
) -> Result<SurrogateModel> {
    let days = history.present_count() / history.intervals_per_day().max(1);
    if days < 60 {
        return Err(Error::InsufficientData(format!(
            "surrogate needs at least 60 days of records, got {days}"
        )));
    }
    let mut records: Vec<&OperationRecord> = history.records().iter().flatten().collect();
    let mut spans = vec![(history.start(), history.end())];
    if let Some((aug, repeats)) = augmentation {
        if !aug.is_empty() {
            spans.push((aug.start(), aug.end()));
            for _ in 0..repeats.max(1) {
                records.extend(aug.records().iter().flatten());
            }
        }
    }
    let layout = records[0].setpoints.layout();
    if let Some(bad) = records.iter().find(|r| r.setpoints.layout() != layout) {
        return Err(Error::DimensionMismatch {
            expected: layout.dim(),
            got: bad.setpoints.layout().dim(),
        });
    }
    let xs: Vec<Vec<f64>> = records.iter().map(|r| record_features(r)).collect();
    let ys: Vec<Vec<f64>> = records.iter().map(|r| vec![r.output.power_kw, r.output.cooling_kw]).collect();
    let (regressor, train_report) = Regressor::train(&xs, &ys, cfg)?;

    let mut input_names = layout.slot_names();
    input_names.extend(CONTEXT_INPUTS.iter().map(|s| s.to_string()));
    let degenerate_inputs = regressor
        .x_norm
        .constant_columns(&xs)
        .into_iter()
        .map(|j| input_names[j].clone())
        .collect();
    Ok(SurrogateModel {
        layout,
        input_names,
        domain: DomainSummary::from_rows(&xs)?,
        regressor,
        degenerate_inputs,
        training_spans: spans,
        train_report,
    })
}

impl SurrogateModel {
    pub fn predict(&self, setpoints: &SetpointVector, weather: &WeatherRecord, cooling_demand_kw: f64) -> Result<PlantOutput> {
        if setpoints.layout() != self.layout {
            return Err(Error::DimensionMismatch {
                expected: self.layout.dim(),
                got: setpoints.layout().dim(),
            });
        }
        let y = self.regressor.predict(&featurize(setpoints, weather, cooling_demand_kw))?;
        Ok(PlantOutput {
            power_kw: y[0].max(0.0),
            cooling_kw: y[1].max(0.0),
        })
    }

    pub fn in_domain(&self, setpoints: &SetpointVector, weather: &WeatherRecord, cooling_demand_kw: f64) -> bool {
        self.domain.contains(&featurize(setpoints, weather, cooling_demand_kw))
    }

    /// True when any training span overlaps `[from, to)`.
    pub fn trained_on(&self, from: Timestamp, to: Timestamp) -> bool {
        self.training_spans.iter().any(|(a, b)| *a < to && from < *b)
    }

    pub fn to_json(&self) -> Result<String> {
        persist::to_json(FORMAT, FORMAT_VERSION, self)
    }

    pub fn from_json(text: &str) -> Result<SurrogateModel> {
        persist::from_json(FORMAT, FORMAT_VERSION, text)
    }
}

impl PlantModel for SurrogateModel {
    fn layout(&self) -> PlantLayout {
        self.layout
    }

    fn evaluate(&self, setpoints: &SetpointVector, weather: &WeatherRecord, cooling_demand_kw: f64) -> Result<PlantOutput> {
        self.predict(setpoints, weather, cooling_demand_kw)
    }
}

pub fn predict(
    model: &SurrogateModel,
    setpoints: &SetpointVector,
    weather: &WeatherRecord,
    cooling_demand_kw: f64,
) -> Result<PlantOutput> {
    model.predict(setpoints, weather, cooling_demand_kw)
}

/// Day-first MAPE on both outputs, plus the share of rows with any input
/// outside the training box.
pub fn evaluate_surrogate(model: &SurrogateModel, test: &TimeSeries<OperationRecord>) -> Result<SurrogateMetrics> {
    if test.present_count() == 0 {
        return Err(Error::EmptyInput);
    }
    let preds = ExecMode::default().map(test.records(), |r| -> Result<Option<(PlantOutput, bool)>> {
        let Some(r) = r else { return Ok(None) };
        let x = record_features(r);
        let p = model.predict(&r.setpoints, &r.weather, r.cooling_demand_kw)?;
        Ok(Some((p, !model.domain.contains(&x))))
    });
    let preds = preds.into_iter().collect::<Result<Vec<_>>>()?;
    let n_points = preds.iter().flatten().count();
    let ood = preds.iter().flatten().filter(|p| p.1).count();
    let series = |v: Vec<Option<f64>>| TimeSeries::new(test.start(), test.step_minutes(), v);
    let pred_power = series(preds.iter().map(|p| p.map(|p| p.0.power_kw)).collect())?;
    let pred_cool = series(preds.iter().map(|p| p.map(|p| p.0.cooling_kw)).collect())?;
    Ok(SurrogateMetrics {
        power_mape: mape(&test.map(|r| r.output.power_kw), &pred_power)?,
        cooling_mape: mape(&test.map(|r| r.output.cooling_kw), &pred_cool)?,
        ood_fraction: ood as f64 / n_points as f64,
        n_points,
    })
}
