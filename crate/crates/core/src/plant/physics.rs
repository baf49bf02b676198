//! Quasi-static device models and the whole-plant step.
//!
//! - pumps and fans follow the cube affinity law;
//! - chiller COP = design COP × part-load factor × (design lift / lift),
//!   capped at `cop_clamp_factor × design COP`;
//! - tower approach shrinks linearly with fan speed above a floor;
//! - lift = condenser water temperature − chilled water setpoint, plus a
//!   penalty proportional to chilled-water loading (cooling ÷ pump flow).

use serde::{Deserialize, Serialize};

use super::{PlantConfig, SetpointVector};
use crate::timeseries::WeatherRecord;
use crate::{Error, Result};

/// Heat rejected at the towers per unit of cooling delivered.
pub const HEAT_REJECTION_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantOutput {
    pub power_kw: f64,
    pub cooling_kw: f64,
}

impl PlantOutput {
    pub fn cop(&self) -> Option<f64> {
        (self.power_kw > 0.0 && self.cooling_kw > 0.0).then(|| self.cooling_kw / self.power_kw)
    }
}

pub fn pump_power(rated_power_kw: f64, speed_frac: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&speed_frac) {
        return Err(Error::OutOfRange {
            name: "speed_frac",
            value: speed_frac,
        });
    }
    Ok(rated_power_kw * speed_frac.powi(3))
}

/// Electrical input of chiller `idx` at part-load ratio `plr` and lift `lift_c`.
pub fn chiller_power(config: &PlantConfig, idx: usize, plr: f64, lift_c: f64) -> Result<f64> {
    let ch = config.chillers.get(idx).ok_or(Error::DimensionMismatch {
        expected: config.chillers.len(),
        got: idx + 1,
    })?;
    if plr > 1.0 {
        return Err(Error::Overloaded(plr));
    }
    if !(plr > 0.0) {
        return Err(Error::OutOfRange { name: "plr", value: plr });
    }
    if !(lift_c > 0.0) {
        return Err(Error::OutOfRange {
            name: "lift_c",
            value: lift_c,
        });
    }
    let [a, b, c] = ch.part_load_coeffs;
    let part_load = a + b * plr + c * plr * plr;
    let cop = (ch.design_cop * part_load * (config.design_lift_c / lift_c)).min(config.cop_clamp_factor * ch.design_cop);
    Ok(plr * ch.rated_cooling_kw / cop)
}

fn approach(config: &PlantConfig, idx: usize, fan_frac: f64, loading: f64) -> f64 {
    let t = &config.towers[idx];
    (t.design_approach_c * loading * (1.0 - 0.6 * fan_frac)).max(config.approach_floor_c)
}

/// Condenser water leaving tower `idx` at design heat load.
pub fn tower_outlet_temp(
    config: &PlantConfig,
    idx: usize,
    condenser_inlet_c: f64,
    wet_bulb_c: f64,
    fan_frac: f64,
) -> Result<f64> {
    if idx >= config.towers.len() {
        return Err(Error::DimensionMismatch {
            expected: config.towers.len(),
            got: idx + 1,
        });
    }
    if condenser_inlet_c <= wet_bulb_c {
        return Err(Error::Thermodynamics(format!(
            "condenser inlet {condenser_inlet_c} °C not above wet bulb {wet_bulb_c} °C"
        )));
    }
    if !(0.0..=1.0).contains(&fan_frac) {
        return Err(Error::OutOfRange {
            name: "fan_frac",
            value: fan_frac,
        });
    }
    Ok(wet_bulb_c + approach(config, idx, fan_frac, 1.0))
}

/// Per-device terms behind a [`PlantOutput`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantBreakdown {
    pub output: PlantOutput,
    pub chiller_kw: Vec<f64>,
    pub pump_kw: Vec<f64>,
    pub fan_kw: Vec<f64>,
    pub plr: f64,
    pub lift_c: Vec<f64>,
    pub condenser_water_c: f64,
    /// Cooling delivered ÷ online pump flow capacity.
    pub flow_loading: f64,
    /// Heat rejected ÷ online tower capacity.
    pub tower_loading: f64,
}

pub fn plant_step(
    config: &PlantConfig,
    weather: &WeatherRecord,
    setpoints: &SetpointVector,
    cooling_demand_kw: f64,
) -> Result<PlantOutput> {
    plant_step_detailed(config, weather, setpoints, cooling_demand_kw).map(|b| b.output)
}

pub fn plant_step_detailed(
    config: &PlantConfig,
    weather: &WeatherRecord,
    setpoints: &SetpointVector,
    cooling_demand_kw: f64,
) -> Result<PlantBreakdown> {
    if !(cooling_demand_kw >= 0.0) || !cooling_demand_kw.is_finite() {
        return Err(Error::OutOfRange {
            name: "cooling_demand_kw",
            value: cooling_demand_kw,
        });
    }
    setpoints.validate(config.layout())?;

    let pump_kw = config
        .pumps
        .iter()
        .zip(setpoints.pump_on.iter().zip(&setpoints.pump_speed_frac))
        .map(|(p, (&on, &s))| if on { pump_power(p.rated_power_kw, s) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;
    let fan_kw: Vec<f64> = config
        .towers
        .iter()
        .zip(setpoints.tower_on.iter().zip(&setpoints.tower_fan_frac))
        .map(|(t, (&on, &f))| if on { t.rated_fan_kw * f.powi(3) } else { 0.0 })
        .collect();
    let parasitic: f64 = pump_kw.iter().sum::<f64>() + fan_kw.iter().sum::<f64>();
    let mut chiller_kw = vec![0.0; config.chillers.len()];
    let mut lift_c = vec![0.0; config.chillers.len()];

    let capacity = setpoints.online_capacity_kw(config);
    let cooling = if setpoints.can_serve() { cooling_demand_kw.min(capacity) } else { 0.0 };
    if cooling <= 0.0 {
        return Ok(PlantBreakdown {
            output: PlantOutput {
                power_kw: parasitic,
                cooling_kw: 0.0,
            },
            chiller_kw,
            pump_kw,
            fan_kw,
            plr: 0.0,
            lift_c,
            condenser_water_c: weather.wet_bulb_c,
            flow_loading: 0.0,
            tower_loading: 0.0,
        });
    }

    let plr = cooling / capacity;
    let flow: f64 = config
        .pumps
        .iter()
        .zip(setpoints.pump_on.iter().zip(&setpoints.pump_speed_frac))
        .filter(|(_, (&on, _))| on)
        .map(|(p, (_, &s))| p.rated_flow_kw * s)
        .sum();
    let flow_loading = cooling / flow;

    let on_towers: Vec<usize> = (0..config.towers.len()).filter(|&i| setpoints.tower_on[i]).collect();
    let rejection_capacity: f64 = on_towers.iter().map(|&i| config.towers[i].rated_rejection_kw).sum();
    let tower_loading = HEAT_REJECTION_FACTOR * cooling / rejection_capacity;
    let condenser_water_c = weather.wet_bulb_c
        + on_towers
            .iter()
            .map(|&i| {
                config.towers[i].rated_rejection_kw * approach(config, i, setpoints.tower_fan_frac[i], tower_loading)
            })
            .sum::<f64>()
            / rejection_capacity;

    for i in 0..config.chillers.len() {
        if !setpoints.chiller_on[i] {
            continue;
        }
        let lift = (condenser_water_c - setpoints.chw_supply_setpoint_c[i] + config.flow_lift_penalty_c * flow_loading)
            .max(config.min_lift_c);
        lift_c[i] = lift;
        chiller_kw[i] = chiller_power(config, i, plr, lift)?;
    }

    Ok(PlantBreakdown {
        output: PlantOutput {
            power_kw: parasitic + chiller_kw.iter().sum::<f64>(),
            cooling_kw: cooling,
        },
        chiller_kw,
        pump_kw,
        fan_kw,
        plr,
        lift_c,
        condenser_water_c,
        flow_loading,
        tower_loading,
    })
}
