use super::{PlantConfig, SetpointVector};
use crate::timeseries::WeatherRecord;

const STAGE_UP_FRACTION: f64 = 0.85;
const PUMP_SPEED: f64 = 0.9;
const FAN_SPEED: f64 = 0.9;
const CHW_SETPOINT_C: f64 = 7.0;

/// Rule-based control of the pre-optimization era.
///
/// Chillers are staged in config order: `k` run when the load is at most
/// 85% of the first `k` machines' capacity. Each running chiller brings its
/// pump pair (`2k` pumps in config order); one tower per chiller. Speeds and
/// the supply setpoint are fixed. Weather is ignored.
pub fn legacy_policy(config: &PlantConfig, _weather: &WeatherRecord, cooling_demand_kw: f64) -> SetpointVector {
    let layout = config.layout();
    let mut s = SetpointVector::all_off(layout);
    if cooling_demand_kw <= 0.0 {
        return s;
    }
    let mut cumulative = 0.0;
    let mut k = layout.n_chillers;
    for (i, c) in config.chillers.iter().enumerate() {
        cumulative += c.rated_cooling_kw;
        if cooling_demand_kw <= STAGE_UP_FRACTION * cumulative {
            k = i + 1;
            break;
        }
    }
    for i in 0..k {
        s.chiller_on[i] = true;
        s.chw_supply_setpoint_c[i] = CHW_SETPOINT_C;
    }
    for i in 0..(2 * k).min(layout.n_pumps) {
        s.pump_on[i] = true;
        s.pump_speed_frac[i] = PUMP_SPEED;
    }
    for i in 0..k.min(layout.n_towers) {
        s.tower_on[i] = true;
        s.tower_fan_frac[i] = FAN_SPEED;
    }
    s
}
