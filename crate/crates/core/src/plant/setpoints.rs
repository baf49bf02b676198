use serde::{Deserialize, Serialize};

use super::PlantConfig;
use crate::{Error, Result};

/// Inclusive bounds of a continuous setpoint while its device is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRange {
    pub lo: f64,
    pub hi: f64,
}

impl SlotRange {
    pub const CHW_SUPPLY_C: SlotRange = SlotRange { lo: 5.0, hi: 11.0 };
    pub const PUMP_SPEED: SlotRange = SlotRange { lo: 0.3, hi: 1.0 };
    pub const TOWER_FAN: SlotRange = SlotRange { lo: 0.2, hi: 1.0 };

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Device counts; fixes the flattened slot order
/// `[chiller_on, chw_setpoint, pump_on, pump_speed, tower_on, tower_fan]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlantLayout {
    pub n_chillers: usize,
    pub n_pumps: usize,
    pub n_towers: usize,
}

impl PlantLayout {
    pub fn dim(&self) -> usize {
        2 * (self.n_chillers + self.n_pumps + self.n_towers)
    }

    /// Stable column names, 1-based device numbers.
    pub fn slot_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        let group = |names: &mut Vec<String>, prefix: &str, n: usize| {
            names.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        };
        group(&mut names, "chiller_on", self.n_chillers);
        group(&mut names, "chw_setpoint_c", self.n_chillers);
        group(&mut names, "pump_on", self.n_pumps);
        group(&mut names, "pump_speed", self.n_pumps);
        group(&mut names, "tower_on", self.n_towers);
        group(&mut names, "tower_fan", self.n_towers);
        names
    }

    /// Recovers the layout from an ordered list of column names.
    pub fn from_slot_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let count = |prefix: &str| {
            names
                .iter()
                .filter(|n| n.as_ref().rsplit_once('_').is_some_and(|(p, _)| p == prefix))
                .count()
        };
        let layout = PlantLayout {
            n_chillers: count("chiller_on"),
            n_pumps: count("pump_on"),
            n_towers: count("tower_on"),
        };
        let expected = layout.slot_names();
        if expected.len() != names.len() || expected.iter().zip(names).any(|(a, b)| a != b.as_ref()) {
            return Err(Error::InvalidSeries(format!(
                "setpoint columns do not follow the documented layout (expected {})",
                expected.join(",")
            )));
        }
        Ok(layout)
    }
}

/// The plant control decision for one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointVector {
    pub chiller_on: Vec<bool>,
    pub chw_supply_setpoint_c: Vec<f64>,
    pub pump_on: Vec<bool>,
    pub pump_speed_frac: Vec<f64>,
    pub tower_on: Vec<bool>,
    pub tower_fan_frac: Vec<f64>,
}

impl SetpointVector {
    pub fn all_off(layout: PlantLayout) -> Self {
        SetpointVector {
            chiller_on: vec![false; layout.n_chillers],
            chw_supply_setpoint_c: vec![0.0; layout.n_chillers],
            pump_on: vec![false; layout.n_pumps],
            pump_speed_frac: vec![0.0; layout.n_pumps],
            tower_on: vec![false; layout.n_towers],
            tower_fan_frac: vec![0.0; layout.n_towers],
        }
    }

    pub fn layout(&self) -> PlantLayout {
        PlantLayout {
            n_chillers: self.chiller_on.len(),
            n_pumps: self.pump_on.len(),
            n_towers: self.tower_on.len(),
        }
    }

    pub fn any_chiller_on(&self) -> bool {
        self.chiller_on.iter().any(|&b| b)
    }

    pub fn is_all_off(&self) -> bool {
        !self.chiller_on.iter().chain(&self.pump_on).chain(&self.tower_on).any(|&b| b)
    }

    /// Range and shape checks. Does not require any device to be on.
    pub fn validate(&self, layout: PlantLayout) -> Result<()> {
        let shape_ok = self.chw_supply_setpoint_c.len() == self.chiller_on.len()
            && self.pump_speed_frac.len() == self.pump_on.len()
            && self.tower_fan_frac.len() == self.tower_on.len();
        if !shape_ok || self.layout() != layout {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: self.flatten().len(),
            });
        }
        let check = |on: &[bool], vals: &[f64], range: SlotRange, name: &'static str| -> Result<()> {
            for (&o, &v) in on.iter().zip(vals) {
                let ok = if o { range.contains(v) } else { v == 0.0 || range.contains(v) };
                if !ok {
                    return Err(Error::OutOfRange { name, value: v });
                }
            }
            Ok(())
        };
        check(&self.chiller_on, &self.chw_supply_setpoint_c, SlotRange::CHW_SUPPLY_C, "chw_supply_setpoint_c")?;
        check(&self.pump_on, &self.pump_speed_frac, SlotRange::PUMP_SPEED, "pump_speed_frac")?;
        check(&self.tower_on, &self.tower_fan_frac, SlotRange::TOWER_FAN, "tower_fan_frac")?;
        Ok(())
    }

    /// Whether the vector can serve a positive load at all.
    pub fn can_serve(&self) -> bool {
        self.any_chiller_on() && self.pump_on.contains(&true) && self.tower_on.contains(&true)
    }

    /// Zeroes the continuous slot of every off device, so that all "off"
    /// encodings collapse to one.
    pub fn canonical(&self) -> Self {
        let zero_off = |on: &[bool], vals: &[f64]| -> Vec<f64> {
            on.iter().zip(vals).map(|(&o, &v)| if o { v } else { 0.0 }).collect()
        };
        SetpointVector {
            chiller_on: self.chiller_on.clone(),
            chw_supply_setpoint_c: zero_off(&self.chiller_on, &self.chw_supply_setpoint_c),
            pump_on: self.pump_on.clone(),
            pump_speed_frac: zero_off(&self.pump_on, &self.pump_speed_frac),
            tower_on: self.tower_on.clone(),
            tower_fan_frac: zero_off(&self.tower_on, &self.tower_fan_frac),
        }
    }

    /// Flattened slots in layout order; booleans as 0/1.
    pub fn flatten(&self) -> Vec<f64> {
        let bits = |v: &[bool]| v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let mut out = Vec::with_capacity(self.layout().dim());
        out.extend(bits(&self.chiller_on));
        out.extend_from_slice(&self.chw_supply_setpoint_c);
        out.extend(bits(&self.pump_on));
        out.extend_from_slice(&self.pump_speed_frac);
        out.extend(bits(&self.tower_on));
        out.extend_from_slice(&self.tower_fan_frac);
        out
    }

    /// Inverse of [`flatten`](Self::flatten); binary slots are on when ≥ 0.5.
    pub fn from_flat(layout: PlantLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                got: flat.len(),
            });
        }
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head
        };
        let bits = |v: &[f64]| v.iter().map(|&x| x >= 0.5).collect::<Vec<_>>();
        let chiller_on = bits(take(layout.n_chillers));
        let chw = take(layout.n_chillers).to_vec();
        let pump_on = bits(take(layout.n_pumps));
        let speed = take(layout.n_pumps).to_vec();
        let tower_on = bits(take(layout.n_towers));
        let fan = take(layout.n_towers).to_vec();
        Ok(SetpointVector {
            chiller_on,
            chw_supply_setpoint_c: chw,
            pump_on,
            pump_speed_frac: speed,
            tower_on,
            tower_fan_frac: fan,
        })
    }

    /// Rated capacity of the chillers switched on.
    pub fn online_capacity_kw(&self, config: &PlantConfig) -> f64 {
        self.chiller_on
            .iter()
            .zip(&config.chillers)
            .filter(|(&on, _)| on)
            .map(|(_, c)| c.rated_cooling_kw)
            .sum()
    }
}
