use serde::{Deserialize, Serialize};

use super::PlantLayout;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChillerSpec {
    pub rated_cooling_kw: f64,
    pub design_cop: f64,
    /// `(a, b, c)` of the part-load efficiency factor `a + b·plr + c·plr²`.
    /// Must sum to 1 so that full load runs at the design COP.
    pub part_load_coeffs: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub rated_power_kw: f64,
    /// Cooling the pump can carry at full speed and design water ΔT.
    pub rated_flow_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerSpec {
    pub rated_fan_kw: f64,
    /// Approach at full design heat load with the fan stopped.
    pub design_approach_c: f64,
    /// Heat rejection at which `design_approach_c` applies.
    pub rated_rejection_kw: f64,
}

/// Plant description. JSON keys match the field names; the four clamp and
/// coupling constants may be omitted and take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub chillers: Vec<ChillerSpec>,
    pub pumps: Vec<PumpSpec>,
    pub towers: Vec<TowerSpec>,
    /// Lift (°C) at which a chiller delivers its design COP.
    pub design_lift_c: f64,
    #[serde(default = "default_cop_clamp")]
    pub cop_clamp_factor: f64,
    #[serde(default = "default_approach_floor")]
    pub approach_floor_c: f64,
    #[serde(default = "default_min_lift")]
    pub min_lift_c: f64,
    /// Extra lift (°C) per unit of chilled-water loading (cooling / pump flow).
    #[serde(default = "default_flow_penalty")]
    pub flow_lift_penalty_c: f64,
}

fn default_cop_clamp() -> f64 {
    1.5
}
fn default_approach_floor() -> f64 {
    1.0
}
fn default_min_lift() -> f64 {
    8.0
}
fn default_flow_penalty() -> f64 {
    12.0
}

const PART_LOAD_DEFAULT: [f64; 3] = [0.52, 1.68, -1.2];

impl Default for PlantConfig {
    /// Five chillers (3 × 1800 kW, 2 × 900 kW), a chilled/condenser pump
    /// pair per chiller plus two spares, and four cooling towers.
    fn default() -> Self {
        let big = ChillerSpec {
            rated_cooling_kw: 1800.0,
            design_cop: 5.8,
            part_load_coeffs: PART_LOAD_DEFAULT,
        };
        let small = ChillerSpec {
            rated_cooling_kw: 900.0,
            design_cop: 5.2,
            part_load_coeffs: PART_LOAD_DEFAULT,
        };
        let big_pump = PumpSpec {
            rated_power_kw: 37.0,
            rated_flow_kw: 1800.0,
        };
        let small_pump = PumpSpec {
            rated_power_kw: 18.5,
            rated_flow_kw: 900.0,
        };
        let spare_pump = PumpSpec {
            rated_power_kw: 22.0,
            rated_flow_kw: 1200.0,
        };
        let tower = TowerSpec {
            rated_fan_kw: 30.0,
            design_approach_c: 4.0,
            rated_rejection_kw: 2300.0,
        };
        let mut pumps = vec![big_pump; 6];
        pumps.extend(vec![small_pump; 4]);
        pumps.extend(vec![spare_pump; 2]);
        PlantConfig {
            chillers: vec![big.clone(), big.clone(), big, small.clone(), small],
            pumps,
            towers: vec![tower; 4],
            design_lift_c: 26.0,
            cop_clamp_factor: default_cop_clamp(),
            approach_floor_c: default_approach_floor(),
            min_lift_c: default_min_lift(),
            flow_lift_penalty_c: default_flow_penalty(),
        }
    }
}

impl PlantConfig {
    pub fn layout(&self) -> PlantLayout {
        PlantLayout {
            n_chillers: self.chillers.len(),
            n_pumps: self.pumps.len(),
            n_towers: self.towers.len(),
        }
    }

    pub fn total_capacity_kw(&self) -> f64 {
        self.chillers.iter().map(|c| c.rated_cooling_kw).sum()
    }

    pub fn chiller_capacities(&self) -> Vec<f64> {
        self.chillers.iter().map(|c| c.rated_cooling_kw).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.chillers.is_empty() || self.pumps.is_empty() || self.towers.is_empty() {
            return bad("plant needs at least one chiller, pump and tower".into());
        }
        for (i, c) in self.chillers.iter().enumerate() {
            let [a, b, cc] = c.part_load_coeffs;
            if ((a + b + cc) - 1.0).abs() > 1e-12 {
                return bad(format!("chillers[{i}].part_load_coeffs must sum to 1, got {}", a + b + cc));
            }
            if !(c.rated_cooling_kw > 0.0) || !(c.design_cop > 0.0) {
                return bad(format!("chillers[{i}]: rated_cooling_kw and design_cop must be > 0"));
            }
        }
        for (i, p) in self.pumps.iter().enumerate() {
            if !(p.rated_power_kw > 0.0) || !(p.rated_flow_kw > 0.0) {
                return bad(format!("pumps[{i}]: rated_power_kw and rated_flow_kw must be > 0"));
            }
        }
        for (i, t) in self.towers.iter().enumerate() {
            if !(t.rated_fan_kw > 0.0) || !(t.design_approach_c > 0.0) || !(t.rated_rejection_kw > 0.0) {
                return bad(format!(
                    "towers[{i}]: rated_fan_kw, design_approach_c and rated_rejection_kw must be > 0"
                ));
            }
        }
        if !(self.design_lift_c > 0.0) {
            return bad("design_lift_c must be > 0".into());
        }
        if !(self.cop_clamp_factor >= 1.0) {
            return bad("cop_clamp_factor must be >= 1".into());
        }
        if !(self.approach_floor_c >= 0.0) || !(self.min_lift_c > 0.0) || !(self.flow_lift_penalty_c >= 0.0) {
            return bad("approach_floor_c, min_lift_c and flow_lift_penalty_c must be non-negative (min_lift_c > 0)".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PlantConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plant_matches_studied_building() {
        let c = PlantConfig::default();
        c.validate().unwrap();
        assert_eq!((c.chillers.len(), c.pumps.len(), c.towers.len()), (5, 12, 4));
        assert_eq!(c.layout().dim(), 42);
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut c = PlantConfig::default();
        c.chillers[2].part_load_coeffs = [0.3, 0.3, 0.3];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("chillers[2].part_load_coeffs"), "{msg}");
    }

    #[test]
    fn json_defaults_and_unknown_keys() {
        let c = PlantConfig::default();
        let mut v = serde_json::to_value(&c).unwrap();
        v.as_object_mut().unwrap().remove("min_lift_c");
        let back: PlantConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(back, c);
        v.as_object_mut().unwrap().insert("bogus".into(), 1.into());
        let err = PlantConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
