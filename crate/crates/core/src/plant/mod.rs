//! Synthetic ground-truth chiller plant.
//!
//! Stands in for the real building: device physics, a weather generator, a
//! weather/occupancy-driven demand model and the legacy rule-based control
//! policy whose history every model is trained on.

mod config;
mod demand;
mod history;
mod physics;
mod policy;
mod setpoints;
mod weather;

pub use config::{ChillerSpec, PlantConfig, PumpSpec, TowerSpec};
pub use demand::DemandModel;
pub use history::{
    generate_history, read_history_csvs, read_setpoints_csv, simulate_legacy, write_history_csvs, write_setpoints_csv,
    Conditions, OperationRecord, PowerAdjustment,
    Scenario, HISTORY_FILES,
};
pub use physics::{
    chiller_power, plant_step, plant_step_detailed, pump_power, tower_outlet_temp, PlantBreakdown, PlantOutput,
    HEAT_REJECTION_FACTOR,
};
pub use policy::legacy_policy;
pub use setpoints::{PlantLayout, SetpointVector, SlotRange};
pub use weather::{synth_weather, WeatherProfile};

/// Anything that maps `(setpoints, weather, cooling load)` to plant outputs:
/// the true plant, or a trained surrogate of it.
pub trait PlantModel: Sync {
    fn layout(&self) -> PlantLayout;

    fn evaluate(
        &self,
        setpoints: &SetpointVector,
        weather: &crate::timeseries::WeatherRecord,
        cooling_demand_kw: f64,
    ) -> crate::Result<PlantOutput>;
}

/// The simulator itself used as a plant model (the optimizer's oracle).
#[derive(Debug, Clone, Copy)]
pub struct TruePlant<'a>(pub &'a PlantConfig);

impl PlantModel for TruePlant<'_> {
    fn layout(&self) -> PlantLayout {
        self.0.layout()
    }

    fn evaluate(
        &self,
        setpoints: &SetpointVector,
        weather: &crate::timeseries::WeatherRecord,
        cooling_demand_kw: f64,
    ) -> crate::Result<PlantOutput> {
        plant_step(self.0, weather, setpoints, cooling_demand_kw)
    }
}
