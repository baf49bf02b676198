//! Chiller-plant energy optimization toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! - [`timeseries`] holds the 15-minute interval container, CSV formats,
//!   calendar resampling and the accuracy metrics (MAPE with bootstrap CI,
//!   Pearson correlation).
//! - [`plant`] is a synthetic ground-truth plant (5 chillers, 12 pumps,
//!   4 towers), its weather and demand generators and the legacy control
//!   policy.
//! - [`regressor`] is a small one-hidden-layer network trained by
//!   mini-batch gradient descent, shared by the forecaster and the surrogate.
//! - [`forecaster`] covers weather-driven load forecasting (profile and linear).
//! - [`surrogate`] is the holistic `(setpoints, weather, load) -> (power, cooling)` map.
//! - [`optimizer`] contains the GA and PSO setpoint searches.
//! - [`savings`] implements adjusted-baseline measurement and verification.
//! - [`closed_loop`] runs the deploy / degrade / retrain lifecycle end to end.
//!
//! Population and batch evaluation run on rayon when the `parallel` feature
//! is enabled (the default); see [`exec`].

pub mod closed_loop;
pub mod error;
pub mod exec;
pub mod forecaster;
pub mod optimizer;
mod persist;
pub mod plant;
pub mod regressor;
pub mod savings;
pub mod surrogate;
pub mod timeseries;

pub use error::{Error, Result};

/// Version string embedded in persisted models and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
