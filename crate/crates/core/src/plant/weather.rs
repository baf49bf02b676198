use std::f64::consts::PI;

use chrono::Datelike;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::timeseries::{TimeSeries, Timestamp, WeatherRecord, DEFAULT_STEP_MINUTES};
use crate::Result;

/// Parameters of the synthetic climate. The default resembles a humid
/// subtropical coastal city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherProfile {
    pub annual_mean_c: f64,
    pub seasonal_amplitude_c: f64,
    /// Day of year (1-based) of the seasonal maximum.
    pub peak_day_of_year: f64,
    pub diurnal_amplitude_c: f64,
    /// Hour of day of the diurnal maximum.
    pub peak_hour: f64,
    /// Slow weather-system anomaly (°C, stationary sd) and its per-day persistence.
    pub anomaly_sd_c: f64,
    pub anomaly_daily_ar: f64,
    /// Fast interval-level noise.
    pub noise_sd_c: f64,
    pub noise_ar: f64,
    pub humidity_mean_pct: f64,
    pub humidity_seasonal_amplitude_pct: f64,
    pub humidity_diurnal_amplitude_pct: f64,
    pub humidity_anomaly_sd_pct: f64,
    pub min_dry_bulb_c: f64,
    pub max_dry_bulb_c: f64,
    pub min_humidity_pct: f64,
    pub max_humidity_pct: f64,
}

impl Default for WeatherProfile {
    fn default() -> Self {
        WeatherProfile {
            annual_mean_c: 23.5,
            seasonal_amplitude_c: 5.5,
            peak_day_of_year: 200.0,
            diurnal_amplitude_c: 3.0,
            peak_hour: 14.5,
            anomaly_sd_c: 1.3,
            anomaly_daily_ar: 0.7,
            noise_sd_c: 0.3,
            noise_ar: 0.85,
            humidity_mean_pct: 77.0,
            humidity_seasonal_amplitude_pct: 5.0,
            humidity_diurnal_amplitude_pct: 10.0,
            humidity_anomaly_sd_pct: 5.0,
            min_dry_bulb_c: 5.0,
            max_dry_bulb_c: 38.0,
            min_humidity_pct: 30.0,
            max_humidity_pct: 100.0,
        }
    }
}

/// Stationary AR(1) process with the given standard deviation.
pub(crate) struct Ar1 {
    phi: f64,
    innov_sd: f64,
    state: f64,
}

impl Ar1 {
    pub(crate) fn new(sd: f64, phi: f64, rng: &mut ChaCha8Rng) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Ar1 {
            phi,
            innov_sd: sd * (1.0 - phi * phi).max(0.0).sqrt(),
            state: sd * z,
        }
    }

    pub(crate) fn next(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.state = self.phi * self.state + self.innov_sd * z;
        self.state
    }
}

/// Seasonal + diurnal sinusoids plus seeded AR(1) anomalies, at 15-minute
/// resolution starting at `start`.
pub fn synth_weather(
    seed: u64,
    start: Timestamp,
    n_days: usize,
    profile: &WeatherProfile,
) -> Result<TimeSeries<WeatherRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let per_day = (1440 / DEFAULT_STEP_MINUTES) as usize;
    let slow_phi = profile.anomaly_daily_ar.powf(1.0 / per_day as f64);
    let mut anomaly = Ar1::new(profile.anomaly_sd_c, slow_phi, &mut rng);
    let mut noise = Ar1::new(profile.noise_sd_c, profile.noise_ar, &mut rng);
    let mut rh_anomaly = Ar1::new(profile.humidity_anomaly_sd_pct, slow_phi, &mut rng);

    let mut records = Vec::with_capacity(n_days * per_day);
    for i in 0..n_days * per_day {
        let t = start.plus_minutes((i as u32 * DEFAULT_STEP_MINUTES) as i64);
        let hour = t.minute_of_day() as f64 / 60.0;
        let doy = t.date().ordinal() as f64 - 1.0 + hour / 24.0;
        let seasonal = (2.0 * PI * (doy - (profile.peak_day_of_year - 1.0)) / 365.25).cos();
        let diurnal = (2.0 * PI * (hour - profile.peak_hour) / 24.0).cos();
        let dry = profile.annual_mean_c
            + profile.seasonal_amplitude_c * seasonal
            + profile.diurnal_amplitude_c * diurnal
            + anomaly.next(&mut rng)
            + noise.next(&mut rng);
        let rh = profile.humidity_mean_pct + profile.humidity_seasonal_amplitude_pct * seasonal
            - profile.humidity_diurnal_amplitude_pct * diurnal
            + rh_anomaly.next(&mut rng);
        let dry = dry.clamp(profile.min_dry_bulb_c, profile.max_dry_bulb_c);
        let rh = rh.clamp(profile.min_humidity_pct, profile.max_humidity_pct);
        records.push(Some(WeatherRecord::new(dry, rh)?));
    }
    TimeSeries::new(start, DEFAULT_STEP_MINUTES, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> Timestamp {
        Timestamp::from_ymd_hm(2018, 3, 1, 0, 0).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let p = WeatherProfile::default();
        let a = synth_weather(7, start(), 20, &p).unwrap();
        let b = synth_weather(7, start(), 20, &p).unwrap();
        let c = synth_weather(8, start(), 20, &p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 20 * 96);
    }

    #[test]
    fn annual_mean_and_bounds() {
        let p = WeatherProfile::default();
        for seed in [1, 2, 3] {
            let w = synth_weather(seed, start(), 365, &p).unwrap();
            let temps: Vec<f64> = w.records().iter().map(|r| r.unwrap().dry_bulb_c).collect();
            let mean = temps.iter().sum::<f64>() / temps.len() as f64;
            assert!((mean - p.annual_mean_c).abs() <= 1.0, "seed {seed}: mean {mean}");
            for r in w.records().iter().flatten() {
                assert!(r.wet_bulb_c <= r.dry_bulb_c);
                assert!((5.0..=38.0).contains(&r.dry_bulb_c));
                assert!((30.0..=100.0).contains(&r.rel_humidity_pct));
            }
        }
    }
}
