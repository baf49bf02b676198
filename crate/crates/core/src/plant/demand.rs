use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::weather::Ar1;
use crate::timeseries::{TimeSeries, Timestamp, WeatherRecord};
use crate::Result;

/// Building cooling load: affine in outdoor conditions, plus an occupancy
/// schedule and AR(1) noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandModel {
    pub base_kw: f64,
    pub temp_coeff_kw_per_c: f64,
    pub temp_ref_c: f64,
    pub humidity_coeff_kw_per_pct: f64,
    pub humidity_ref_pct: f64,
    /// Extra load during occupied hours on weekdays / weekends.
    pub weekday_occupied_kw: f64,
    pub weekend_occupied_kw: f64,
    pub occupied_start_hour: u32,
    pub occupied_end_hour: u32,
    pub noise_sd_kw: f64,
    pub noise_ar: f64,
    pub min_kw: f64,
}

impl Default for DemandModel {
    fn default() -> Self {
        DemandModel {
            base_kw: 2000.0,
            temp_coeff_kw_per_c: 170.0,
            temp_ref_c: 20.0,
            humidity_coeff_kw_per_pct: 6.0,
            humidity_ref_pct: 75.0,
            weekday_occupied_kw: 1100.0,
            weekend_occupied_kw: 350.0,
            occupied_start_hour: 8,
            occupied_end_hour: 19,
            noise_sd_kw: 100.0,
            noise_ar: 0.95,
            min_kw: 150.0,
        }
    }
}

impl DemandModel {
    pub fn occupancy_kw(&self, t: Timestamp) -> f64 {
        let hour = t.minute_of_day() / 60;
        if hour < self.occupied_start_hour || hour >= self.occupied_end_hour {
            0.0
        } else if t.is_weekday() {
            self.weekday_occupied_kw
        } else {
            self.weekend_occupied_kw
        }
    }

    /// Noise-free load for the given conditions.
    pub fn expected_kw(&self, t: Timestamp, w: &WeatherRecord) -> f64 {
        (self.base_kw
            + self.temp_coeff_kw_per_c * (w.dry_bulb_c - self.temp_ref_c)
            + self.humidity_coeff_kw_per_pct * (w.rel_humidity_pct - self.humidity_ref_pct)
            + self.occupancy_kw(t))
        .max(self.min_kw)
    }

    /// Seeded demand series aligned with `weather`.
    pub fn generate(&self, seed: u64, weather: &TimeSeries<WeatherRecord>) -> Result<TimeSeries<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut noise = Ar1::new(self.noise_sd_kw, self.noise_ar, &mut rng);
        let records = weather
            .iter()
            .map(|(t, w)| {
                let n = noise.next(&mut rng);
                w.map(|w| (self.expected_kw(t, w) + n).max(self.min_kw))
            })
            .collect();
        TimeSeries::new(weather.start(), weather.step_minutes(), records)
    }
}
