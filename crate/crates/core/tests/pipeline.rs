use chillopt::forecaster::{fit_profile, forecast_profile, ForecastConfig, ProfileForecaster, ProfileTarget};
use chillopt::optimizer::{optimize_profile, GAConfig, ProfileOptConfig};
use chillopt::plant::{read_history_csvs, write_history_csvs, PlantConfig, PlantModel, Scenario, TruePlant};
use chillopt::regressor::TrainConfig;
use chillopt::surrogate::{train_surrogate, SurrogateModel};
use chillopt::Error;

fn quick() -> TrainConfig {
    TrainConfig { max_epochs: 20, learning_rate: 3e-3, ..TrainConfig::default() }
}

#[test]
fn history_survives_csv_round_trip() {
    let h = Scenario::default().history(&PlantConfig::default(), 4, 2, None).unwrap();
    let dir = std::env::temp_dir().join(format!("chillopt-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    write_history_csvs(&h, &dir).unwrap();
    let back = read_history_csvs(&dir).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back.len(), h.len());
    assert_eq!(back.start(), h.start());
    for ((_, a), (_, b)) in h.iter().zip(back.iter()) {
        let (a, b) = (a.unwrap(), b.unwrap());
        assert_eq!(a.setpoints, b.setpoints);
        assert_eq!(a.output.power_kw, b.output.power_kw);
        assert_eq!(a.cooling_demand_kw, b.cooling_demand_kw);
    }
}

#[test]
fn optimized_day_beats_legacy_on_true_plant() {
    let plant = PlantConfig::default();
    let h = Scenario::default().history(&plant, 2, 140, None).unwrap();
    let day = h.slice(130 * 96..131 * 96).unwrap();
    let weather = day.map(|r| r.weather);
    let target = day.map(|r| r.output.cooling_kw);
    let cfg = ProfileOptConfig {
        ga: GAConfig { population: 24, generations: 25, ..GAConfig::default() },
        ..ProfileOptConfig::default()
    };
    let recs = optimize_profile(&TruePlant(&plant), Some(&plant), &weather, &target, &cfg).unwrap();
    let legacy: f64 = day.records().iter().flatten().map(|r| r.output.power_kw).sum();
    let mut optimized = 0.0;
    for i in 0..recs.len() {
        let r = recs.get(i).unwrap();
        let c = day.get(i).unwrap();
        let real = TruePlant(&plant).evaluate(&r.best_setpoints, &c.weather, c.output.cooling_kw).unwrap();
        assert!(real.cooling_kw >= 0.97 * c.output.cooling_kw, "interval {i}");
        optimized += real.power_kw;
    }
    assert!(optimized < 0.97 * legacy, "optimized {optimized:.0} vs legacy {legacy:.0}");
}

#[test]
fn trained_models_reload_identically() {
    let h = Scenario::default().history(&PlantConfig::default(), 1, 62, None).unwrap();

    let s = train_surrogate(&h, &quick()).unwrap();
    let s2 = SurrogateModel::from_json(&s.to_json().unwrap()).unwrap();
    let r = h.get(500).unwrap();
    assert_eq!(
        s.predict(&r.setpoints, &r.weather, r.cooling_demand_kw).unwrap(),
        s2.predict(&r.setpoints, &r.weather, r.cooling_demand_kw).unwrap()
    );

    let cfg = ForecastConfig { train: quick(), ..ForecastConfig::default() };
    let f = fit_profile(&h.slice(0..61 * 96).unwrap(), ProfileTarget::Cooling, &cfg).unwrap();
    let f2 = ProfileForecaster::from_json(&f.to_json().unwrap()).unwrap();
    let recent = h.slice(60 * 96..61 * 96).unwrap().map(|r| r.output.cooling_kw);
    let wx = h.slice(61 * 96..62 * 96).unwrap().map(|r| r.weather);
    let a = forecast_profile(&f, &wx, &recent).unwrap();
    let b = forecast_profile(&f2, &wx, &recent).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 96);
    assert_eq!(a.start(), wx.start());
}

#[test]
fn forecast_needs_contiguous_window() {
    let h = Scenario::default().history(&PlantConfig::default(), 1, 62, None).unwrap();
    let cfg = ForecastConfig { train: TrainConfig { max_epochs: 2, ..quick() }, ..ForecastConfig::default() };
    let f = fit_profile(&h, ProfileTarget::Cooling, &cfg).unwrap();
    let recent = h.slice(50 * 96..51 * 96).unwrap().map(|r| r.output.cooling_kw);
    let wx = h.slice(61 * 96..62 * 96).unwrap().map(|r| r.weather);
    assert!(matches!(forecast_profile(&f, &wx, &recent), Err(Error::InsufficientData(_))));
}
