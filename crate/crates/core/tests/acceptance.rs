//! Acceptance criteria 1-7. Runs as a plain binary so that one PASS/FAIL
//! line per criterion is always printed; exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chillopt::closed_loop::{run_experiment, ClosedLoopReport, ExperimentConfig};
use chillopt::forecaster::ForecastConfig;
use chillopt::optimizer::{
    ga_minimize, ga_optimize, grid_search, stability_report, Bound, GAConfig, Objective, OptProblem, PSOConfig,
    ProblemSettings,
};
use chillopt::plant::{chiller_power, pump_power, write_history_csvs, PlantConfig, PowerAdjustment, Scenario, TruePlant};
use chillopt::regressor::{Mlp, Regressor, TrainConfig};
use chillopt::savings::{avoided_energy, fit_baseline, naive_savings_between, BaselineKind, SavingsDetail, SavingsReport};
use chillopt::surrogate::train_surrogate;
use chillopt::timeseries::{mape, pearson, pearson_corr, resample_mean, resample_sum, Granularity, TimeSeries, Timestamp, WeatherRecord};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

static CLOSED_LOOP: OnceLock<(ClosedLoopReport, Duration)> = OnceLock::new();

fn closed_loop() -> &'static (ClosedLoopReport, Duration) {
    CLOSED_LOOP.get_or_init(|| {
        let t = Instant::now();
        let r = run_experiment(&ExperimentConfig::default()).expect("default experiment runs");
        (r, t.elapsed())
    })
}

/// GA on the true plant against the coarse grid, ten intervals of a summer day.
fn criterion_1() -> Outcome {
    let t = Instant::now();
    let plant = PlantConfig::default();
    let model = TruePlant(&plant);
    let caps = plant.chiller_capacities();
    let cond = Scenario::default().conditions(0, 160).map_err(|e| e.to_string())?;
    let day = 150 * cond.intervals_per_day();
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let c = cond.get(day + k * 9 + 4).ok_or("missing interval")?;
        let p = OptProblem::new(&model, c.weather, c.cooling_demand_kw, &ProblemSettings::default(), Some(&caps));
        let ga = ga_optimize(&p, &GAConfig::default()).map_err(|e| e.to_string())?;
        let (_, grid) = grid_search(&p).map_err(|e| e.to_string())?;
        worst = worst.max(ga.fitness / grid);
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1.02 && secs < 300.0,
        format!("worst GA/grid fitness ratio {worst:.4} (limit 1.02), {secs:.1} s for 10 intervals"),
    )
}

fn criterion_2() -> Outcome {
    let (r, took) = closed_loop();
    let s = r.savings.savings_pct.ok_or("adjusted baseline not positive")?;
    let f = r.shortfall.fraction_met;
    check(
        s >= 8.0 && f >= 0.95 && took.as_secs() < 1800,
        format!(
            "adjusted-baseline savings {s:.2}% (>= 8), cooling met on {:.1}% of {} feasible intervals (>= 95), counterfactual {:.2}%, {:.0} s",
            100.0 * f,
            r.shortfall.feasible_intervals,
            r.counterfactual_savings_pct,
            took.as_secs_f64()
        ),
    )
}

/// 10 % planted from day 450 of 540; the reporting window is the summer.
fn criterion_3() -> Outcome {
    let plant = PlantConfig::default();
    let sc = Scenario::default();
    let per_day = 96;
    let clean = sc.history(&plant, 0, 540, None).map_err(|e| e.to_string())?;
    let from = clean.timestamp_at(450 * per_day);
    let h = sc
        .history(&plant, 0, 540, Some(PowerAdjustment { from, factor: 0.9 }))
        .map_err(|e| e.to_string())?;
    let pre = h.slice(0..450 * per_day).map_err(|e| e.to_string())?;
    let post = h.slice(450 * per_day..540 * per_day).map_err(|e| e.to_string())?;
    let mean_t = |s: &TimeSeries<chillopt::plant::OperationRecord>| {
        s.records().iter().flatten().map(|r| r.weather.dry_bulb_c).sum::<f64>() / s.present_count() as f64
    };
    let (t_pre, t_post) = (mean_t(&pre), mean_t(&post));
    let model = fit_baseline(&pre, BaselineKind::ProfileForecaster, &ForecastConfig::baseline()).map_err(|e| e.to_string())?;
    let adjusted = avoided_energy(&model, &post).map_err(|e| e.to_string())?.savings_pct.ok_or("no baseline")?;
    let naive = naive_savings_between(&pre, &post).map_err(|e| e.to_string())?;
    check(
        t_post > t_pre && (adjusted - 10.0).abs() <= 1.5 && (naive - 10.0).abs() > (adjusted - 10.0).abs(),
        format!("reporting {t_post:.1} °C vs baseline {t_pre:.1} °C; adjusted {adjusted:.2}% (10 ± 1.5), naive {naive:.2}%"),
    )
}

fn criterion_4() -> Outcome {
    let (r, _) = closed_loop();
    let s = &r.surrogate;
    let (i, pre, post) = (
        s.in_distribution.power_mape.mape_pct,
        s.pre_retrain.power_mape.mape_pct,
        s.post_retrain.power_mape.mape_pct,
    );
    check(
        pre >= 2.0 * i && post <= 1.25 * i,
        format!(
            "surrogate power MAPE in-distribution {i:.2}%, pre-retrain {pre:.2}% ({:.1}x, need >= 2), post-retrain {post:.2}% ({:.1}x, need <= 1.25)",
            pre / i,
            post / i
        ),
    )
}

fn criterion_5() -> Outcome {
    let plant = PlantConfig::default();
    let model = TruePlant(&plant);
    let caps = plant.chiller_capacities();
    let w = WeatherRecord::new(28.0, 75.0).map_err(|e| e.to_string())?;
    let p = OptProblem::new(&model, w, 4200.0, &ProblemSettings::default(), Some(&caps));
    let r = stability_report(&p, &GAConfig::default(), &PSOConfig::default(), 20).map_err(|e| e.to_string())?;
    check(
        r.ga.coefficient_of_variation <= r.pso.coefficient_of_variation
            && r.pso.mean_evaluations_to_within_5pct < r.ga.mean_evaluations_to_within_5pct,
        format!(
            "{} seeds at {} evaluations: CV GA {:.5} vs PSO {:.5}; evaluations to within 5% GA {:.0} vs PSO {:.0}",
            r.n_seeds,
            r.evaluation_budget,
            r.ga.coefficient_of_variation,
            r.pso.coefficient_of_variation,
            r.ga.mean_evaluations_to_within_5pct,
            r.pso.mean_evaluations_to_within_5pct
        ),
    )
}

fn criterion_6() -> Outcome {
    let (r, _) = closed_loop();
    let hold = r.forecaster_holdout.as_ref().ok_or("forecaster has no holdout metrics")?;
    let h = Scenario::default()
        .history(&PlantConfig::default(), 0, 365, None)
        .map_err(|e| e.to_string())?;
    let temp = resample_mean(&h.map(|r| r.weather.dry_bulb_c), Granularity::Daily).map_err(|e| e.to_string())?;
    let energy = resample_sum(&h.map(|r| r.output.power_kw * 0.25), Granularity::Daily).map_err(|e| e.to_string())?;
    let (t, e): (Vec<f64>, Vec<f64>) = temp.present().zip(energy.present()).map(|((_, t), (_, e))| (t, e)).unzip();
    let corr = pearson(&t, &e).map_err(|e| e.to_string())?;
    check(
        hold.mape_pct <= 20.0 && corr > 0.7,
        format!(
            "24 h cooling MAPE {:.2}% ± {:.2} over {} holdout days (<= 20), daily temperature/energy correlation {corr:.3} (> 0.7)",
            hold.mape_pct, hold.ci_halfwidth_pct, hold.n_days
        ),
    )
}

struct Sphere(Vec<Bound>);

impl Objective for Sphere {
    fn bounds(&self) -> &[Bound] {
        &self.0
    }
    fn fitness(&self, x: &[f64]) -> chillopt::Result<f64> {
        Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum())
    }
}

fn criterion_7() -> Outcome {
    let mut failed = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };

    // cube law
    expect("cube law", (0..=10).all(|i| {
        let s = i as f64 / 10.0;
        (pump_power(22.0, s).unwrap() - 22.0 * s * s * s).abs() < 1e-12
    }) && (pump_power(22.0, 0.4).unwrap() * 8.0 - pump_power(22.0, 0.8).unwrap()).abs() < 1e-12);

    // full-load COP identity
    let plant = PlantConfig::default();
    expect("a+b+c=1 / full-load COP", plant.chillers.iter().enumerate().all(|(i, c)| {
        let sum: f64 = c.part_load_coeffs.iter().sum();
        let kw = chiller_power(&plant, i, 1.0, plant.design_lift_c).unwrap();
        (sum - 1.0).abs() < 1e-12 && (c.rated_cooling_kw / kw - c.design_cop).abs() < 1e-9
    }));

    // MAPE identities
    let t0 = Timestamp::from_ymd_hm(2019, 6, 1, 0, 0).unwrap();
    let actual = TimeSeries::from_values(t0, 15, (0..288).map(|i| 500.0 + (i % 37) as f64).collect()).unwrap();
    expect("MAPE identity forecast", mape(&actual, &actual).unwrap().mape_pct == 0.0);
    let scaled = actual.map(|v| v * 1.07);
    expect("MAPE uniform error", (mape(&actual, &scaled).unwrap().mape_pct - 7.0).abs() < 1e-9);

    // Pearson exact cases
    let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
    let up: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -0.5 * v + 1.0).collect();
    expect("Pearson +1", (pearson(&x, &up).unwrap() - 1.0).abs() < 1e-12);
    expect("Pearson -1", (pearson(&x, &down).unwrap() + 1.0).abs() < 1e-12);
    let xs = TimeSeries::from_values(t0, 15, x.clone()).unwrap();
    expect("Pearson series", (pearson_corr(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);

    // SavingsReport identities
    let detail = TimeSeries::from_values(
        t0,
        15,
        vec![
            SavingsDetail { adjusted_baseline_kwh: 600.0, metered_kwh: 500.0 },
            SavingsDetail { adjusted_baseline_kwh: 400.0, metered_kwh: 400.0 },
        ],
    )
    .unwrap();
    let rep = SavingsReport::from_detail(BaselineKind::LinearDaily, (t0, t0), detail);
    expect(
        "SavingsReport arithmetic",
        rep.avoided_kwh == rep.adjusted_baseline_kwh - rep.metered_kwh && rep.savings_pct == Some(10.0),
    );

    // GA monotone best-fitness trace
    let sphere = Sphere(vec![Bound::continuous(-4.0, 4.0); 8]);
    let ga_cfg = GAConfig { generations: 60, ..GAConfig::default() };
    let out = ga_minimize(&sphere, &ga_cfg, &[]).unwrap();
    expect("GA monotone trace", out.trace.windows(2).all(|w| w[1].best_fitness <= w[0].best_fitness));

    // gradient against central differences
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let net = Mlp::new(4, 6, 2, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|i| (0..4).map(|j| ((i * 4 + j) as f64 * 0.7).cos()).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..5).map(|i| vec![(i as f64).sin(), 0.3 * i as f64]).collect();
    let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    let (_, grad) = net.loss_and_grad(&xr, &yr);
    let p0 = net.params();
    let h = 1e-5;
    let grad_ok = (0..p0.len()).all(|k| {
        let mut a = net.clone();
        let mut b = net.clone();
        let (mut pa, mut pb) = (p0.clone(), p0.clone());
        pa[k] += h;
        pb[k] -= h;
        a.set_params(&pa);
        b.set_params(&pb);
        let fd = (a.loss_and_grad(&xr, &yr).0 - b.loss_and_grad(&xr, &yr).0) / (2.0 * h);
        (fd - grad[k]).abs() <= 1e-4 * fd.abs().max(grad[k].abs()).max(1e-3)
    });
    expect("gradient check", grad_ok);

    // determinism of the seeded operations
    let sc = Scenario::default();
    let h1 = sc.history(&plant, 9, 61, None).unwrap();
    let h2 = sc.history(&plant, 9, 61, None).unwrap();
    let dir1 = tempdir("a");
    let dir2 = tempdir("b");
    let f1 = write_history_csvs(&h1, &dir1).unwrap();
    let f2 = write_history_csvs(&h2, &dir2).unwrap();
    expect(
        "history CSV determinism",
        f1.iter().zip(&f2).all(|(a, b)| std::fs::read(a).unwrap() == std::fs::read(b).unwrap()),
    );
    let quick = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let s1 = train_surrogate(&h1, &quick).unwrap().to_json().unwrap();
    let s2 = train_surrogate(&h2, &quick).unwrap().to_json().unwrap();
    expect("surrogate determinism", s1 == s2);
    let rx: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64, (i as f64).sqrt()]).collect();
    let ry: Vec<Vec<f64>> = rx.iter().map(|x| vec![x[0] * 0.5 - x[1]]).collect();
    let r1 = Regressor::train(&rx, &ry, &quick).unwrap();
    let r2 = Regressor::train(&rx, &ry, &quick).unwrap();
    expect("regressor determinism", r1.0 == r2.0 && r1.1 == r2.1);
    let g1 = ga_minimize(&sphere, &ga_cfg, &[]).unwrap();
    expect("GA determinism", g1.best_x == out.best_x && g1.trace == out.trace);
    let small = ExperimentConfig {
        history_days: 70,
        deployment_days: 2,
        augmentation_days: 1,
        surrogate_holdout_days: 5,
        forecast: ForecastConfig {
            train: TrainConfig { max_epochs: 5, ..TrainConfig::default() },
            ..ForecastConfig::default()
        },
        surrogate: quick.clone(),
        stability_seeds: 10,
        baseline: BaselineKind::LinearDaily,
        ..ExperimentConfig::default()
    };
    let e1 = run_experiment(&small).unwrap().to_json().unwrap();
    let e2 = run_experiment(&small).unwrap().to_json().unwrap();
    expect("closed-loop determinism", e1 == e2);
    let _ = std::fs::remove_dir_all(&dir1);
    let _ = std::fs::remove_dir_all(&dir2);

    if failed.is_empty() {
        Ok("cube law, full-load COP, MAPE, Pearson, savings identities, GA trace, gradient check, determinism".into())
    } else {
        Err(format!("failed: {}", failed.join(", ")))
    }
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("chillopt-acceptance-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("optimizer oracle equivalence", criterion_1),
        ("closed-loop savings band", criterion_2),
        ("planted-ECM recovery", criterion_3),
        ("surrogate degradation and recovery", criterion_4),
        ("GA/PSO stability", criterion_5),
        ("forecast plausibility", criterion_6),
        ("unit-level invariants", criterion_7),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} ({name}): PASS [{secs:.1} s] {d}", i + 1),
            Err(d) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1} s] {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
