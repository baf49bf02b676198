//! Deployment lifecycle as one seeded experiment.
//!
//! 1. Legacy history is generated; the cooling forecaster and the surrogate
//!    are trained on it and the surrogate is scored on a held-out tail.
//! 2. Each deployment day the cooling profile is forecast, setpoints are
//!    optimized on the surrogate and applied to the true plant.
//! 3. After the augmentation window the surrogate is retrained from scratch
//!    on history plus the deployment logs, then used for the remaining days.
//! 4. Savings over the whole deployment come from an adjusted baseline
//!    fitted on the legacy history.
//!
//! Seeds of the nested stages are derived from [`ExperimentConfig::seed`];
//! the `seed` fields of the nested configs are ignored.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::forecaster::{fit_profile, forecast_profile, ForecastConfig, ProfileTarget};
use crate::optimizer::{
    encode, layout_bounds, optimize_profile, stability_report, GAConfig, OptProblem, PSOConfig, ProfileOptConfig,
    StabilityReport,
};
use crate::plant::{
    legacy_policy, plant_step, simulate_legacy, OperationRecord, PlantConfig, PlantOutput, Scenario, SetpointVector,
};
use crate::regressor::TrainConfig;
use crate::savings::{avoided_energy, daily_energy_kwh, fit_baseline, BaselineKind, SavingsReport};
use crate::surrogate::{evaluate_surrogate, train_surrogate, train_surrogate_augmented, SurrogateMetrics, SurrogateModel};
use crate::timeseries::{mape, MapeResult, TimeSeries, Timestamp, WeatherRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub history_days: usize,
    pub deployment_days: usize,
    /// Deployment days logged before the surrogate is retrained.
    pub augmentation_days: usize,
    /// Trailing history days held out to score the initial surrogate.
    pub surrogate_holdout_days: usize,
    /// Times the augmentation logs are replicated in the retraining set.
    pub augmentation_repeats: usize,
    pub plant: PlantConfig,
    pub scenario: Scenario,
    pub forecast: ForecastConfig,
    pub surrogate: TrainConfig,
    pub optimizer: ProfileOptConfig,
    /// PSO settings for the stability summary only.
    pub pso: PSOConfig,
    pub stability_seeds: usize,
    pub baseline: BaselineKind,
    /// Largest move of a continuous setpoint per interval, as a fraction of
    /// its range. `None` applies recommendations as they are.
    pub step_limit: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            history_days: 540,
            deployment_days: 60,
            augmentation_days: 14,
            surrogate_holdout_days: 30,
            augmentation_repeats: 8,
            plant: PlantConfig::default(),
            scenario: Scenario::default(),
            forecast: ForecastConfig::default(),
            surrogate: TrainConfig::default(),
            optimizer: ProfileOptConfig {
                ga: GAConfig {
                    population: 32,
                    generations: 40,
                    ..GAConfig::default()
                },
                ..ProfileOptConfig::default()
            },
            pso: PSOConfig {
                swarm_size: 32,
                iterations: 40,
                ..PSOConfig::default()
            },
            stability_seeds: 20,
            baseline: BaselineKind::ProfileForecaster,
            step_limit: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.augmentation_days == 0 || self.augmentation_days >= self.deployment_days {
            return Err(Error::Config(format!(
                "augmentation_days must be in 1..deployment_days ({}), got {}",
                self.deployment_days, self.augmentation_days
            )));
        }
        if self.surrogate_holdout_days == 0 || self.surrogate_holdout_days + 60 > self.history_days {
            return Err(Error::Config(format!(
                "surrogate_holdout_days must leave at least 60 training days of history, got {} of {}",
                self.surrogate_holdout_days, self.history_days
            )));
        }
        if self.augmentation_repeats == 0 {
            return Err(Error::Config("augmentation_repeats must be positive".into()));
        }
        if let Some(s) = self.step_limit {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Config(format!("step_limit must be in (0, 1], got {s}")));
            }
        }
        self.plant.validate()?;
        self.forecast.validate()?;
        self.surrogate.validate()?;
        self.optimizer.ga.validate()?;
        self.optimizer.problem.validate()?;
        self.pso.validate()
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeployPhase {
    /// Initial surrogate, logs feed the retraining.
    Augmentation,
    /// Retrained surrogate.
    Retrained,
}

impl DeployPhase {
    pub fn name(self) -> &'static str {
        match self {
            DeployPhase::Augmentation => "augmentation",
            DeployPhase::Retrained => "retrained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalLog {
    pub timestamp: Timestamp,
    pub phase: DeployPhase,
    pub weather: WeatherRecord,
    pub cooling_demand_kw: f64,
    pub forecast_cooling_kw: f64,
    pub setpoints: SetpointVector,
    /// Surrogate prediction for the applied setpoints at the forecast load.
    pub predicted: PlantOutput,
    pub realized: PlantOutput,
    /// Legacy policy on the same interval, for the counterfactual.
    pub legacy_power_kw: f64,
    /// Optimizer's feasibility flag (on the surrogate).
    pub feasible: bool,
}

impl IntervalLog {
    pub fn operation_record(&self) -> OperationRecord {
        OperationRecord {
            timestamp: self.timestamp,
            weather: self.weather,
            cooling_demand_kw: self.cooling_demand_kw,
            setpoints: self.setpoints.clone(),
            output: self.realized,
        }
    }

    /// Load the plant was asked to carry: the forecast, capped by what the
    /// building actually drew.
    pub fn served_target_kw(&self) -> f64 {
        self.forecast_cooling_kw.min(self.cooling_demand_kw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePhases {
    pub in_distribution: SurrogateMetrics,
    pub pre_retrain: SurrogateMetrics,
    pub post_retrain: SurrogateMetrics,
    pub pre_retrain_drift: f64,
    pub post_retrain_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortfallSummary {
    pub tolerance: f64,
    pub feasible_intervals: usize,
    pub met_intervals: usize,
    pub fraction_met: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub toolkit_version: String,
    pub seed: u64,
    pub history_start: Timestamp,
    pub deployment_start: Timestamp,
    pub retrain_at: Timestamp,
    pub deployment_end: Timestamp,
    pub forecaster_holdout: Option<MapeResult>,
    /// Day-ahead cooling forecast against realized demand over deployment.
    pub deployment_forecast: MapeResult,
    pub surrogate: SurrogatePhases,
    pub savings: SavingsReport,
    /// Against the legacy policy replayed on identical conditions.
    pub counterfactual_savings_pct: f64,
    pub shortfall: ShortfallSummary,
    pub stability: StabilityReport,
    pub baseline_daily_kwh: Vec<(NaiveDate, f64)>,
    pub logs: Vec<IntervalLog>,
}

impl ClosedLoopReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn logs_in(&self, phase: DeployPhase) -> impl Iterator<Item = &IntervalLog> {
        self.logs.iter().filter(move |l| l.phase == phase)
    }
}

/// `post.power_mape / pre.power_mape`.
pub fn drift_metric(pre: &SurrogateMetrics, post: &SurrogateMetrics) -> Result<f64> {
    let base = pre.power_mape.mape_pct;
    if !(base > 0.0) {
        return Err(Error::DegenerateReference(format!("reference power MAPE is {base}")));
    }
    Ok(post.power_mape.mape_pct / base)
}

/// Moves each continuous slot at most `frac` of its range away from
/// `prev`. On/off decisions pass through.
pub fn apply_step_limit(prev: &SetpointVector, next: &SetpointVector, frac: f64) -> Result<SetpointVector> {
    let layout = next.layout();
    let (p, mut x) = (encode(prev), encode(next));
    for ((v, p), b) in x.iter_mut().zip(&p).zip(layout_bounds(layout)) {
        if !b.discrete {
            let d = frac * (b.hi - b.lo);
            *v = v.clamp(p - d, p + d);
        }
    }
    Ok(SetpointVector::from_flat(layout, &x)?.canonical())
}

fn records_of<'a>(logs: impl Iterator<Item = &'a IntervalLog>, step_minutes: u32) -> Result<TimeSeries<OperationRecord>> {
    let recs: Vec<OperationRecord> = logs.map(IntervalLog::operation_record).collect();
    let start = recs.first().ok_or(Error::EmptyInput)?.timestamp;
    TimeSeries::from_values(start, step_minutes, recs)
}

fn unseen(model: &SurrogateModel, data: &TimeSeries<OperationRecord>) -> Result<()> {
    if model.trained_on(data.start(), data.end()) {
        return Err(Error::DataLeakage(format!(
            "surrogate scoring window {}..{} overlaps its training data",
            data.start(),
            data.end()
        )));
    }
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ClosedLoopReport> {
    cfg.validate().map_err(Error::in_phase("config"))?;
    let seed = |k: u64| cfg.seed.wrapping_mul(1000).wrapping_add(k);

    // phase 1: legacy operation and initial models
    let history_phase = || -> Result<_> {
        let cond = cfg.scenario.conditions(cfg.seed, cfg.history_days + cfg.deployment_days)?;
        let split = cfg.history_days * cond.intervals_per_day();
        let history = simulate_legacy(&cfg.plant, &cond.slice(0..split)?, None)?;
        let deployment = cond.slice(split..cond.len())?;
        let mut fc = cfg.forecast.clone();
        fc.train.seed = seed(1);
        let forecaster = fit_profile(&history, ProfileTarget::Cooling, &fc)?;
        let hold = (cfg.history_days - cfg.surrogate_holdout_days) * history.intervals_per_day();
        let (sur_train, sur_hold) = (history.slice(0..hold)?, history.slice(hold..history.len())?);
        let sc = TrainConfig {
            seed: seed(2),
            ..cfg.surrogate.clone()
        };
        let surrogate = train_surrogate(&sur_train, &sc)?;
        unseen(&surrogate, &sur_hold)?;
        let in_dist = evaluate_surrogate(&surrogate, &sur_hold)?;
        Ok((history, deployment, forecaster, surrogate, in_dist))
    };
    let (history, deployment, forecaster, surrogate0, in_dist) = history_phase().map_err(Error::in_phase("history"))?;

    let per_day = history.intervals_per_day();
    let step = history.step_minutes();
    let caps = cfg.plant.chiller_capacities();
    let mut opt = cfg.optimizer.clone();
    opt.ga.seed = seed(4);
    let mut cooling_recent: Vec<f64> = history.records()[history.len() - cfg.forecast.lag_window..]
        .iter()
        .map(|r| r.as_ref().map_or(0.0, |r| r.output.cooling_kw))
        .collect();
    let mut logs: Vec<IntervalLog> = Vec::with_capacity(deployment.len());
    let mut prev_applied: Option<SetpointVector> = history.records().last().and_then(|r| r.as_ref()).map(|r| r.setpoints.clone());
    let mut retrained: Option<SurrogateModel> = None;
    let mut pre_retrain: Option<SurrogateMetrics> = None;

    for day in 0..cfg.deployment_days {
        if day == cfg.augmentation_days {
            // phase 3: score the initial surrogate on the new patterns, retrain
            let retrain = || -> Result<_> {
                let aug = records_of(logs.iter(), step)?;
                unseen(&surrogate0, &aug)?;
                let pre = evaluate_surrogate(&surrogate0, &aug)?;
                let sc = TrainConfig {
                    seed: seed(3),
                    ..cfg.surrogate.clone()
                };
                let model = train_surrogate_augmented(&history, Some((&aug, cfg.augmentation_repeats)), &sc)?;
                Ok((pre, model))
            };
            let (pre, model) = retrain().map_err(Error::in_phase("retrain"))?;
            pre_retrain = Some(pre);
            retrained = Some(model);
        }
        let (model, phase) = match &retrained {
            Some(m) => (m, DeployPhase::Retrained),
            None => (&surrogate0, DeployPhase::Augmentation),
        };
        // phase 2: forecast the day, optimize on the surrogate, apply to the plant
        let mut run_day = || -> Result<()> {
            let cond = deployment.slice(day * per_day..(day + 1) * per_day)?;
            let weather = cond.map(|c| c.weather);
            let recent = TimeSeries::from_values(
                cond.start().plus_minutes(-((cooling_recent.len() as i64) * step as i64)),
                step,
                cooling_recent.clone(),
            )?;
            let profile = forecast_profile(&forecaster, &weather, &recent)?;
            let recs = optimize_profile(model, Some(&cfg.plant), &weather, &profile, &opt)?;
            for i in 0..cond.len() {
                let (Some(c), Some(target), Some(rec)) = (cond.get(i), profile.get(i), recs.get(i)) else {
                    return Err(Error::InvalidSeries(format!("deployment interval {} is missing", cond.timestamp_at(i))));
                };
                let mut sp = rec.best_setpoints.clone();
                if let (Some(limit), Some(prev)) = (cfg.step_limit, &prev_applied) {
                    sp = apply_step_limit(prev, &sp, limit)?;
                }
                let predicted = model.predict(&sp, &c.weather, *target)?;
                let realized = plant_step(&cfg.plant, &c.weather, &sp, c.cooling_demand_kw)?;
                let legacy = plant_step(
                    &cfg.plant,
                    &c.weather,
                    &legacy_policy(&cfg.plant, &c.weather, c.cooling_demand_kw),
                    c.cooling_demand_kw,
                )?;
                cooling_recent.remove(0);
                cooling_recent.push(realized.cooling_kw);
                logs.push(IntervalLog {
                    timestamp: cond.timestamp_at(i),
                    phase,
                    weather: c.weather,
                    cooling_demand_kw: c.cooling_demand_kw,
                    forecast_cooling_kw: *target,
                    setpoints: sp.clone(),
                    predicted,
                    realized,
                    legacy_power_kw: legacy.power_kw,
                    feasible: rec.feasible,
                });
                prev_applied = Some(sp);
            }
            Ok(())
        };
        run_day().map_err(Error::in_phase("deployment"))?;
    }
    let retrained = retrained.expect("augmentation_days < deployment_days");
    let pre_retrain = pre_retrain.expect("set with the retrained model");

    let post_retrain = (|| -> Result<_> {
        let post = records_of(logs.iter().filter(|l| l.phase == DeployPhase::Retrained), step)?;
        unseen(&retrained, &post)?;
        evaluate_surrogate(&retrained, &post)
    })()
    .map_err(Error::in_phase("retrain"))?;

    // phase 4: savings and summaries
    let summarize = || -> Result<_> {
        let reporting = records_of(logs.iter(), step)?;
        let baseline = fit_baseline(&history, cfg.baseline, &ForecastConfig::baseline())?;
        let savings = avoided_energy(&baseline, &reporting)?;
        let realized: f64 = logs.iter().map(|l| l.realized.power_kw).sum();
        let legacy: f64 = logs.iter().map(|l| l.legacy_power_kw).sum();
        let demand = reporting.map(|r| r.cooling_demand_kw);
        let forecast = TimeSeries::from_values(reporting.start(), step, logs.iter().map(|l| l.forecast_cooling_kw).collect())?;
        let deployment_forecast = mape(&demand, &forecast)?;

        let tol = cfg.optimizer.problem.shortfall_tolerance;
        let feasible: Vec<&IntervalLog> = logs.iter().filter(|l| l.feasible).collect();
        let met = feasible
            .iter()
            .filter(|l| l.realized.cooling_kw >= (1.0 - tol) * l.served_target_kw())
            .count();
        let shortfall = ShortfallSummary {
            tolerance: tol,
            feasible_intervals: feasible.len(),
            met_intervals: met,
            fraction_met: if feasible.is_empty() { 0.0 } else { met as f64 / feasible.len() as f64 },
        };

        // optimizer stability at the peak forecast interval, on the deployed model
        let peak = logs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.forecast_cooling_kw.total_cmp(&b.1.forecast_cooling_kw))
            .map(|(i, _)| i)
            .ok_or(Error::EmptyInput)?;
        let problem = OptProblem::new(&retrained, logs[peak].weather, logs[peak].forecast_cooling_kw, &cfg.optimizer.problem, Some(&caps));
        let ga = GAConfig {
            seed: seed(5),
            ..cfg.optimizer.ga.clone()
        };
        let pso = PSOConfig {
            seed: seed(6),
            ..cfg.pso.clone()
        };
        let stability = stability_report(&problem, &ga, &pso, cfg.stability_seeds)?;
        Ok((savings, 100.0 * (legacy - realized) / legacy, deployment_forecast, shortfall, stability))
    };
    let (savings, counterfactual, deployment_forecast, shortfall, stability) = summarize().map_err(Error::in_phase("savings"))?;

    let surrogate = SurrogatePhases {
        pre_retrain_drift: drift_metric(&in_dist, &pre_retrain)?,
        post_retrain_drift: drift_metric(&in_dist, &post_retrain)?,
        in_distribution: in_dist,
        pre_retrain,
        post_retrain,
    };
    Ok(ClosedLoopReport {
        toolkit_version: crate::VERSION.to_string(),
        seed: cfg.seed,
        history_start: history.start(),
        deployment_start: deployment.start(),
        retrain_at: deployment.timestamp_at(cfg.augmentation_days * per_day),
        deployment_end: deployment.end(),
        forecaster_holdout: forecaster.holdout.clone(),
        deployment_forecast,
        surrogate,
        savings,
        counterfactual_savings_pct: counterfactual,
        shortfall,
        stability,
        baseline_daily_kwh: daily_energy_kwh(&history),
        logs,
    })
}

/// Interval log CSV, optionally restricted to one phase.
pub fn write_logs_csv<W: Write>(report: &ClosedLoopReport, phase: Option<DeployPhase>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let Some(first) = report.logs.first() else {
        return Err(Error::EmptyInput);
    };
    let mut header: Vec<String> = [
        "timestamp",
        "phase",
        "dry_bulb_c",
        "rel_humidity_pct",
        "cooling_demand_kw",
        "forecast_cooling_kw",
        "predicted_power_kw",
        "predicted_cooling_kw",
        "realized_power_kw",
        "realized_cooling_kw",
        "legacy_power_kw",
        "feasible",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(first.setpoints.layout().slot_names());
    w.write_record(&header)?;
    for l in report.logs.iter().filter(|l| phase.is_none_or(|p| p == l.phase)) {
        let mut row = vec![
            l.timestamp.to_string(),
            l.phase.name().to_string(),
            l.weather.dry_bulb_c.to_string(),
            l.weather.rel_humidity_pct.to_string(),
            l.cooling_demand_kw.to_string(),
            l.forecast_cooling_kw.to_string(),
            l.predicted.power_kw.to_string(),
            l.predicted.cooling_kw.to_string(),
            l.realized.power_kw.to_string(),
            l.realized.cooling_kw.to_string(),
            l.legacy_power_kw.to_string(),
            l.feasible.to_string(),
        ];
        row.extend(l.setpoints.flatten().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `phase,power_mape_pct,power_ci_pct,cooling_mape_pct,ood_fraction,n_points`.
pub fn write_mape_plot_csv<W: Write>(report: &ClosedLoopReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["phase", "power_mape_pct", "power_ci_pct", "cooling_mape_pct", "ood_fraction", "n_points"])?;
    let s = &report.surrogate;
    for (name, m) in [
        ("in_distribution", &s.in_distribution),
        ("pre_retrain", &s.pre_retrain),
        ("post_retrain", &s.post_retrain),
    ] {
        w.write_record([
            name.to_string(),
            m.power_mape.mape_pct.to_string(),
            m.power_mape.ci_halfwidth_pct.to_string(),
            m.cooling_mape.mape_pct.to_string(),
            m.ood_fraction.to_string(),
            m.n_points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
