use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use chillopt::closed_loop::{run_experiment, write_logs_csv, write_mape_plot_csv, ClosedLoopReport, DeployPhase, ExperimentConfig};
use chillopt::forecaster::{fit_profile, forecast_profile, ForecastConfig, ProfileForecaster, ProfileTarget};
use chillopt::optimizer::{optimize_profile, write_recommendations_csv, ProfileOptConfig};
use chillopt::plant::{read_history_csvs, write_history_csvs, OperationRecord, PlantConfig, Scenario};
use chillopt::regressor::TrainConfig;
use chillopt::savings::{
    avoided_energy, daily_energy_kwh, fit_baseline, naive_savings_between, read_daily_energy_csv, write_daily_energy_csv,
    write_detail_csv, write_savings_plot_csv, BaselineKind, SavingsReport,
};
use chillopt::surrogate::{self, evaluate_surrogate, SurrogateModel};
use chillopt::timeseries::{read_scalar_csv, read_weather_csv, write_scalar_csv, TimeSeries};

use crate::manifest::{digest, sha256_hex, FileDigest, OutDir, RunManifest};
use crate::{CliError, Common, MethodArg, TargetArg};

struct Loaded<T> {
    value: T,
    path: Option<String>,
    sha256: Option<String>,
}

/// Defaults, overlaid by the config file when one is given.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<Loaded<T>, CliError> {
    let Some(path) = path else {
        return Ok(Loaded {
            value: T::default(),
            path: None,
            sha256: None,
        });
    };
    let text = fs::read(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_slice(&text);
    let value = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        CliError::Usage(format!("config {}: key `{key}`: {}", path.display(), e.inner()))
    })?;
    Ok(Loaded {
        value,
        path: Some(path.display().to_string()),
        sha256: Some(sha256_hex(&text)),
    })
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| data_err(path, e))
}

fn create(out: &OutDir, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    let p = out.path(name);
    Ok(BufWriter::new(fs::File::create(&p).map_err(|e| data_err(&p, e))?))
}

fn read_history(dir: &Path) -> Result<(TimeSeries<OperationRecord>, Vec<FileDigest>), CliError> {
    let h = read_history_csvs(dir).map_err(|e| data_err(dir, e))?;
    let inputs = chillopt::plant::HISTORY_FILES
        .iter()
        .map(|f| digest(&dir.join(f)))
        .collect::<Result<_, _>>()?;
    Ok((h, inputs))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Data(e.to_string()))
}

fn manifest<C: Serialize>(command: &str, cfg: &Loaded<C>, seed: u64, inputs: Vec<FileDigest>) -> Result<RunManifest, CliError> {
    Ok(RunManifest {
        command: command.to_string(),
        config_path: cfg.path.clone(),
        config_sha256: cfg.sha256.clone(),
        effective_config: serde_json::to_value(&cfg.value).map_err(|e| CliError::Data(e.to_string()))?,
        seed,
        inputs,
        outputs: Vec::new(),
        toolkit_version: chillopt::VERSION.to_string(),
        duration_secs: 0.0,
    })
}

fn config_inputs(common: &Common) -> Result<Vec<FileDigest>, CliError> {
    common.config.iter().map(|p| digest(p)).collect()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub days: usize,
    pub plant: PlantConfig,
    pub scenario: Scenario,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            seed: 0,
            days: 540,
            plant: PlantConfig::default(),
            scenario: Scenario::default(),
        }
    }
}

pub fn simulate(common: &Common, days: Option<usize>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<SimulateConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.seed = s;
    }
    if let Some(d) = days {
        cfg.value.days = d;
    }
    cfg.value.plant.validate()?;
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&chillopt::plant::HISTORY_FILES)?;
    let c = &cfg.value;
    let history = c.scenario.history(&c.plant, c.seed, c.days, None)?;
    for p in write_history_csvs(&history, &out.dir)? {
        out.record(p);
    }
    out.finish(manifest("simulate", &cfg, c.seed, config_inputs(common)?)?, started)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainForecastConfig {
    pub target: Option<ProfileTarget>,
    pub forecast: ForecastConfig,
}

pub fn train_forecast(common: &Common, data: &Path, target: Option<TargetArg>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<TrainForecastConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.forecast.train.seed = s;
    }
    if let Some(t) = target {
        cfg.value.target = Some(match t {
            TargetArg::Cooling => ProfileTarget::Cooling,
            TargetArg::Power => ProfileTarget::Power,
        });
    }
    let target = *cfg.value.target.get_or_insert(ProfileTarget::Cooling);
    cfg.value.forecast.validate()?;
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&["forecaster.json"])?;
    let (history, mut inputs) = read_history(data)?;
    let model = fit_profile(&history, target, &cfg.value.forecast)?;
    out.write("forecaster.json", model.to_json()?.as_bytes())?;
    if let Some(h) = &model.holdout {
        eprintln!("holdout 24 h MAPE {:.2}% ± {:.2} over {} days", h.mape_pct, h.ci_halfwidth_pct, h.n_days);
    }
    inputs.extend(config_inputs(common)?);
    let seed = cfg.value.forecast.train.seed;
    out.finish(manifest("train-forecast", &cfg, seed, inputs)?, started)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSurrogateConfig {
    pub train: TrainConfig,
    /// Trailing whole days scored but not trained on.
    pub holdout_days: usize,
}

pub fn train_surrogate(common: &Common, data: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<TrainSurrogateConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.train.seed = s;
    }
    cfg.value.train.validate()?;
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&["surrogate.json", "metrics.json"])?;
    let (history, mut inputs) = read_history(data)?;
    let per_day = history.intervals_per_day();
    let split = history.len().saturating_sub(cfg.value.holdout_days * per_day);
    let model = surrogate::train_surrogate(&history.slice(0..split)?, &cfg.value.train)?;
    out.write("surrogate.json", model.to_json()?.as_bytes())?;
    if split < history.len() {
        let m = evaluate_surrogate(&model, &history.slice(split..history.len())?)?;
        out.write("metrics.json", to_json(&m)?.as_bytes())?;
    }
    inputs.extend(config_inputs(common)?);
    let seed = cfg.value.train.seed;
    out.finish(manifest("train-surrogate", &cfg, seed, inputs)?, started)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub plant: PlantConfig,
    pub optimizer: ProfileOptConfig,
}

pub fn optimize(
    common: &Common,
    surrogate: &Path,
    weather: &Path,
    profile: Option<&Path>,
    forecaster: Option<&Path>,
    history: Option<&Path>,
) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<OptimizeConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.optimizer.ga.seed = s;
    }
    cfg.value.plant.validate()?;
    cfg.value.optimizer.ga.validate()?;
    cfg.value.optimizer.problem.validate()?;
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&["recommendations.csv", "profile.csv"])?;

    let read = |p: &Path| fs::read_to_string(p).map_err(|e| data_err(p, e));
    let model = SurrogateModel::from_json(&read(surrogate)?).map_err(|e| data_err(surrogate, e))?;
    let wx = read_weather_csv(open(weather)?).map_err(|e| data_err(weather, e))?;
    let mut inputs = vec![digest(surrogate)?, digest(weather)?];
    let cooling = match (profile, forecaster, history) {
        (Some(p), _, _) => {
            inputs.push(digest(p)?);
            read_scalar_csv(open(p)?, "cooling_kw").map_err(|e| data_err(p, e))?
        }
        (None, Some(f), Some(h)) => {
            let fm = ProfileForecaster::from_json(&read(f)?).map_err(|e| data_err(f, e))?;
            let (hist, hist_inputs) = read_history(h)?;
            inputs.push(digest(f)?);
            inputs.extend(hist_inputs);
            let recent = hist.map(|r| fm.target.value(r));
            forecast_profile(&fm, &wx, &recent)?
        }
        _ => return Err(CliError::Usage("optimize needs --profile, or --forecaster with --history".into())),
    };
    let recs = optimize_profile(&model, Some(&cfg.value.plant), &wx, &cooling, &cfg.value.optimizer)?;
    write_recommendations_csv(&recs, model.layout, create(&out, "recommendations.csv")?)?;
    out.record(out.path("recommendations.csv"));
    write_scalar_csv(&cooling, "cooling_kw", create(&out, "profile.csv")?)?;
    out.record(out.path("profile.csv"));
    let infeasible = recs.records().iter().flatten().filter(|r| !r.feasible).count();
    if infeasible > 0 {
        eprintln!("{infeasible} intervals had no feasible recommendation");
    }
    inputs.extend(config_inputs(common)?);
    let seed = cfg.value.optimizer.ga.seed;
    out.finish(manifest("optimize", &cfg, seed, inputs)?, started)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub method: BaselineKind,
    /// Used by the profile-forecaster method only.
    pub forecast: ForecastConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            method: BaselineKind::LinearDaily,
            forecast: ForecastConfig::baseline(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BenchmarkSummary {
    method: BaselineKind,
    adjusted_baseline_kwh: f64,
    metered_kwh: f64,
    avoided_kwh: f64,
    savings_pct: Option<f64>,
    naive_savings_pct: f64,
}

pub fn benchmark(common: &Common, baseline: &Path, reporting: &Path, method: Option<MethodArg>) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<BenchmarkConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.forecast.train.seed = s;
    }
    if let Some(m) = method {
        cfg.value.method = match m {
            MethodArg::LinearDaily => BaselineKind::LinearDaily,
            MethodArg::LinearMonthly => BaselineKind::LinearMonthly,
            MethodArg::ProfileForecaster => BaselineKind::ProfileForecaster,
        };
    }
    cfg.value.forecast.validate()?;
    let names = ["savings.json", "summary.json", "savings_detail.csv", "baseline_daily.csv", "savings_plot.csv"];
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&names)?;
    let (pre, mut inputs) = read_history(baseline)?;
    let (post, post_inputs) = read_history(reporting)?;
    inputs.extend(post_inputs);

    let model = fit_baseline(&pre, cfg.value.method, &cfg.value.forecast)?;
    let report = avoided_energy(&model, &post)?;
    let summary = BenchmarkSummary {
        method: report.method,
        adjusted_baseline_kwh: report.adjusted_baseline_kwh,
        metered_kwh: report.metered_kwh,
        avoided_kwh: report.avoided_kwh,
        savings_pct: report.savings_pct,
        naive_savings_pct: naive_savings_between(&pre, &post)?,
    };
    let daily = daily_energy_kwh(&pre);
    out.write("savings.json", report.to_json()?.as_bytes())?;
    out.write("summary.json", to_json(&summary)?.as_bytes())?;
    write_detail_csv(&report, create(&out, "savings_detail.csv")?)?;
    write_daily_energy_csv(&daily, create(&out, "baseline_daily.csv")?)?;
    write_savings_plot_csv(&daily, &report, create(&out, "savings_plot.csv")?)?;
    for n in &names[2..] {
        out.record(out.path(n));
    }
    inputs.extend(config_inputs(common)?);
    let seed = cfg.value.forecast.train.seed;
    out.finish(manifest("benchmark", &cfg, seed, inputs)?, started)
}

const CLOSED_LOOP_FILES: [&str; 7] = [
    "report.json",
    "logs.csv",
    "logs_augmentation.csv",
    "logs_retrained.csv",
    "savings_detail.csv",
    "mape_by_phase.csv",
    "savings_plot.csv",
];

fn write_closed_loop_plots(out: &mut OutDir, report: &ClosedLoopReport) -> Result<(), CliError> {
    write_mape_plot_csv(report, create(out, "mape_by_phase.csv")?)?;
    out.record(out.path("mape_by_phase.csv"));
    write_savings_plot_csv(&report.baseline_daily_kwh, &report.savings, create(out, "savings_plot.csv")?)?;
    out.record(out.path("savings_plot.csv"));
    Ok(())
}

pub fn closed_loop(common: &Common) -> Result<(), CliError> {
    let started = Instant::now();
    let mut cfg = load_config::<ExperimentConfig>(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.value.seed = s;
    }
    cfg.value.validate()?;
    let mut out = OutDir::new(&common.out, common.force)?;
    out.claim(&CLOSED_LOOP_FILES)?;
    let report = run_experiment(&cfg.value)?;
    out.write("report.json", report.to_json()?.as_bytes())?;
    for (name, phase) in [
        ("logs.csv", None),
        ("logs_augmentation.csv", Some(DeployPhase::Augmentation)),
        ("logs_retrained.csv", Some(DeployPhase::Retrained)),
    ] {
        write_logs_csv(&report, phase, create(&out, name)?)?;
        out.record(out.path(name));
    }
    write_detail_csv(&report.savings, create(&out, "savings_detail.csv")?)?;
    out.record(out.path("savings_detail.csv"));
    write_closed_loop_plots(&mut out, &report)?;
    let s = &report.surrogate;
    eprintln!(
        "surrogate power MAPE {:.2}% in-distribution, {:.2}% before retrain, {:.2}% after; savings {:.2}%",
        s.in_distribution.power_mape.mape_pct,
        s.pre_retrain.power_mape.mape_pct,
        s.post_retrain.power_mape.mape_pct,
        report.savings.savings_pct.unwrap_or(f64::NAN)
    );
    let seed = cfg.value.seed;
    out.finish(manifest("closed-loop", &cfg, seed, config_inputs(common)?)?, started)
}

pub fn report(input: &Path, out_dir: &Path, force: bool) -> Result<(), CliError> {
    let started = Instant::now();
    let mut out = OutDir::new(out_dir, force)?;
    let read = |name: &str| {
        let p = input.join(name);
        fs::read_to_string(&p).map_err(|e| data_err(&p, e))
    };
    let cfg = Loaded {
        value: serde_json::Value::Null,
        path: None,
        sha256: None,
    };
    let mut inputs = Vec::new();
    if input.join("report.json").exists() {
        out.claim(&["mape_by_phase.csv", "savings_plot.csv"])?;
        let report: ClosedLoopReport =
            serde_json::from_str(&read("report.json")?).map_err(|e| data_err(&input.join("report.json"), e))?;
        inputs.push(digest(&input.join("report.json"))?);
        write_closed_loop_plots(&mut out, &report)?;
    } else if input.join("savings.json").exists() {
        out.claim(&["savings_plot.csv"])?;
        let report: SavingsReport =
            serde_json::from_str(&read("savings.json")?).map_err(|e| data_err(&input.join("savings.json"), e))?;
        inputs.push(digest(&input.join("savings.json"))?);
        let daily_path = input.join("baseline_daily.csv");
        let daily = if daily_path.exists() {
            inputs.push(digest(&daily_path)?);
            read_daily_energy_csv(open(&daily_path)?).map_err(|e| data_err(&daily_path, e))?
        } else {
            Vec::new()
        };
        write_savings_plot_csv(&daily, &report, create(&out, "savings_plot.csv")?)?;
        out.record(out.path("savings_plot.csv"));
    } else {
        return Err(CliError::Data(format!("{}: no report.json or savings.json", input.display())));
    }
    out.finish(manifest("report", &cfg, 0, inputs)?, started)
}
