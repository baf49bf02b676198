//! Setpoint search: a mixed binary/continuous GA (the production path) and
//! a global-best PSO comparator, over any [`PlantModel`].
//!
//! Both work on a flat vector in [`PlantLayout`] slot order. Binary slots
//! hold exactly 0 or 1 in the GA; PSO relaxes them to `[0, 1]` and
//! thresholds at 0.5.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec::ExecMode;
use crate::forecaster::CoolingProfile;
use crate::plant::{PlantConfig, PlantLayout, PlantModel, PlantOutput, SetpointVector, SlotRange};
use crate::timeseries::{TimeSeries, WeatherRecord};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// generic search

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    pub discrete: bool,
}

impl Bound {
    pub fn continuous(lo: f64, hi: f64) -> Bound {
        Bound { lo, hi, discrete: false }
    }

    pub fn binary() -> Bound {
        Bound {
            lo: 0.0,
            hi: 1.0,
            discrete: true,
        }
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A minimization problem over a bounded box.
pub trait Objective: Sync {
    fn bounds(&self) -> &[Bound];
    fn fitness(&self, x: &[f64]) -> Result<f64>;
    /// Moves a candidate onto the feasible side of hard constraints.
    fn repair(&self, _x: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluations: usize,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best_x: Vec<f64>,
    pub best_fitness: f64,
    pub evaluations: usize,
    /// Best-so-far after each generation/iteration, starting with the
    /// initial population.
    pub trace: Vec<TracePoint>,
}

impl SearchOutcome {
    /// Evaluations spent until the best-so-far came within `frac` of the
    /// final best.
    pub fn evaluations_to_within(&self, frac: f64) -> usize {
        let goal = self.best_fitness + frac * self.best_fitness.abs();
        self.trace
            .iter()
            .find(|p| p.best_fitness <= goal)
            .map_or(self.evaluations, |p| p.evaluations)
    }
}

fn check_bounds(b: &[Bound], x: &[f64]) -> Result<()> {
    if x.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: x.len(),
        });
    }
    if let Some(v) = x.iter().zip(b).find(|(v, b)| !(**v >= b.lo && **v <= b.hi)) {
        return Err(Error::OutOfRange {
            name: "candidate slot",
            value: *v.0,
        });
    }
    Ok(())
}

fn evaluate_all<O: Objective + ?Sized>(obj: &O, exec: ExecMode, pop: &[Vec<f64>]) -> Result<Vec<f64>> {
    exec.map(pop, |x| obj.fitness(x)).into_iter().collect()
}

fn random_point(bounds: &[Bound], rng: &mut ChaCha8Rng) -> Vec<f64> {
    bounds
        .iter()
        .map(|b| {
            if b.discrete {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.random_range(b.lo..=b.hi)
            }
        })
        .collect()
}

/// Reflects `v` back into `[lo, hi]`.
fn reflect(v: f64, b: &Bound) -> f64 {
    let w = b.width();
    if w <= 0.0 {
        return b.lo;
    }
    let mut t = (v - b.lo).rem_euclid(2.0 * w);
    if t > w {
        t = 2.0 * w - t;
    }
    (b.lo + t).clamp(b.lo, b.hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GAConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    /// Per-gene probability; `None` means 1 / dimension.
    pub mutation_rate: Option<f64>,
    /// Standard deviation as a fraction of each slot's range.
    pub mutation_scale: f64,
    pub elitism: usize,
    pub seed: u64,
    /// Optional hard cap on fitness evaluations.
    pub max_evaluations: Option<usize>,
    pub exec: ExecMode,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population: 64,
            generations: 200,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: None,
            mutation_scale: 0.1,
            elitism: 2,
            seed: 0,
            max_evaluations: None,
            exec: ExecMode::default(),
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.population % 2 != 0 {
            return Err(Error::Config("population must be even and at least 2".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config("elitism must be smaller than population".into()));
        }
        if self.tournament_size == 0 {
            return Err(Error::Config("tournament_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config("crossover_rate must be in [0, 1]".into()));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::Config("mutation_rate must be in [0, 1]".into()));
            }
        }
        if !(self.mutation_scale >= 0.0) {
            return Err(Error::Config("mutation_scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Evaluations a full run spends.
    pub fn budget(&self) -> usize {
        let full = self.population + self.generations * (self.population - self.elitism);
        self.max_evaluations.map_or(full, |m| m.min(full))
    }
}

/// Generational GA with tournament selection, uniform crossover, Gaussian
/// mutation with reflection (bit flips for binary slots) and elitism.
/// `initial` candidates replace the first random individuals.
pub fn ga_minimize<O: Objective + ?Sized>(obj: &O, cfg: &GAConfig, initial: &[Vec<f64>]) -> Result<SearchOutcome> {
    cfg.validate()?;
    let bounds = obj.bounds().to_vec();
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pm = cfg.mutation_rate.unwrap_or(1.0 / dim as f64);
    let budget = cfg.budget();

    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|i| match initial.get(i) {
            Some(x) => x.clone(),
            None => random_point(&bounds, &mut rng),
        })
        .collect();
    for x in &mut pop {
        obj.repair(x);
        check_bounds(&bounds, x)?;
    }
    let mut fit = evaluate_all(obj, cfg.exec, &pop)?;
    let mut evaluations = pop.len();
    let (mut best_x, mut best_f) = best_of(&pop, &fit);
    let mut trace = vec![TracePoint {
        evaluations,
        best_fitness: best_f,
    }];

    for _ in 0..cfg.generations {
        let n_children = cfg.population - cfg.elitism;
        if evaluations + n_children > budget {
            break;
        }
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = order[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        let next_fit_elite: Vec<f64> = order[..cfg.elitism].iter().map(|&i| fit[i]).collect();

        let mut children = Vec::with_capacity(n_children + 1);
        while children.len() < n_children {
            let a = tournament(&fit, cfg.tournament_size, &mut rng);
            let b = tournament(&fit, cfg.tournament_size, &mut rng);
            let (mut c1, mut c2) = (pop[a].clone(), pop[b].clone());
            if rng.random_bool(cfg.crossover_rate) {
                for j in 0..dim {
                    if rng.random_bool(0.5) {
                        std::mem::swap(&mut c1[j], &mut c2[j]);
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for (j, b) in bounds.iter().enumerate() {
                    if rng.random_bool(pm) {
                        c[j] = if b.discrete {
                            1.0 - c[j]
                        } else {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            reflect(c[j] + z * cfg.mutation_scale * b.width(), b)
                        };
                    }
                }
                obj.repair(c);
            }
            children.push(c1);
            children.push(c2);
        }
        children.truncate(n_children);
        let child_fit = evaluate_all(obj, cfg.exec, &children)?;
        evaluations += children.len();
        next.extend(children);
        pop = next;
        fit = next_fit_elite.into_iter().chain(child_fit).collect();

        let (bx, bf) = best_of(&pop, &fit);
        if bf < best_f {
            best_f = bf;
            best_x = bx;
        }
        trace.push(TracePoint {
            evaluations,
            best_fitness: best_f,
        });
    }
    Ok(SearchOutcome {
        best_x,
        best_fitness: best_f,
        evaluations,
        trace,
    })
}

fn tournament(fit: &[f64], k: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.random_range(0..fit.len());
    for _ in 1..k {
        let c = rng.random_range(0..fit.len());
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}

fn best_of(pop: &[Vec<f64>], fit: &[f64]) -> (Vec<f64>, f64) {
    let i = (0..fit.len()).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).expect("non-empty population");
    (pop[i].clone(), fit[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PSOConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of each slot's range.
    pub velocity_clamp: f64,
    pub seed: u64,
    pub max_evaluations: Option<usize>,
    pub exec: ExecMode,
}

impl Default for PSOConfig {
    fn default() -> Self {
        PSOConfig {
            swarm_size: 64,
            iterations: 200,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            velocity_clamp: 0.5,
            seed: 0,
            max_evaluations: None,
            exec: ExecMode::default(),
        }
    }
}

impl PSOConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size == 0 {
            return Err(Error::Config("swarm_size must be positive".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("velocity_clamp", self.velocity_clamp),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        let full = self.swarm_size * (self.iterations + 1);
        self.max_evaluations.map_or(full, |m| m.min(full))
    }
}

fn decode_relaxed(bounds: &[Bound], pos: &[f64]) -> Vec<f64> {
    pos.iter()
        .zip(bounds)
        .map(|(&p, b)| {
            if b.discrete {
                // logistic threshold of the relaxed bit
                let s = 1.0 / (1.0 + (-(p - 0.5) * 10.0).exp());
                if s >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            } else {
                p
            }
        })
        .collect()
}

/// Global-best PSO with velocity clamping; binary slots are relaxed.
pub fn pso_minimize<O: Objective + ?Sized>(obj: &O, cfg: &PSOConfig, initial: &[Vec<f64>]) -> Result<SearchOutcome> {
    cfg.validate()?;
    let bounds = obj.bounds().to_vec();
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vmax: Vec<f64> = bounds.iter().map(|b| cfg.velocity_clamp * b.width()).collect();
    let budget = cfg.budget();

    let mut pos: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|i| match initial.get(i) {
            Some(x) => x.clone(),
            None => bounds.iter().map(|b| rng.random_range(b.lo..=b.hi)).collect(),
        })
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| vmax.iter().map(|&v| rng.random_range(-v..=v)).collect())
        .collect();

    let decode_all = |pos: &mut [Vec<f64>]| -> Vec<Vec<f64>> {
        pos.iter_mut()
            .map(|p| {
                let mut x = decode_relaxed(&bounds, p);
                obj.repair(&mut x);
                // write repaired bits back so the particle sits where it was scored
                for (j, b) in bounds.iter().enumerate() {
                    if b.discrete && (x[j] >= 0.5) != (p[j] >= 0.5) {
                        p[j] = x[j];
                    } else if !b.discrete {
                        p[j] = x[j];
                    }
                }
                x
            })
            .collect()
    };

    let xs = decode_all(&mut pos);
    let mut fit = evaluate_all(obj, cfg.exec, &xs)?;
    let mut evaluations = xs.len();
    let mut pbest = pos.clone();
    let mut pbest_x = xs.clone();
    let mut pbest_f = fit.clone();
    let (mut gbest_x, mut gbest_f) = best_of(&pbest_x, &pbest_f);
    let gi = (0..fit.len()).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).expect("non-empty swarm");
    let mut gbest = pos[gi].clone();
    let mut trace = vec![TracePoint {
        evaluations,
        best_fitness: gbest_f,
    }];

    for _ in 0..cfg.iterations {
        if evaluations + cfg.swarm_size > budget {
            break;
        }
        for i in 0..cfg.swarm_size {
            for j in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[i][j]
                    + cfg.cognitive * r1 * (pbest[i][j] - pos[i][j])
                    + cfg.social * r2 * (gbest[j] - pos[i][j]);
                vel[i][j] = v.clamp(-vmax[j], vmax[j]);
                pos[i][j] = (pos[i][j] + vel[i][j]).clamp(bounds[j].lo, bounds[j].hi);
            }
        }
        let xs = decode_all(&mut pos);
        fit = evaluate_all(obj, cfg.exec, &xs)?;
        evaluations += xs.len();
        for i in 0..cfg.swarm_size {
            if fit[i] < pbest_f[i] {
                pbest_f[i] = fit[i];
                pbest[i] = pos[i].clone();
                pbest_x[i] = xs[i].clone();
                if fit[i] < gbest_f {
                    gbest_f = fit[i];
                    gbest = pos[i].clone();
                    gbest_x = xs[i].clone();
                }
            }
        }
        trace.push(TracePoint {
            evaluations,
            best_fitness: gbest_f,
        });
    }
    Ok(SearchOutcome {
        best_x: gbest_x,
        best_fitness: gbest_f,
        evaluations,
        trace,
    })
}

// ---------------------------------------------------------------------------
// plant problem

/// Minimize predicted power subject to meeting `target_cooling_kw`.
#[derive(Clone, Copy)]
pub struct OptProblem<'a> {
    pub model: &'a dyn PlantModel,
    pub weather: WeatherRecord,
    pub cooling_demand_kw: f64,
    pub target_cooling_kw: f64,
    pub shortfall_tolerance: f64,
    pub penalty_weight: f64,
    /// Chiller nameplate capacities; when set, candidates are repaired so
    /// the online capacity covers the target.
    pub chiller_capacity_kw: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSettings {
    pub shortfall_tolerance: f64,
    pub penalty_weight: f64,
    pub capacity_repair: bool,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        ProblemSettings {
            shortfall_tolerance: 0.02,
            penalty_weight: 10.0,
            capacity_repair: true,
        }
    }
}

impl ProblemSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_weight > 1.0) {
            return Err(Error::Config("penalty_weight must exceed 1".into()));
        }
        if !(0.0..1.0).contains(&self.shortfall_tolerance) {
            return Err(Error::Config("shortfall_tolerance must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Slot bounds in layout order.
pub fn layout_bounds(layout: PlantLayout) -> Vec<Bound> {
    let mut b = Vec::with_capacity(layout.dim());
    let cont = |r: SlotRange| Bound::continuous(r.lo, r.hi);
    b.extend(std::iter::repeat_n(Bound::binary(), layout.n_chillers));
    b.extend(std::iter::repeat_n(cont(SlotRange::CHW_SUPPLY_C), layout.n_chillers));
    b.extend(std::iter::repeat_n(Bound::binary(), layout.n_pumps));
    b.extend(std::iter::repeat_n(cont(SlotRange::PUMP_SPEED), layout.n_pumps));
    b.extend(std::iter::repeat_n(Bound::binary(), layout.n_towers));
    b.extend(std::iter::repeat_n(cont(SlotRange::TOWER_FAN), layout.n_towers));
    b
}

/// Flattened form a search works on: off devices keep in-range values.
pub fn encode(setpoints: &SetpointVector) -> Vec<f64> {
    let l = setpoints.layout();
    let mut x = setpoints.flatten();
    for (v, b) in x.iter_mut().zip(layout_bounds(l)) {
        if !b.discrete && *v < b.lo {
            *v = b.lo;
        }
    }
    x
}

impl<'a> OptProblem<'a> {
    pub fn new(
        model: &'a dyn PlantModel,
        weather: WeatherRecord,
        target_cooling_kw: f64,
        settings: &ProblemSettings,
        capacities: Option<&'a [f64]>,
    ) -> OptProblem<'a> {
        OptProblem {
            model,
            weather,
            cooling_demand_kw: target_cooling_kw,
            target_cooling_kw,
            shortfall_tolerance: settings.shortfall_tolerance,
            penalty_weight: settings.penalty_weight,
            chiller_capacity_kw: if settings.capacity_repair { capacities } else { None },
        }
    }

    pub fn layout(&self) -> PlantLayout {
        self.model.layout()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_cooling_kw >= 0.0 && self.target_cooling_kw.is_finite()) {
            return Err(Error::OutOfRange {
                name: "target_cooling_kw",
                value: self.target_cooling_kw,
            });
        }
        if !(self.penalty_weight > 1.0) {
            return Err(Error::Config("penalty_weight must exceed 1".into()));
        }
        Ok(())
    }

    pub fn shortfall(&self, predicted: &PlantOutput) -> f64 {
        (self.target_cooling_kw - predicted.cooling_kw).max(0.0)
    }

    pub fn fitness_of(&self, predicted: &PlantOutput) -> f64 {
        predicted.power_kw + self.penalty_weight * self.shortfall(predicted)
    }

    pub fn is_feasible(&self, predicted: &PlantOutput) -> bool {
        predicted.cooling_kw >= (1.0 - self.shortfall_tolerance) * self.target_cooling_kw - 1e-9
    }

    pub fn predict(&self, candidate: &SetpointVector) -> Result<PlantOutput> {
        candidate.validate(self.layout())?;
        self.model.evaluate(candidate, &self.weather, self.cooling_demand_kw)
    }

    /// `power + penalty_weight * max(0, target - cooling)` under the model.
    pub fn fitness(&self, candidate: &SetpointVector) -> Result<f64> {
        Ok(self.fitness_of(&self.predict(candidate)?))
    }

    pub fn result_from(&self, x: &[f64], outcome: &SearchOutcome) -> Result<OptResult> {
        let best = SetpointVector::from_flat(self.layout(), x)?;
        let predicted = self.predict(&best)?;
        Ok(OptResult {
            fitness: self.fitness_of(&predicted),
            shortfall_kw: self.shortfall(&predicted),
            feasible: self.is_feasible(&predicted),
            target_cooling_kw: self.target_cooling_kw,
            penalty_weight: self.penalty_weight,
            best_setpoints: best.canonical(),
            predicted,
            evaluations: outcome.evaluations,
            trace: outcome.trace.iter().map(|p| p.best_fitness).collect(),
            trace_evaluations: outcome.trace.iter().map(|p| p.evaluations).collect(),
        })
    }
}

impl Objective for OptProblem<'_> {
    fn bounds(&self) -> &[Bound] {
        // bounds are cached per layout
        bounds_for(self.layout())
    }

    fn fitness(&self, x: &[f64]) -> Result<f64> {
        check_bounds(self.bounds(), x)?;
        if x.iter().zip(self.bounds()).any(|(v, b)| b.discrete && *v != 0.0 && *v != 1.0) {
            return Err(Error::OutOfRange {
                name: "binary slot",
                value: f64::NAN,
            });
        }
        OptProblem::fitness(self, &SetpointVector::from_flat(self.layout(), x)?)
    }

    fn repair(&self, x: &mut [f64]) {
        let Some(caps) = self.chiller_capacity_kw else { return };
        if self.target_cooling_kw <= 0.0 {
            return;
        }
        let l = self.layout();
        let nc = l.n_chillers;
        let mut online: f64 = (0..nc).filter(|&i| x[i] >= 0.5).map(|i| caps[i]).sum();
        while online < self.target_cooling_kw {
            let Some(i) = (0..nc)
                .filter(|&i| x[i] < 0.5)
                .max_by(|&a, &b| caps[a].total_cmp(&caps[b]).then(b.cmp(&a)))
            else {
                break;
            };
            x[i] = 1.0;
            online += caps[i];
        }
        if (0..nc).all(|i| x[i] < 0.5) {
            x[0] = 1.0;
        }
        let pumps = 2 * nc..2 * nc + l.n_pumps;
        if pumps.clone().all(|i| x[i] < 0.5) {
            x[pumps.start] = 1.0;
        }
        let towers = 2 * (nc + l.n_pumps)..2 * (nc + l.n_pumps) + l.n_towers;
        if towers.clone().all(|i| x[i] < 0.5) {
            x[towers.start] = 1.0;
        }
    }
}

fn bounds_for(layout: PlantLayout) -> &'static [Bound] {
    use std::collections::HashMap;
    use std::sync::{Mutex, OnceLock};
    static CACHE: OnceLock<Mutex<HashMap<PlantLayout, &'static [Bound]>>> = OnceLock::new();
    let mut map = CACHE.get_or_init(Default::default).lock().expect("bounds cache");
    map.entry(layout)
        .or_insert_with(|| Box::leak(layout_bounds(layout).into_boxed_slice()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_setpoints: SetpointVector,
    pub predicted: PlantOutput,
    pub fitness: f64,
    pub shortfall_kw: f64,
    pub feasible: bool,
    pub target_cooling_kw: f64,
    pub penalty_weight: f64,
    pub evaluations: usize,
    /// Best fitness after each generation (initial population first).
    pub trace: Vec<f64>,
    pub trace_evaluations: Vec<usize>,
}

impl OptResult {
    /// Recomputes the fitness from the stored fields.
    pub fn recomputed_fitness(&self) -> f64 {
        self.predicted.power_kw + self.penalty_weight * (self.target_cooling_kw - self.predicted.cooling_kw).max(0.0)
    }
}

/// Greedy shutdown pass: switches off, one at a time, every device whose
/// removal does not raise fitness.
fn prune_idle(problem: &OptProblem, out: &mut SearchOutcome) -> Result<()> {
    let bounds = problem.bounds();
    for j in 0..bounds.len() {
        if !bounds[j].discrete || out.best_x[j] < 0.5 {
            continue;
        }
        let mut x = out.best_x.clone();
        x[j] = 0.0;
        problem.repair(&mut x);
        if x[j] != 0.0 {
            continue;
        }
        let f = Objective::fitness(problem, &x)?;
        out.evaluations += 1;
        if f <= out.best_fitness {
            out.best_x = x;
            out.best_fitness = f;
        }
    }
    Ok(())
}

pub fn ga_optimize(problem: &OptProblem, config: &GAConfig) -> Result<OptResult> {
    ga_optimize_from(problem, config, &[])
}

/// GA seeded with `initial` candidates (e.g. a warm start).
pub fn ga_optimize_from(problem: &OptProblem, config: &GAConfig, initial: &[SetpointVector]) -> Result<OptResult> {
    problem.validate()?;
    let init: Vec<Vec<f64>> = initial.iter().map(encode).collect();
    let mut out = ga_minimize(problem, config, &init)?;
    prune_idle(problem, &mut out)?;
    problem.result_from(&out.best_x, &out)
}

pub fn pso_optimize(problem: &OptProblem, config: &PSOConfig) -> Result<OptResult> {
    problem.validate()?;
    let mut out = pso_minimize(problem, config, &[])?;
    prune_idle(problem, &mut out)?;
    problem.result_from(&out.best_x, &out)
}

/// Brute-force reference: first-k chillers staged, every pump at one shared
/// speed, every tower at one shared fan speed, chilled water at its upper
/// bound. Returns the best candidate and its fitness.
pub fn grid_search(problem: &OptProblem) -> Result<(SetpointVector, f64)> {
    let l = problem.layout();
    let speeds: Vec<f64> = (3..=10).map(|i| i as f64 / 10.0).collect();
    let fans: Vec<f64> = (2..=10).map(|i| i as f64 / 10.0).collect();
    let mut best: Option<(SetpointVector, f64)> = None;
    for k in 1..=l.n_chillers {
        for &s in &speeds {
            for &f in &fans {
                let mut c = SetpointVector::all_off(l);
                for i in 0..k {
                    c.chiller_on[i] = true;
                    c.chw_supply_setpoint_c[i] = SlotRange::CHW_SUPPLY_C.hi;
                }
                c.pump_on.iter_mut().for_each(|b| *b = true);
                c.pump_speed_frac.iter_mut().for_each(|v| *v = s);
                c.tower_on.iter_mut().for_each(|b| *b = true);
                c.tower_fan_frac.iter_mut().for_each(|v| *v = f);
                let fit = problem.fitness(&c)?;
                if best.as_ref().is_none_or(|b| fit < b.1) {
                    best = Some((c, fit));
                }
            }
        }
    }
    best.ok_or(Error::EmptyInput)
}

// ---------------------------------------------------------------------------
// stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub best_fitness: f64,
    pub evaluations: usize,
    pub evaluations_to_within_5pct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmStats {
    pub algorithm: String,
    pub runs: Vec<SeedRun>,
    pub mean_best: f64,
    pub std_best: f64,
    pub coefficient_of_variation: f64,
    pub mean_evaluations_to_within_5pct: f64,
}

impl AlgorithmStats {
    fn from_runs(algorithm: &str, runs: Vec<SeedRun>) -> AlgorithmStats {
        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.best_fitness).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r.best_fitness - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let std = var.sqrt();
        AlgorithmStats {
            algorithm: algorithm.to_string(),
            mean_best: mean,
            std_best: std,
            coefficient_of_variation: if mean != 0.0 { std / mean.abs() } else { 0.0 },
            mean_evaluations_to_within_5pct: runs.iter().map(|r| r.evaluations_to_within_5pct as f64).sum::<f64>() / n,
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n_seeds: usize,
    pub evaluation_budget: usize,
    pub ga: AlgorithmStats,
    pub pso: AlgorithmStats,
}

/// Runs both algorithms on seeds `seed, seed + 1, ...` (each config's own
/// base seed) at a shared evaluation budget.
pub fn stability_report(problem: &OptProblem, ga: &GAConfig, pso: &PSOConfig, n_seeds: usize) -> Result<StabilityReport> {
    if n_seeds < 10 {
        return Err(Error::Config(format!("stability report needs at least 10 seeds, got {n_seeds}")));
    }
    problem.validate()?;
    let budget = ga.budget().min(pso.budget());
    let run = |seed: u64, outcome: SearchOutcome| SeedRun {
        seed,
        best_fitness: outcome.best_fitness,
        evaluations: outcome.evaluations,
        evaluations_to_within_5pct: outcome.evaluations_to_within(0.05),
    };
    let mut ga_runs = Vec::with_capacity(n_seeds);
    let mut pso_runs = Vec::with_capacity(n_seeds);
    for i in 0..n_seeds as u64 {
        let g = GAConfig {
            seed: ga.seed.wrapping_add(i),
            max_evaluations: Some(budget),
            ..ga.clone()
        };
        ga_runs.push(run(g.seed, ga_minimize(problem, &g, &[])?));
        let p = PSOConfig {
            seed: pso.seed.wrapping_add(i),
            max_evaluations: Some(budget),
            ..pso.clone()
        };
        pso_runs.push(run(p.seed, pso_minimize(problem, &p, &[])?));
    }
    Ok(StabilityReport {
        n_seeds,
        evaluation_budget: budget,
        ga: AlgorithmStats::from_runs("ga", ga_runs),
        pso: AlgorithmStats::from_runs("pso", pso_runs),
    })
}

// ---------------------------------------------------------------------------
// profiles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptConfig {
    pub ga: GAConfig,
    pub problem: ProblemSettings,
    /// Seed each interval's population with the previous interval's best.
    pub warm_start: bool,
}

impl Default for ProfileOptConfig {
    fn default() -> Self {
        ProfileOptConfig {
            ga: GAConfig::default(),
            problem: ProblemSettings::default(),
            warm_start: false,
        }
    }
}

/// Independent GA run per interval (same seed for every interval). Without
/// warm start the intervals run through `config.ga.exec`; with it they are
/// sequential. Intervals with missing weather or target stay absent.
pub fn optimize_profile(
    model: &dyn PlantModel,
    plant: Option<&PlantConfig>,
    weather: &TimeSeries<WeatherRecord>,
    profile: &CoolingProfile,
    config: &ProfileOptConfig,
) -> Result<TimeSeries<OptResult>> {
    weather.ensure_aligned(profile)?;
    config.problem.validate()?;
    let caps = plant.map(|p| p.chiller_capacities());
    let caps = caps.as_deref();
    let solve = |i: usize, init: &[SetpointVector]| -> Result<Option<OptResult>> {
        let (Some(w), Some(&target)) = (weather.get(i), profile.get(i)) else {
            return Ok(None);
        };
        let p = OptProblem::new(model, *w, target.max(0.0), &config.problem, caps);
        // the inner loop runs sequentially when intervals are spread out
        let ga = GAConfig {
            exec: if config.warm_start { config.ga.exec } else { ExecMode::Sequential },
            ..config.ga.clone()
        };
        ga_optimize_from(&p, &ga, init).map(Some)
    };
    let records = if config.warm_start {
        let mut out = Vec::with_capacity(weather.len());
        let mut prev: Option<SetpointVector> = None;
        for i in 0..weather.len() {
            let init: Vec<SetpointVector> = prev.iter().cloned().collect();
            let r = solve(i, &init)?;
            if let Some(r) = &r {
                prev = Some(r.best_setpoints.clone());
            }
            out.push(r);
        }
        out
    } else {
        config
            .ga
            .exec
            .map_range(weather.len(), |i| solve(i, &[]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };
    TimeSeries::new(weather.start(), weather.step_minutes(), records)
}

/// `timestamp,` + slot columns + `predicted_power_kw,predicted_cooling_kw,feasible`.
pub fn write_recommendations_csv<W: Write>(results: &TimeSeries<OptResult>, layout: PlantLayout, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(layout.slot_names());
    header.extend(["predicted_power_kw", "predicted_cooling_kw", "feasible"].map(String::from));
    w.write_record(&header)?;
    for (t, r) in results.iter() {
        let mut row = vec![t.to_string()];
        match r {
            Some(r) => {
                row.extend(r.best_setpoints.flatten().iter().map(|v| v.to_string()));
                row.push(r.predicted.power_kw.to_string());
                row.push(r.predicted.cooling_kw.to_string());
                row.push(r.feasible.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), layout.dim() + 3)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{legacy_policy, plant_step, PlantConfig, TruePlant};
    use crate::timeseries::Timestamp;
    use proptest::prelude::*;

    struct Sphere(Vec<Bound>);

    impl Objective for Sphere {
        fn bounds(&self) -> &[Bound] {
            &self.0
        }
        fn fitness(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().map(|v| v * v).sum())
        }
    }

    fn sphere() -> Sphere {
        Sphere(vec![Bound::continuous(-5.0, 5.0); 10])
    }

    #[test]
    fn reflect_stays_inside() {
        let b = Bound::continuous(0.0, 1.0);
        assert_eq!(reflect(1.25, &b), 0.75);
        assert_eq!(reflect(-0.25, &b), 0.25);
        assert_eq!(reflect(2.5, &b), 0.5);
    }

    #[test]
    fn ga_solves_sphere_with_monotone_trace() {
        let out = ga_minimize(&sphere(), &GAConfig { seed: 1, ..GAConfig::default() }, &[]).unwrap();
        assert!(out.best_fitness < 1e-2, "{}", out.best_fitness);
        assert!(out.trace.windows(2).all(|w| w[1].best_fitness <= w[0].best_fitness));
        assert_eq!(out, ga_minimize(&sphere(), &GAConfig { seed: 1, ..GAConfig::default() }, &[]).unwrap());
    }

    #[test]
    fn pso_solves_sphere_faster() {
        let cfg = PSOConfig { seed: 1, ..PSOConfig::default() };
        let p = pso_minimize(&sphere(), &cfg, &[]).unwrap();
        assert!(p.best_fitness < 1e-2, "{}", p.best_fitness);
        assert_eq!(p, pso_minimize(&sphere(), &cfg, &[]).unwrap());
        let g = ga_minimize(&sphere(), &GAConfig { seed: 1, ..GAConfig::default() }, &[]).unwrap();
        let reach = |o: &SearchOutcome| o.trace.iter().find(|t| t.best_fitness < 1e-2).map(|t| t.evaluations);
        let (pe, ge) = (reach(&p).unwrap(), reach(&g).unwrap());
        assert!(pe < ge, "pso {pe} vs ga {ge}");
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a = ga_minimize(&sphere(), &GAConfig { exec: ExecMode::Sequential, generations: 20, ..Default::default() }, &[]).unwrap();
        let b = ga_minimize(&sphere(), &GAConfig { exec: ExecMode::Parallel, generations: 20, ..Default::default() }, &[]).unwrap();
        assert_eq!(a, b);
        let a = pso_minimize(&sphere(), &PSOConfig { exec: ExecMode::Sequential, iterations: 20, ..Default::default() }, &[]).unwrap();
        let b = pso_minimize(&sphere(), &PSOConfig { exec: ExecMode::Parallel, iterations: 20, ..Default::default() }, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(GAConfig { population: 63, ..Default::default() }.validate().is_err());
        assert!(GAConfig { elitism: 64, ..Default::default() }.validate().is_err());
        assert!(PSOConfig { inertia: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(GAConfig::default().budget(), 64 + 200 * 62);
        assert_eq!(PSOConfig::default().budget(), 64 * 201);
    }

    fn wx() -> WeatherRecord {
        WeatherRecord::new(30.0, 70.0).unwrap()
    }

    #[test]
    fn fitness_is_power_plus_penalty() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let s = legacy_policy(&c, &wx(), 3000.0);
        let out = plant_step(&c, &wx(), &s, 3000.0).unwrap();
        let mut p = OptProblem::new(&plant, wx(), 3000.0, &ProblemSettings::default(), None);
        assert_eq!(p.fitness(&s).unwrap(), out.power_kw);
        p.target_cooling_kw = out.cooling_kw + 10.0;
        assert!((p.fitness(&s).unwrap() - (out.power_kw + 100.0)).abs() < 1e-9);
        let mut bad = s.clone();
        bad.pump_speed_frac[0] = 1.5;
        assert!(p.fitness(&bad).is_err());
        assert!(Objective::fitness(&p, &vec![2.0; 42]).is_err());
    }

    #[test]
    fn zero_target_finds_all_off() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let caps = c.chiller_capacities();
        let p = OptProblem::new(&plant, wx(), 0.0, &ProblemSettings::default(), Some(&caps));
        let r = ga_optimize(&p, &GAConfig::default()).unwrap();
        assert!(r.best_setpoints.is_all_off(), "{:?}", r.best_setpoints);
        assert_eq!(r.predicted.power_kw, 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn ga_matches_grid_on_true_plant() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let caps = c.chiller_capacities();
        for (t, rh, q) in [(31.0, 70.0, 5200.0), (24.0, 80.0, 2400.0)] {
            let w = WeatherRecord::new(t, rh).unwrap();
            let p = OptProblem::new(&plant, w, q, &ProblemSettings::default(), Some(&caps));
            let (_, grid) = grid_search(&p).unwrap();
            let r = ga_optimize(&p, &GAConfig::default()).unwrap();
            assert!(r.fitness <= 1.02 * grid, "ga {} grid {grid}", r.fitness);
            assert!(r.feasible);
            assert_eq!(r.fitness, r.recomputed_fitness());
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
            r.best_setpoints.validate(c.layout()).unwrap();
        }
    }

    #[test]
    fn stability_report_shape() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let caps = c.chiller_capacities();
        let p = OptProblem::new(&plant, wx(), 3000.0, &ProblemSettings::default(), Some(&caps));
        let ga = GAConfig { generations: 10, ..Default::default() };
        let pso = PSOConfig { iterations: 10, ..Default::default() };
        assert!(stability_report(&p, &ga, &pso, 5).is_err());
        let r = stability_report(&p, &ga, &pso, 10).unwrap();
        assert_eq!(r.ga.runs.len(), 10);
        assert_eq!(r.pso.runs.len(), 10);
        assert!(r.ga.runs.iter().chain(&r.pso.runs).all(|x| x.evaluations <= r.evaluation_budget));
        // a single row reproduces on its own
        let one = ga_minimize(&p, &GAConfig { seed: 3, max_evaluations: Some(r.evaluation_budget), ..ga }, &[]).unwrap();
        assert_eq!(one.best_fitness, r.ga.runs[3].best_fitness);
    }

    #[test]
    fn profile_optimization() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let start = Timestamp::from_ymd_hm(2019, 10, 1, 0, 0).unwrap();
        let w = TimeSeries::from_values(start, 15, vec![wx(); 3]).unwrap();
        let cfg = ProfileOptConfig {
            ga: GAConfig { generations: 30, ..Default::default() },
            ..Default::default()
        };
        let zero = TimeSeries::from_values(start, 15, vec![0.0; 3]).unwrap();
        let r = optimize_profile(&plant, Some(&c), &w, &zero, &cfg).unwrap();
        for x in r.records().iter().flatten() {
            assert!(x.predicted.power_kw < 1.0);
        }
        let flat = TimeSeries::from_values(start, 15, vec![2500.0; 3]).unwrap();
        let r = optimize_profile(&plant, Some(&c), &w, &flat, &cfg).unwrap();
        assert_eq!(r.get(0), r.get(1));
        assert_eq!(r.get(1), r.get(2));
        let warm = optimize_profile(&plant, Some(&c), &w, &flat, &ProfileOptConfig { warm_start: true, ..cfg.clone() }).unwrap();
        assert!(warm.records().iter().flatten().all(|x| x.feasible));

        let mut buf = Vec::new();
        write_recommendations_csv(&r, c.layout(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().ends_with("tower_fan_4,predicted_power_kw,predicted_cooling_kw,feasible"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn repair_covers_target() {
        let c = PlantConfig::default();
        let plant = TruePlant(&c);
        let caps = c.chiller_capacities();
        let p = OptProblem::new(&plant, wx(), 4000.0, &ProblemSettings::default(), Some(&caps));
        let mut x = encode(&SetpointVector::all_off(c.layout()));
        p.repair(&mut x);
        let s = SetpointVector::from_flat(c.layout(), &x).unwrap();
        assert!(s.online_capacity_kw(&c) >= 4000.0);
        assert!(s.can_serve());
    }

    proptest! {
        #[test]
        fn penalty_dominance(power in 0.0f64..5000.0, c1 in 0.0f64..6000.0, c2 in 0.0f64..6000.0, target in 0.0f64..6000.0) {
            let c = PlantConfig::default();
            let plant = TruePlant(&c);
            let p = OptProblem::new(&plant, wx(), target, &ProblemSettings::default(), None);
            let a = PlantOutput { power_kw: power, cooling_kw: c1 };
            let b = PlantOutput { power_kw: power, cooling_kw: c2 };
            if p.shortfall(&a) < p.shortfall(&b) {
                prop_assert!(p.fitness_of(&a) <= p.fitness_of(&b));
            }
        }
    }
}
