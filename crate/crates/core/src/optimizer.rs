//! Gain tuning with GA, PSO and GWO against the distance-error fitness.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::formation::polygon_spacing;
use crate::io::{format_sig, IoError};
use crate::sim::{run, MetricsFrame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("unknown algorithm `{0}` (expected ga, pso or gwo)")]
    UnknownAlgorithm(String),
    #[error("scenario must be 1, 2, 3 or 4, got {0}")]
    InvalidScenario(u8),
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ga,
    Pso,
    Gwo,
}

impl FromStr for Algorithm {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(Self::Ga),
            "pso" => Ok(Self::Pso),
            "gwo" => Ok(Self::Gwo),
            _ => Err(OptimizerError::UnknownAlgorithm(s.to_string())),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ga => "ga",
            Self::Pso => "pso",
            Self::Gwo => "gwo",
        })
    }
}

/// Tunable controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    C1Alpha,
    C2Alpha,
    C1Gamma,
    C2Gamma,
    A,
    B,
    AL,
    BL,
    Eps,
    H,
    EpsL,
}

impl ParamId {
    pub const ALL: [ParamId; 11] = [
        Self::C1Alpha,
        Self::C2Alpha,
        Self::C1Gamma,
        Self::C2Gamma,
        Self::A,
        Self::B,
        Self::AL,
        Self::BL,
        Self::Eps,
        Self::H,
        Self::EpsL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::C1Alpha => "c1_alpha",
            Self::C2Alpha => "c2_alpha",
            Self::C1Gamma => "c1_gamma",
            Self::C2Gamma => "c2_gamma",
            Self::A => "a",
            Self::B => "b",
            Self::AL => "a_l",
            Self::BL => "b_l",
            Self::Eps => "eps",
            Self::H => "h",
            Self::EpsL => "eps_l",
        }
    }

    /// Default search interval.
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Self::C1Alpha | Self::C2Alpha | Self::C1Gamma | Self::C2Gamma => (0.01, 20.0),
            Self::A | Self::B | Self::AL | Self::BL => (0.01, 10.0),
            Self::Eps | Self::H | Self::EpsL => (0.01, 0.99),
        }
    }

    pub fn set(self, cfg: &mut ScenarioConfig, value: f64) {
        let (g, p) = (&mut cfg.gains, &mut cfg.params);
        match self {
            Self::C1Alpha => g.c1_alpha = value,
            Self::C2Alpha => g.c2_alpha = value,
            Self::C1Gamma => g.c1_gamma = value,
            Self::C2Gamma => g.c2_gamma = value,
            Self::A => p.a = value,
            Self::B => p.b = value,
            Self::AL => p.a_l = value,
            Self::BL => p.b_l = value,
            Self::Eps => p.eps = value,
            Self::H => p.h = value,
            Self::EpsL => p.eps_l = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBound {
    pub param: ParamId,
    pub lower: f64,
    pub upper: f64,
}

/// Which parameters a scenario searches over and what the rest are pinned to.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub scenario: u8,
    pub free: Vec<ParamBound>,
    pub fixed: Vec<(ParamId, f64)>,
}

const SIGMOID_FIXED: [(ParamId, f64); 4] = [
    (ParamId::A, 5.0),
    (ParamId::B, 5.0),
    (ParamId::AL, 3.0),
    (ParamId::BL, 3.0),
];
const SMOOTHING_FIXED: [(ParamId, f64); 3] =
    [(ParamId::Eps, 0.1), (ParamId::H, 0.2), (ParamId::EpsL, 0.1)];

pub fn scenario_bounds(scenario: u8) -> Result<SearchSpace, OptimizerError> {
    let fixed: Vec<(ParamId, f64)> = match scenario {
        1 => Vec::new(),
        2 => SIGMOID_FIXED.to_vec(),
        3 => SMOOTHING_FIXED.to_vec(),
        4 => SIGMOID_FIXED
            .iter()
            .chain(&SMOOTHING_FIXED)
            .copied()
            .collect(),
        other => return Err(OptimizerError::InvalidScenario(other)),
    };
    let free = ParamId::ALL
        .iter()
        .filter(|id| !fixed.iter().any(|(f, _)| f == *id))
        .map(|&param| {
            let (lower, upper) = param.default_bounds();
            ParamBound {
                param,
                lower,
                upper,
            }
        })
        .collect();
    Ok(SearchSpace {
        scenario,
        free,
        fixed,
    })
}

impl SearchSpace {
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.free.iter().map(|b| (b.lower, b.upper)).collect()
    }

    /// Clamp into bounds and swap sigmoid pairs so that `a ≤ b`.
    pub fn repair(&self, x: &mut [f64]) {
        for (v, b) in x.iter_mut().zip(&self.free) {
            *v = v.clamp(b.lower, b.upper);
        }
        for (lo, hi) in [(ParamId::A, ParamId::B), (ParamId::AL, ParamId::BL)] {
            let i = self.free.iter().position(|b| b.param == lo);
            let j = self.free.iter().position(|b| b.param == hi);
            if let (Some(i), Some(j)) = (i, j) {
                if x[i] > x[j] {
                    x.swap(i, j);
                }
            }
        }
    }

    /// Base config with the fixed values and then `x` spliced in.
    pub fn apply(&self, base: &ScenarioConfig, x: &[f64]) -> ScenarioConfig {
        let mut cfg = base.clone();
        for &(id, v) in &self.fixed {
            id.set(&mut cfg, v);
        }
        for (b, &v) in self.free.iter().zip(x) {
            b.param.set(&mut cfg, v);
        }
        cfg
    }
}

/// `N(N−1)/2`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessSpec {
    pub d: f64,
    pub d_l: f64,
    pub n: usize,
}

impl FitnessSpec {
    /// Spacing and radius for a single-circle config.
    pub fn for_config(cfg: &ScenarioConfig) -> Result<Self, crate::formation::FormationError> {
        let n = cfg.agents.count;
        Ok(Self {
            d: polygon_spacing(n, cfg.params.d_l)?,
            d_l: cfg.params.d_l,
            n,
        })
    }
}

/// Root of the summed squared deviations of the shortest pair distances from
/// `d` and of the leader distances from `d_L`, over every frame.
pub fn fitness_from_frames(frames: &[MetricsFrame], spec: &FitnessSpec) -> f64 {
    let mut sum = 0.0;
    for f in frames {
        let k = spec.n.min(pair_count(f.n_alive));
        sum += f
            .adjacent_distances
            .iter()
            .take(k)
            .map(|x| (x - spec.d).powi(2))
            .sum::<f64>();
        sum += f
            .leader_distances
            .iter()
            .map(|x| (x - spec.d_l).powi(2))
            .sum::<f64>();
    }
    sum.sqrt()
}

/// Run `base` with `x` spliced in; divergence or an invalid candidate costs `+∞`.
pub fn fitness(x: &[f64], space: &SearchSpace, base: &ScenarioConfig, spec: &FitnessSpec) -> f64 {
    let cfg = space.apply(base, x);
    match run(&cfg) {
        Ok(out) => {
            let cost = fitness_from_frames(&out.metrics, spec);
            if cost.is_finite() {
                cost
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub population: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        if self.population < 2 {
            return Err(OptimizerError::InvalidConfig(format!(
                "population {} must be >= 2",
                self.population
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Best cost so far; entry 0 is the initial population, then one per iteration.
    pub history: Vec<f64>,
}

impl OptimizeResult {
    pub fn initial_best(&self) -> f64 {
        self.history[0]
    }
}

fn validate_bounds(bounds: &[(f64, f64)]) -> Result<(), OptimizerError> {
    if bounds.is_empty() {
        return Err(OptimizerError::InvalidConfig("no free parameters".into()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(OptimizerError::InvalidConfig(format!(
                "bound {k} = [{lo}, {hi}] must be finite with lower < upper"
            )));
        }
    }
    Ok(())
}

fn evaluate<F>(pop: &[Vec<f64>], objective: &F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pop.par_iter()
        .map(|x| {
            let c = objective(x);
            if c.is_nan() {
                f64::INFINITY
            } else {
                c
            }
        })
        .collect()
}

fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (k, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = k;
        }
    }
    best
}

struct Tracker {
    best: Vec<f64>,
    best_cost: f64,
    history: Vec<f64>,
}

impl Tracker {
    fn new(pop: &[Vec<f64>], costs: &[f64]) -> Self {
        let k = argmin(costs);
        Self {
            best: pop[k].clone(),
            best_cost: costs[k],
            history: vec![costs[k]],
        }
    }

    fn update(&mut self, pop: &[Vec<f64>], costs: &[f64]) {
        let k = argmin(costs);
        if costs[k] < self.best_cost {
            self.best_cost = costs[k];
            self.best = pop[k].clone();
        }
        self.history.push(self.best_cost);
    }

    fn finish(self) -> OptimizeResult {
        OptimizeResult {
            best: self.best,
            best_cost: self.best_cost,
            history: self.history,
        }
    }
}

fn clamp_into(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Minimise `objective` over the box `bounds`. `repair` runs on every
/// candidate after clamping. Deterministic for a given seed.
pub fn optimize<F, R>(
    cfg: &OptimizerConfig,
    bounds: &[(f64, f64)],
    repair: R,
    objective: F,
) -> Result<OptimizeResult, OptimizerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Fn(&mut [f64]),
{
    cfg.validate()?;
    validate_bounds(bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fix = |x: &mut Vec<f64>| {
        clamp_into(x, bounds);
        repair(x);
    };
    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| {
            let mut x: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect();
            fix(&mut x);
            x
        })
        .collect();
    let costs = evaluate(&pop, &objective);
    let mut tracker = Tracker::new(&pop, &costs);
    match cfg.algorithm {
        Algorithm::Ga => ga(
            cfg,
            bounds,
            &fix,
            &objective,
            &mut rng,
            &mut pop,
            costs,
            &mut tracker,
        ),
        Algorithm::Pso => pso(
            cfg,
            bounds,
            &fix,
            &objective,
            &mut rng,
            &mut pop,
            costs,
            &mut tracker,
        ),
        Algorithm::Gwo => gwo(
            cfg,
            bounds,
            &fix,
            &objective,
            &mut rng,
            &mut pop,
            costs,
            &mut tracker,
        ),
    }
    Ok(tracker.finish())
}

const TOURNAMENT: usize = 3;
const BLX_ALPHA: f64 = 0.5;
const MUTATION_SCALE: f64 = 0.1;

#[allow(clippy::too_many_arguments)]
fn ga<F, X>(
    cfg: &OptimizerConfig,
    bounds: &[(f64, f64)],
    fix: &X,
    objective: &F,
    rng: &mut ChaCha8Rng,
    pop: &mut Vec<Vec<f64>>,
    mut costs: Vec<f64>,
    tracker: &mut Tracker,
) where
    F: Fn(&[f64]) -> f64 + Sync,
    X: Fn(&mut Vec<f64>),
{
    let dim = bounds.len();
    let rate = 1.0 / dim as f64;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    for it in 0..cfg.iterations {
        // Mutation step shrinks linearly over the run.
        let decay = 1.0 - it as f64 / cfg.iterations as f64;
        let tournament = |rng: &mut ChaCha8Rng| {
            let mut best = rng.random_range(0..pop.len());
            for _ in 1..TOURNAMENT {
                let k = rng.random_range(0..pop.len());
                if costs[k] < costs[best] {
                    best = k;
                }
            }
            best
        };
        let elite = argmin(&costs);
        let mut next = Vec::with_capacity(pop.len());
        next.push(pop[elite].clone());
        while next.len() < pop.len() {
            let p1 = &pop[tournament(rng)];
            let p2 = &pop[tournament(rng)];
            let mut child: Vec<f64> = (0..dim)
                .map(|j| {
                    let (lo, hi) = (p1[j].min(p2[j]), p1[j].max(p2[j]));
                    let spread = hi - lo;
                    let u: f64 = rng.random();
                    lo - BLX_ALPHA * spread + u * (1.0 + 2.0 * BLX_ALPHA) * spread
                })
                .collect();
            for (j, v) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < rate {
                    let sigma = MUTATION_SCALE * (bounds[j].1 - bounds[j].0) * decay;
                    *v += sigma * std_normal.sample(rng);
                }
            }
            fix(&mut child);
            next.push(child);
        }
        // The elite keeps its known cost.
        let elite_cost = costs[elite];
        let mut new_costs = vec![elite_cost];
        new_costs.extend(evaluate(&next[1..], objective));
        *pop = next;
        costs = new_costs;
        tracker.update(pop, &costs);
    }
}

const PSO_INERTIA: f64 = 0.729;
const PSO_C: f64 = 1.494;
const PSO_VMAX: f64 = 0.2;

#[allow(clippy::too_many_arguments)]
fn pso<F, X>(
    cfg: &OptimizerConfig,
    bounds: &[(f64, f64)],
    fix: &X,
    objective: &F,
    rng: &mut ChaCha8Rng,
    pop: &mut [Vec<f64>],
    costs: Vec<f64>,
    tracker: &mut Tracker,
) where
    F: Fn(&[f64]) -> f64 + Sync,
    X: Fn(&mut Vec<f64>),
{
    let dim = bounds.len();
    let vmax: Vec<f64> = bounds.iter().map(|(lo, hi)| PSO_VMAX * (hi - lo)).collect();
    let mut vel: Vec<Vec<f64>> = pop
        .iter()
        .map(|_| {
            (0..dim)
                .map(|j| rng.random_range(-vmax[j]..=vmax[j]))
                .collect()
        })
        .collect();
    let mut pbest: Vec<Vec<f64>> = pop.to_vec();
    let mut pbest_cost = costs;
    for _ in 0..cfg.iterations {
        let g = tracker.best.clone();
        for (i, x) in pop.iter_mut().enumerate() {
            for j in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = PSO_INERTIA * vel[i][j]
                    + PSO_C * r1 * (pbest[i][j] - x[j])
                    + PSO_C * r2 * (g[j] - x[j]);
                vel[i][j] = v.clamp(-vmax[j], vmax[j]);
                x[j] += vel[i][j];
            }
            fix(x);
        }
        let costs = evaluate(pop, objective);
        for i in 0..pop.len() {
            if costs[i] < pbest_cost[i] {
                pbest_cost[i] = costs[i];
                pbest[i].clone_from(&pop[i]);
            }
        }
        tracker.update(pop, &costs);
    }
}

#[allow(clippy::too_many_arguments)]
fn gwo<F, X>(
    cfg: &OptimizerConfig,
    bounds: &[(f64, f64)],
    fix: &X,
    objective: &F,
    rng: &mut ChaCha8Rng,
    pop: &mut [Vec<f64>],
    mut costs: Vec<f64>,
    tracker: &mut Tracker,
) where
    F: Fn(&[f64]) -> f64 + Sync,
    X: Fn(&mut Vec<f64>),
{
    let dim = bounds.len();
    for it in 0..cfg.iterations {
        let a = 2.0 * (1.0 - it as f64 / cfg.iterations as f64);
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]).then(i.cmp(&j)));
        let leaders: Vec<Vec<f64>> = (0..3)
            .map(|k| pop[order[k.min(order.len() - 1)]].clone())
            .collect();
        for x in pop.iter_mut() {
            for j in 0..dim {
                let mut sum = 0.0;
                for leader in &leaders {
                    let r1: f64 = rng.random();
                    let r2: f64 = rng.random();
                    let big_a = 2.0 * a * r1 - a;
                    let big_c = 2.0 * r2;
                    let dist = (big_c * leader[j] - x[j]).abs();
                    sum += leader[j] - big_a * dist;
                }
                x[j] = sum / 3.0;
            }
            fix(x);
        }
        costs = evaluate(pop, objective);
        tracker.update(pop, &costs);
    }
}

/// Tune the free parameters of `space` on the single-circle scenario `base`.
pub fn tune(
    base: &ScenarioConfig,
    space: SearchSpace,
    cfg: OptimizerConfig,
) -> Result<OptimizeReport, OptimizerError> {
    let spec =
        FitnessSpec::for_config(base).map_err(|e| OptimizerError::InvalidConfig(e.to_string()))?;
    let result = optimize(
        &cfg,
        &space.bounds(),
        |x| space.repair(x),
        |x| fitness(x, &space, base, &spec),
    )?;
    Ok(OptimizeReport {
        config: cfg,
        space,
        result,
    })
}

/// Everything an optimisation run produced, with enough context to rerun it.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub config: OptimizerConfig,
    pub space: SearchSpace,
    pub result: OptimizeResult,
}

impl OptimizeReport {
    /// `key,value` rows: run settings, best cost and the parameter vector.
    pub fn write_summary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "key,value")?;
        writeln!(w, "algorithm,{}", self.config.algorithm)?;
        writeln!(w, "scenario,{}", self.space.scenario)?;
        writeln!(w, "seed,{}", self.config.seed)?;
        writeln!(w, "population,{}", self.config.population)?;
        writeln!(w, "iterations,{}", self.config.iterations)?;
        writeln!(w, "free_parameters,{}", self.space.dim())?;
        writeln!(
            w,
            "initial_best_cost,{}",
            format_sig(self.result.initial_best())
        )?;
        writeln!(w, "best_cost,{}", format_sig(self.result.best_cost))?;
        for (b, v) in self.space.free.iter().zip(&self.result.best) {
            writeln!(w, "param.{},{}", b.param.name(), format_sig(*v))?;
        }
        for (id, v) in &self.space.fixed {
            writeln!(w, "fixed.{},{}", id.name(), format_sig(*v))?;
        }
        w.flush()
    }

    pub fn write_history<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,best_cost")?;
        for (k, c) in self.result.history.iter().enumerate() {
            writeln!(w, "{k},{}", format_sig(*c))?;
        }
        w.flush()
    }

    /// Base scenario with the best parameters applied.
    pub fn best_config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        self.space.apply(base, &self.result.best)
    }

    /// Write `report.csv`, `history.csv` and `best_params.toml` into `dir`.
    pub fn emit(
        &self,
        base: &ScenarioConfig,
        dir: &Path,
    ) -> Result<Vec<std::path::PathBuf>, IoError> {
        let err = |path: &Path| {
            let path = path.display().to_string();
            move |source| IoError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(err(dir))?;
        let summary = dir.join("report.csv");
        let history = dir.join("history.csv");
        let best = dir.join("best_params.toml");
        let open = |p: &Path| {
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(err(p))
        };
        self.write_summary(open(&summary)?).map_err(err(&summary))?;
        self.write_history(open(&history)?).map_err(err(&history))?;
        std::fs::write(&best, self.best_config(base).to_toml_string()).map_err(err(&best))?;
        Ok(vec![summary, history, best])
    }
}
