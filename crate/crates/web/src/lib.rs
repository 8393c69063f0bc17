//! Browser bindings for the kinetics engine.
//!
//! Every export takes the model text and a JSON options object and returns a
//! JSON string. The plain `*_json` functions hold the logic so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use kinetics::cme::{
    build_generator, enumerate_states, oracle_integrator, solve_with_generator, stationary_distribution,
    ProbabilityVector,
};
use kinetics::ensemble::run_ensemble;
use kinetics::hybrid::HybridConfig;
use kinetics::ode::IntegratorConfig;
use kinetics::stochastic::{ApproxMethod, DEFAULT_EPSILON};
use kinetics::{derive_run_seed, parse_model, Grid, Method, ReactionNetwork};

const MAX_SAMPLES: usize = 5_000;
const MAX_RUNS: usize = 20_000;
const MAX_STATES: usize = 200_000;

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub method: String,
    pub t_end: f64,
    pub samples: usize,
    pub seed: u64,
    pub runs: usize,
    pub epsilon: Option<f64>,
    pub tau: Option<f64>,
    pub theta_x: Option<f64>,
    pub theta_a: Option<f64>,
    pub rtol: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            method: "ssa".into(),
            t_end: 10.0,
            samples: 101,
            seed: 0,
            runs: 100,
            epsilon: None,
            tau: None,
            theta_x: None,
            theta_a: None,
            rtol: None,
        }
    }
}

impl RunOptions {
    fn method(&self) -> Result<Method, String> {
        let integrator = IntegratorConfig {
            rel_tol: self.rtol.unwrap_or(IntegratorConfig::default().rel_tol),
            ..Default::default()
        };
        let m = match self.method.as_str() {
            "ssa" => Method::Ssa,
            "tau" => match self.tau {
                Some(tau) => Method::Approx(ApproxMethod::TauFixed { tau }),
                None => Method::Approx(ApproxMethod::TauAdaptive {
                    epsilon: self.epsilon.unwrap_or(DEFAULT_EPSILON),
                }),
            },
            "cle" => Method::Approx(ApproxMethod::Cle {
                tau: self.tau.ok_or("the CLE needs a step size tau")?,
            }),
            "ode" => Method::Ode(integrator),
            "hybrid" => {
                let d = HybridConfig::default();
                Method::Hybrid(HybridConfig {
                    amount_threshold: self.theta_x.unwrap_or(d.amount_threshold),
                    propensity_threshold: self.theta_a.unwrap_or(d.propensity_threshold),
                    repartition_interval: None,
                    integrator,
                })
            }
            other => return Err(format!("unknown method `{other}`")),
        };
        m.validate().map_err(|e| e.to_string())?;
        Ok(m)
    }

    fn grid(&self) -> Result<Grid, String> {
        if self.samples == 0 || self.samples > MAX_SAMPLES {
            return Err(format!("samples must lie in 1..={MAX_SAMPLES}"));
        }
        Grid::uniform(self.t_end, self.samples).map_err(|e| e.to_string())
    }
}

fn parse(model: &str) -> Result<ReactionNetwork, String> {
    parse_model(model).map_err(|e| e.to_string())
}

fn options<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, String> {
    if json.trim().is_empty() {
        serde_json::from_str("{}")
    } else {
        serde_json::from_str(json)
    }
    .map_err(|e| format!("bad options: {e}"))
}

fn names(network: &ReactionNetwork) -> Vec<String> {
    network.species_names().into_iter().map(String::from).collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrajectoryOut {
    pub species: Vec<String>,
    pub method: String,
    pub time: Vec<f64>,
    /// One series per species.
    pub values: Vec<Vec<f64>>,
    pub events: u64,
    pub jumps: u64,
}

pub fn simulate_json(model: &str, opts: &str) -> Result<String, String> {
    let network = parse(model)?;
    let o: RunOptions = options(opts)?;
    let method = o.method()?;
    let grid = o.grid()?;
    let traj = method
        .simulate(&network, &grid, derive_run_seed(o.seed, 0))
        .map_err(|e| e.to_string())?;
    let out = TrajectoryOut {
        species: names(&network),
        method: method.tag().into(),
        values: (0..network.n_species()).map(|s| traj.species_series(s)).collect(),
        time: traj.grid,
        events: traj.counters.events,
        jumps: traj.counters.jumps,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnsembleOut {
    pub species: Vec<String>,
    pub method: String,
    pub runs: u64,
    pub time: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
}

pub fn ensemble_json(model: &str, opts: &str) -> Result<String, String> {
    let network = parse(model)?;
    let o: RunOptions = options(opts)?;
    if o.runs == 0 || o.runs > MAX_RUNS {
        return Err(format!("runs must lie in 1..={MAX_RUNS}"));
    }
    let method = o.method()?;
    let grid = o.grid()?;
    // The browser has no threads; one worker runs inline.
    let stats = run_ensemble(&network, &method, o.runs, &grid, o.seed, 1).map_err(|e| e.to_string())?;
    let n = grid.len();
    let out = EnsembleOut {
        species: names(&network),
        method: method.tag().into(),
        runs: stats.count(),
        time: grid.times().to_vec(),
        mean: (0..network.n_species())
            .map(|s| (0..n).map(|k| stats.mean(k, s)).collect())
            .collect(),
        variance: (0..network.n_species())
            .map(|s| (0..n).map(|k| stats.variance(k, s)).collect())
            .collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default)]
pub struct CmeOptions {
    /// One cap per species, or a single cap for all.
    pub caps: Vec<u64>,
    /// Transient time; `None` asks for the stationary distribution.
    pub time: Option<f64>,
}

impl Default for CmeOptions {
    fn default() -> Self {
        Self {
            caps: vec![30],
            time: None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DistributionOut {
    pub species: Vec<String>,
    pub states: usize,
    pub leaked: f64,
    /// Marginal distribution of each species over `0..=cap`.
    pub marginals: Vec<Vec<f64>>,
    pub means: Vec<f64>,
}

pub fn cme_json(model: &str, opts: &str) -> Result<String, String> {
    let network = parse(model)?;
    let o: CmeOptions = options(opts)?;
    let caps = match o.caps.len() {
        1 => vec![o.caps[0]; network.n_species()],
        _ => o.caps,
    };
    let space = enumerate_states(&network, &caps, MAX_STATES).map_err(|e| e.to_string())?;
    let generator = build_generator(&network, &space);
    let dist = match o.time {
        Some(t) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(format!("time must be non-negative, got {t}"));
            }
            let p0 = ProbabilityVector::point_mass(&space, &network.initial_amounts())
                .ok_or("initial state lies outside the caps")?;
            solve_with_generator(&generator, &p0, t, oracle_integrator()).map_err(|e| e.to_string())?
        }
        None => stationary_distribution(&space, &generator).map_err(|e| e.to_string())?,
    };
    let out = DistributionOut {
        species: names(&network),
        states: space.len(),
        leaked: dist.leaked,
        marginals: (0..network.n_species()).map(|s| dist.marginal(&space, s)).collect(),
        means: (0..network.n_species()).map(|s| dist.mean(&space, s)).collect(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Single trajectory as JSON.
#[wasm_bindgen]
pub fn simulate(model: &str, options: &str) -> Result<String, JsError> {
    simulate_json(model, options).map_err(|e| JsError::new(&e))
}

/// Ensemble mean and variance as JSON.
#[wasm_bindgen]
pub fn ensemble(model: &str, options: &str) -> Result<String, JsError> {
    ensemble_json(model, options).map_err(|e| JsError::new(&e))
}

/// Master-equation marginals as JSON.
#[wasm_bindgen]
pub fn cme(model: &str, options: &str) -> Result<String, JsError> {
    cme_json(model, options).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn version() -> String {
    env!("CARGO_PKG_VERSION").into()
}
