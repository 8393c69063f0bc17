//! Simulation engine for mass-action chemical reaction networks.
//!
//! A network is parsed from a small text format ([`model::parse_model`]) and
//! can then be simulated exactly ([`stochastic::simulate_ssa`]), by
//! tau-leaping or the chemical Langevin equation
//! ([`stochastic::simulate_approx`]), deterministically
//! ([`deterministic::integrate_rre`]) or with a hybrid jump/ODE scheme
//! ([`hybrid::simulate_hybrid`]). Small systems can be solved exactly through
//! the chemical master equation ([`cme`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cme;
pub mod deterministic;
pub mod ensemble;
pub mod hybrid;
pub mod model;
pub mod ode;
pub mod rng;
pub mod simulation;
pub mod stochastic;
pub mod trajectory;

pub use ensemble::{derive_run_seed, run_ensemble, EnsembleStatistics};
pub use model::{parse_model, ModelError, ReactionNetwork, SystemState};
pub use rng::{RandomSource, RngStream};
pub use simulation::{Method, SimulationError};
pub use trajectory::{Grid, Trajectory};

#[cfg(feature = "cli")]
pub mod cli;
