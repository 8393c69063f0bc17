use thiserror::Error;

use crate::deterministic::integrate_rre;
use crate::hybrid::{simulate_hybrid, HybridConfig};
use crate::model::ReactionNetwork;
use crate::ode::{IntegrationError, IntegratorConfig};
use crate::stochastic::{simulate_approx, simulate_ssa, ApproxMethod};
use crate::trajectory::{Grid, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("invalid method option: {0}")]
    BadOption(String),
}

/// Every simulator behind one switch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Ssa,
    Approx(ApproxMethod),
    Ode(IntegratorConfig),
    Hybrid(HybridConfig),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Ssa => "ssa",
            Method::Approx(ApproxMethod::TauAdaptive { .. }) => "tau-adaptive",
            Method::Approx(ApproxMethod::TauFixed { .. }) => "tau-fixed",
            Method::Approx(ApproxMethod::Cle { .. }) => "cle",
            Method::Ode(_) => "ode",
            Method::Hybrid(_) => "hybrid",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Method::Ode(_))
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimulationError::BadOption(format!("{what} must be positive, got {v}")))
            }
        };
        match *self {
            Method::Ssa => Ok(()),
            Method::Approx(ApproxMethod::TauAdaptive { epsilon }) => {
                if epsilon > 0.0 && epsilon < 1.0 {
                    Ok(())
                } else {
                    Err(SimulationError::BadOption(format!(
                        "epsilon must lie in (0, 1), got {epsilon}"
                    )))
                }
            }
            Method::Approx(ApproxMethod::TauFixed { tau }) | Method::Approx(ApproxMethod::Cle { tau }) => {
                positive(tau, "tau")
            }
            Method::Ode(cfg) => cfg.validate().map_err(Into::into),
            Method::Hybrid(cfg) => {
                if !(cfg.amount_threshold >= 0.0 && cfg.propensity_threshold >= 0.0) {
                    return Err(SimulationError::BadOption(
                        "hybrid thresholds must be non-negative".into(),
                    ));
                }
                if let Some(i) = cfg.repartition_interval {
                    positive(i, "repartition interval")?;
                }
                cfg.integrator.validate().map_err(Into::into)
            }
        }
    }

    /// Runs one simulation from the network's initial amounts.
    pub fn simulate(&self, network: &ReactionNetwork, grid: &Grid, seed: u64) -> Result<Trajectory, SimulationError> {
        match self {
            Method::Ssa => Ok(simulate_ssa(network, grid, seed)),
            Method::Approx(m) => Ok(simulate_approx(network, *m, grid, seed)),
            Method::Ode(cfg) => {
                let x0: Vec<f64> = network.initial_amounts().iter().map(|&v| v as f64).collect();
                Ok(integrate_rre(network, &x0, grid, *cfg)?)
            }
            Method::Hybrid(cfg) => Ok(simulate_hybrid(network, grid, seed, cfg)?),
        }
    }
}
