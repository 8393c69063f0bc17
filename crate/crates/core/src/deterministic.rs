//! Reaction-rate equations: the mean-field ODEs `dx/dt = ν·a(x)` on molecule
//! counts, using the continuous extension of the stochastic propensities.

use crate::model::ReactionNetwork;
use crate::ode::{integrate, IntegrationError, IntegratorConfig, OdeSystem};
use crate::trajectory::{Counters, Grid, Trajectory};

/// Rate equations restricted to a subset of reactions (all by default).
pub struct RateEquations<'a> {
    network: &'a ReactionNetwork,
    reactions: Vec<usize>,
}

impl<'a> RateEquations<'a> {
    pub fn new(network: &'a ReactionNetwork) -> Self {
        Self {
            network,
            reactions: (0..network.n_reactions()).collect(),
        }
    }

    pub fn subset(network: &'a ReactionNetwork, reactions: Vec<usize>) -> Self {
        Self { network, reactions }
    }
}

impl OdeSystem for RateEquations<'_> {
    fn dim(&self) -> usize {
        self.network.n_species()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        accumulate_drift(self.network, &self.reactions, y, dy);
    }
}

/// Writes `Σⱼ νⱼ aⱼ(y)` over `reactions` into `dy[..n_species]`.
#[inline]
pub(crate) fn accumulate_drift(network: &ReactionNetwork, reactions: &[usize], y: &[f64], dy: &mut [f64]) {
    let n = network.n_species();
    dy[..n].fill(0.0);
    for &j in reactions {
        let a = network.propensity_continuous(j, y);
        if a == 0.0 {
            continue;
        }
        let r = &network.reactions()[j];
        for &(s, k) in &r.reactants {
            dy[s] -= f64::from(k) * a;
        }
        for &(s, k) in &r.products {
            dy[s] += f64::from(k) * a;
        }
    }
}

pub fn rre_rhs(network: &ReactionNetwork, amounts: &[f64]) -> Vec<f64> {
    let mut dy = vec![0.0; network.n_species()];
    RateEquations::new(network).rhs(0.0, amounts, &mut dy);
    dy
}

/// Integrates the rate equations from `x0` and samples `grid`.
pub fn integrate_rre(
    network: &ReactionNetwork,
    x0: &[f64],
    grid: &Grid,
    config: IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    let sys = RateEquations::new(network);
    let out = integrate(&sys, 0.0, x0.to_vec(), grid.t_end(), grid.times(), config, true)?;
    Ok(Trajectory {
        grid: grid.times().to_vec(),
        samples: out.samples,
        method: "ode",
        seed: None,
        counters: Counters {
            floored_steps: out.floored as u64,
            integrator_steps: out.accepted as u64,
            ..Counters::default()
        },
    })
}
