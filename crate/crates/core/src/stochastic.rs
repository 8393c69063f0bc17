//! Exact and approximate stochastic simulation of the chemical CTMC.
//!
//! * [`ssa_step`] / [`simulate_ssa`]: Gillespie's direct method.
//! * [`tau_leap_step`]: Poisson tau-leaping with reject-and-halve on
//!   negative amounts; [`select_tau`] gives the species-based leap bound.
//! * [`cle_step`]: Euler–Maruyama step of the chemical Langevin equation.

use crate::model::{ReactionNetwork, SystemState};
use crate::rng::{RandomSource, RngStream};
use crate::trajectory::{to_real, Counters, Grid, StepRecorder, Trajectory};

pub const DEFAULT_EPSILON: f64 = 0.03;
/// Tau-adaptive switches to exact steps when the proposed leap is shorter
/// than this many mean inter-event times.
pub const FALLBACK_LEAP_RATIO: f64 = 10.0;
pub const FALLBACK_SSA_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepEvent {
    Fired { reaction: usize, dt: f64 },
    Exhausted,
}

/// One direct-method step. The state is not modified.
pub fn ssa_step<R: RandomSource + ?Sized>(network: &ReactionNetwork, state: &SystemState, rng: &mut R) -> StepEvent {
    let mut props = vec![0.0; network.n_reactions()];
    ssa_step_with(network, &state.amounts, rng, &mut props)
}

#[inline]
fn ssa_step_with<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    amounts: &[i64],
    rng: &mut R,
    props: &mut [f64],
) -> StepEvent {
    let a0 = network.propensities_into(amounts, props);
    if !(a0 > 0.0) {
        return StepEvent::Exhausted;
    }
    let u1 = rng.uniform();
    let u2 = rng.uniform();
    let dt = (1.0 / u1).ln() / a0;
    let target = u2 * a0;
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (j, &a) in props.iter().enumerate() {
        if a > 0.0 {
            cumulative += a;
            last_positive = j;
            if cumulative > target {
                return StepEvent::Fired { reaction: j, dt };
            }
        }
    }
    // Rounding can leave the running sum a hair below u2·a0.
    StepEvent::Fired {
        reaction: last_positive,
        dt,
    }
}

pub fn simulate_ssa(network: &ReactionNetwork, grid: &Grid, seed: u64) -> Trajectory {
    let mut rng = RngStream::new(seed);
    let mut traj = simulate_ssa_with(network, grid, &mut rng);
    traj.seed = Some(seed);
    traj
}

/// Direct-method path sampled onto `grid`, drawing from `rng`.
pub fn simulate_ssa_with<R: RandomSource + ?Sized>(network: &ReactionNetwork, grid: &Grid, rng: &mut R) -> Trajectory {
    let t_end = grid.t_end();
    let mut x = network.initial_amounts();
    let mut t = 0.0;
    let mut props = vec![0.0; network.n_reactions()];
    let mut rec = StepRecorder::new(grid);
    let mut counters = Counters::default();
    loop {
        match ssa_step_with(network, &x, rng, &mut props) {
            StepEvent::Exhausted => break,
            StepEvent::Fired { reaction, dt } => {
                let t_next = t + dt;
                if t_next > t_end {
                    break;
                }
                rec.advance_to(t_next, || to_real(&x));
                network
                    .fire(&mut x, reaction)
                    .expect("selected reaction has positive propensity");
                counters.events += 1;
                t = t_next;
            }
        }
    }
    Trajectory {
        grid: grid.times().to_vec(),
        samples: rec.finish(to_real(&x)),
        method: "ssa",
        seed: None,
        counters,
    }
}

/// Highest reactant order over the reactions in which each species is a
/// reactant; species that are never reactants get 1.
fn highest_orders(network: &ReactionNetwork) -> Vec<f64> {
    let mut g = vec![1.0f64; network.n_species()];
    for r in network.reactions() {
        let order = f64::from(r.order());
        for &(s, _) in &r.reactants {
            g[s] = g[s].max(order);
        }
    }
    g
}

/// Leap-size bound: the minimum over changing species `i` of
/// `max(ε·xᵢ/gᵢ, 1)/|μᵢ|` and `max(ε·xᵢ/gᵢ, 1)²/σᵢ²`, skipping zero
/// denominators. Infinity when nothing can fire.
pub fn select_tau(network: &ReactionNetwork, amounts: &[i64], epsilon: f64) -> f64 {
    let g = highest_orders(network);
    let props: Vec<f64> = (0..network.n_reactions())
        .map(|j| network.propensity(j, amounts))
        .collect();
    select_tau_with(network, amounts, epsilon, &props, &g)
}

fn select_tau_with(network: &ReactionNetwork, amounts: &[i64], epsilon: f64, props: &[f64], g: &[f64]) -> f64 {
    let a0: f64 = props.iter().sum();
    if !(a0 > 0.0) {
        return f64::INFINITY;
    }
    let mut tau = f64::INFINITY;
    for i in 0..network.n_species() {
        let mut mu = 0.0;
        let mut sigma2 = 0.0;
        let mut changes = false;
        for (j, &a) in props.iter().enumerate() {
            let nu = network.stoichiometry(i, j) as f64;
            if nu != 0.0 {
                changes = true;
                mu += nu * a;
                sigma2 += nu * nu * a;
            }
        }
        if !changes {
            continue;
        }
        let bound = (epsilon * amounts[i] as f64 / g[i]).max(1.0);
        if mu != 0.0 {
            tau = tau.min(bound / mu.abs());
        }
        if sigma2 > 0.0 {
            tau = tau.min(bound * bound / sigma2);
        }
    }
    tau
}

#[derive(Debug, Clone, PartialEq)]
pub enum LeapOutcome {
    Accepted(Vec<i64>),
    /// Some amount would go negative; retry with a shorter leap.
    Rejected,
}

/// Fires `kⱼ ~ Poisson(aⱼ(x)·τ)` of every reaction at once.
pub fn tau_leap_step<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    amounts: &[i64],
    tau: f64,
    rng: &mut R,
) -> LeapOutcome {
    let mut next = amounts.to_vec();
    for j in 0..network.n_reactions() {
        let a = network.propensity(j, amounts);
        let k = rng.poisson(a * tau) as i64;
        if k == 0 {
            continue;
        }
        for (i, x) in next.iter_mut().enumerate() {
            *x += network.stoichiometry(i, j) * k;
        }
    }
    if next.iter().any(|&x| x < 0) {
        LeapOutcome::Rejected
    } else {
        LeapOutcome::Accepted(next)
    }
}

/// Result of one Langevin step.
#[derive(Debug, Clone, PartialEq)]
pub struct CleStep {
    pub amounts: Vec<f64>,
    pub clamped: bool,
}

/// `x' = x + Σⱼ νⱼ aⱼ τ + Σⱼ νⱼ √(aⱼ τ) zⱼ`, one normal per reaction in
/// index order; negative components are clamped to zero.
pub fn cle_step<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    amounts: &[f64],
    tau: f64,
    rng: &mut R,
) -> CleStep {
    let mut next = amounts.to_vec();
    for j in 0..network.n_reactions() {
        let a = network.propensity_continuous(j, amounts);
        let z = rng.normal();
        let delta = a * tau + (a * tau).sqrt() * z;
        if delta == 0.0 {
            continue;
        }
        for (i, x) in next.iter_mut().enumerate() {
            let nu = network.stoichiometry(i, j);
            if nu != 0 {
                *x += nu as f64 * delta;
            }
        }
    }
    let mut clamped = false;
    for x in &mut next {
        if *x < 0.0 {
            *x = 0.0;
            clamped = true;
        }
    }
    CleStep { amounts: next, clamped }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproxMethod {
    TauAdaptive { epsilon: f64 },
    TauFixed { tau: f64 },
    Cle { tau: f64 },
}

/// Remaining-time threshold below which a step is treated as reaching `t_end`.
fn close_enough(t: f64, t_end: f64) -> bool {
    t_end - t <= 1e-12 * t_end.max(1.0)
}

pub fn simulate_approx(network: &ReactionNetwork, method: ApproxMethod, grid: &Grid, seed: u64) -> Trajectory {
    let mut rng = RngStream::new(seed);
    let mut traj = match method {
        ApproxMethod::TauAdaptive { epsilon } => simulate_tau(network, grid, &mut rng, None, epsilon),
        ApproxMethod::TauFixed { tau } => simulate_tau(network, grid, &mut rng, Some(tau), DEFAULT_EPSILON),
        ApproxMethod::Cle { tau } => simulate_cle(network, grid, &mut rng, tau),
    };
    traj.seed = Some(seed);
    traj
}

fn simulate_tau<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    grid: &Grid,
    rng: &mut R,
    fixed_tau: Option<f64>,
    epsilon: f64,
) -> Trajectory {
    let t_end = grid.t_end();
    let g = highest_orders(network);
    let mut x = network.initial_amounts();
    let mut t = 0.0;
    let mut props = vec![0.0; network.n_reactions()];
    let mut rec = StepRecorder::new(grid);
    let mut counters = Counters::default();

    'outer: while !close_enough(t, t_end) {
        let a0 = network.propensities_into(&x, &mut props);
        if !(a0 > 0.0) {
            break;
        }
        let mut tau = match fixed_tau {
            Some(tau) => tau,
            None => {
                let tau = select_tau_with(network, &x, epsilon, &props, &g);
                if tau < FALLBACK_LEAP_RATIO / a0 {
                    for _ in 0..FALLBACK_SSA_STEPS {
                        match ssa_step_with(network, &x, rng, &mut props) {
                            StepEvent::Exhausted => break 'outer,
                            StepEvent::Fired { reaction, dt } => {
                                let t_next = t + dt;
                                if t_next > t_end {
                                    break 'outer;
                                }
                                rec.advance_to(t_next, || to_real(&x));
                                network
                                    .fire(&mut x, reaction)
                                    .expect("selected reaction has positive propensity");
                                t = t_next;
                                counters.events += 1;
                                counters.fallback_ssa_steps += 1;
                            }
                        }
                    }
                    continue;
                }
                tau
            }
        };
        tau = tau.min(t_end - t);
        loop {
            match tau_leap_step(network, &x, tau, rng) {
                LeapOutcome::Accepted(next) => {
                    let t_next = if tau == t_end - t { t_end } else { t + tau };
                    rec.advance_to(t_next, || to_real(&x));
                    x = next;
                    t = t_next;
                    counters.leaps += 1;
                    break;
                }
                LeapOutcome::Rejected => {
                    counters.rejected_leaps += 1;
                    tau *= 0.5;
                }
            }
        }
    }
    Trajectory {
        grid: grid.times().to_vec(),
        samples: rec.finish(to_real(&x)),
        method: if fixed_tau.is_some() {
            "tau-fixed"
        } else {
            "tau-adaptive"
        },
        seed: None,
        counters,
    }
}

fn simulate_cle<R: RandomSource + ?Sized>(network: &ReactionNetwork, grid: &Grid, rng: &mut R, tau: f64) -> Trajectory {
    let t_end = grid.t_end();
    let mut x = to_real(&network.initial_amounts());
    let mut t = 0.0;
    let mut rec = StepRecorder::new(grid);
    let mut counters = Counters::default();
    while !close_enough(t, t_end) {
        let h = tau.min(t_end - t);
        let step = cle_step(network, &x, h, rng);
        let t_next = if h == t_end - t { t_end } else { t + h };
        rec.advance_to(t_next, || x.clone());
        x = step.amounts;
        t = t_next;
        counters.leaps += 1;
        if step.clamped {
            counters.clamped_steps += 1;
        }
    }
    Trajectory {
        grid: grid.times().to_vec(),
        samples: rec.finish(x),
        method: "cle",
        seed: None,
        counters,
    }
}

#[cfg(test)]
pub(crate) mod scripted {
    use crate::rng::RandomSource;
    use std::collections::VecDeque;

    /// Replays fixed draws; panics if a draw kind runs out.
    #[derive(Debug, Default)]
    pub struct Scripted {
        pub uniforms: VecDeque<f64>,
        pub normals: VecDeque<f64>,
        pub poissons: VecDeque<u64>,
    }

    impl Scripted {
        pub fn uniforms(u: &[f64]) -> Self {
            Self {
                uniforms: u.iter().copied().collect(),
                ..Self::default()
            }
        }
    }

    impl RandomSource for Scripted {
        fn uniform(&mut self) -> f64 {
            self.uniforms.pop_front().expect("scripted uniform")
        }
        fn normal(&mut self) -> f64 {
            self.normals.pop_front().expect("scripted normal")
        }
        fn poisson(&mut self, mean: f64) -> u64 {
            if mean == 0.0 {
                return 0;
            }
            self.poissons.pop_front().expect("scripted poisson")
        }
    }
}
