//! Hybrid simulation as a piecewise deterministic Markov process.
//!
//! Reactions are split per reaction into a fast set, integrated as rate
//! equations, and a slow set that fires stochastically. Slow firing times
//! come from inverting the integrated hazard `G(t) = ∫ Σ_slow aⱼ(x(s)) ds`
//! against a unit exponential: the augmented ODE for `(x, G)` is integrated
//! until `G` crosses the draw, and the crossing is located by bisection on
//! the dense output.

use crate::deterministic::accumulate_drift;
use crate::model::ReactionNetwork;
use crate::ode::{IntegrationError, Integrator, IntegratorConfig, OdeSystem, Segment};
use crate::rng::{RandomSource, RngStream};
use crate::trajectory::{Counters, Grid, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub slow: Vec<usize>,
    pub fast: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    /// Reactions with any reactant below this amount are slow. May be infinite.
    pub amount_threshold: f64,
    /// Reactions with propensity below this rate are slow.
    pub propensity_threshold: f64,
    /// Defaults to `t_end / 100`.
    pub repartition_interval: Option<f64>,
    pub integrator: IntegratorConfig,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            amount_threshold: 100.0,
            propensity_threshold: 10.0,
            repartition_interval: None,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Relative accuracy of located jump times.
pub const JUMP_TIME_RTOL: f64 = 1e-10;

pub fn partition_reactions(network: &ReactionNetwork, amounts: &[f64], config: &HybridConfig) -> Partition {
    let mut slow = Vec::new();
    let mut fast = Vec::new();
    for (j, r) in network.reactions().iter().enumerate() {
        let a = network.propensity_continuous(j, amounts);
        let scarce = r.reactants.iter().any(|&(s, _)| amounts[s] < config.amount_threshold);
        if a == 0.0 || a < config.propensity_threshold || scarce {
            slow.push(j);
        } else {
            fast.push(j);
        }
    }
    Partition { slow, fast }
}

/// Fast-reaction flow augmented with the integrated slow hazard as the last
/// component.
struct HybridFlow<'a> {
    network: &'a ReactionNetwork,
    partition: &'a Partition,
}

impl OdeSystem for HybridFlow<'_> {
    fn dim(&self) -> usize {
        self.network.n_species() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.network.n_species();
        accumulate_drift(self.network, &self.partition.fast, &y[..n], dy);
        dy[n] = self
            .partition
            .slow
            .iter()
            .map(|&j| self.network.propensity_continuous(j, &y[..n]))
            .sum();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpOutcome {
    /// Firing time of the next slow reaction, or `None` if none fires before `t_stop`.
    pub time: Option<f64>,
    /// Pre-jump state at `time`, or the state at `t_stop`.
    pub amounts: Vec<f64>,
    pub integrator_steps: usize,
    pub floored_steps: usize,
    /// Step size the controller proposed last.
    pub next_step: Option<f64>,
}

/// Integrates the deterministic flow from `(time, amounts)` until the next
/// slow firing or `t_stop`. Each accepted segment is handed to `on_segment`
/// with the time up to which it is valid.
#[allow(clippy::too_many_arguments)]
pub fn next_jump<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    time: f64,
    amounts: &[f64],
    partition: &Partition,
    t_stop: f64,
    rng: &mut R,
    integrator: IntegratorConfig,
    mut on_segment: impl FnMut(&Segment, f64),
) -> Result<JumpOutcome, IntegrationError> {
    let n = network.n_species();
    let threshold = -rng.uniform().ln();
    let sys = HybridFlow { network, partition };
    let mut y0 = amounts.to_vec();
    y0.push(0.0);
    let mut integ = Integrator::new(&sys, time, y0, integrator)?.nonnegative(true);
    while integ.time() < t_stop {
        let seg = integ.step(t_stop)?;
        if seg.y1[n] >= threshold {
            let (mut lo, mut hi) = (seg.t0, seg.t1);
            for _ in 0..200 {
                if hi - lo <= JUMP_TIME_RTOL * hi.abs().max(f64::MIN_POSITIVE) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if seg.eval_component(mid, n) >= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            on_segment(&seg, hi);
            let mut state = seg.eval(hi);
            state.truncate(n);
            state.iter_mut().for_each(|x| *x = x.max(0.0));
            return Ok(JumpOutcome {
                time: Some(hi),
                amounts: state,
                integrator_steps: integ.accepted,
                floored_steps: integ.floored,
                next_step: integ.proposed_step(),
            });
        }
        on_segment(&seg, seg.t1);
    }
    let mut state = integ.state().to_vec();
    state.truncate(n);
    Ok(JumpOutcome {
        time: None,
        amounts: state,
        integrator_steps: integ.accepted,
        floored_steps: integ.floored,
        next_step: integ.proposed_step(),
    })
}

/// Samples grid points from dense segments; points at or after a cut are
/// left for later segments.
struct SegmentSampler<'g> {
    grid: &'g [f64],
    next: usize,
    samples: Vec<Vec<f64>>,
    n: usize,
}

impl SegmentSampler<'_> {
    fn take(&mut self, seg: &Segment, cut: f64) {
        while self.next < self.grid.len() && self.grid[self.next] < cut {
            let t = self.grid[self.next].max(seg.t0);
            let mut v = seg.eval(t);
            v.truncate(self.n);
            v.iter_mut().for_each(|x| *x = x.max(0.0));
            self.samples.push(v);
            self.next += 1;
        }
    }

    fn take_constant(&mut self, state: &[f64], cut: f64) {
        while self.next < self.grid.len() && self.grid[self.next] < cut {
            self.samples.push(state.to_vec());
            self.next += 1;
        }
    }
}

pub fn simulate_hybrid(
    network: &ReactionNetwork,
    grid: &Grid,
    seed: u64,
    config: &HybridConfig,
) -> Result<Trajectory, IntegrationError> {
    let mut rng = RngStream::new(seed);
    let mut traj = simulate_hybrid_with(network, grid, &mut rng, config)?;
    traj.seed = Some(seed);
    Ok(traj)
}

pub fn simulate_hybrid_with<R: RandomSource + ?Sized>(
    network: &ReactionNetwork,
    grid: &Grid,
    rng: &mut R,
    config: &HybridConfig,
) -> Result<Trajectory, IntegrationError> {
    let t_end = grid.t_end();
    let interval = config.repartition_interval.unwrap_or(t_end / 100.0);
    if !(interval > 0.0) {
        return Err(IntegrationError::Config("repartition interval must be positive"));
    }
    let n = network.n_species();
    let mut x: Vec<f64> = network.initial_amounts().iter().map(|&v| v as f64).collect();
    let mut t = 0.0;
    let mut epoch = 1u64;
    let mut sampler = SegmentSampler {
        grid: grid.times(),
        next: 0,
        samples: Vec::with_capacity(grid.len()),
        n,
    };
    let mut counters = Counters::default();
    let mut cfg = config.integrator;

    while t < t_end {
        let mut t_stop = (epoch as f64 * interval).min(t_end);
        if t_stop <= t {
            epoch += 1;
            continue;
        }
        if t_end - t_stop <= 1e-12 * t_end {
            t_stop = t_end;
        }
        let partition = partition_reactions(network, &x, config);
        let outcome = next_jump(network, t, &x, &partition, t_stop, rng, cfg, |seg, cut| {
            sampler.take(seg, cut)
        })?;
        counters.integrator_steps += outcome.integrator_steps as u64;
        counters.floored_steps += outcome.floored_steps as u64;
        cfg.h_init = outcome.next_step.or(config.integrator.h_init);
        x = outcome.amounts;
        match outcome.time {
            Some(t_jump) => {
                let u = rng.uniform();
                let hazards: Vec<f64> = partition
                    .slow
                    .iter()
                    .map(|&j| network.propensity_continuous(j, &x))
                    .collect();
                let total: f64 = hazards.iter().sum();
                if total > 0.0 {
                    let target = u * total;
                    let mut acc = 0.0;
                    let mut chosen = None;
                    for (k, &a) in hazards.iter().enumerate() {
                        if a > 0.0 {
                            acc += a;
                            chosen = Some(partition.slow[k]);
                            if acc > target {
                                break;
                            }
                        }
                    }
                    if let Some(j) = chosen {
                        for (i, xi) in x.iter_mut().enumerate() {
                            let nu = network.stoichiometry(i, j);
                            if nu != 0 {
                                *xi = (*xi + nu as f64).max(0.0);
                            }
                        }
                        counters.jumps += 1;
                    }
                }
                t = t_jump;
            }
            None => {
                sampler.take_constant(&x, t_stop);
                t = t_stop;
            }
        }
        while epoch as f64 * interval <= t {
            epoch += 1;
        }
    }
    sampler.take_constant(&x, f64::INFINITY);
    Ok(Trajectory {
        grid: grid.times().to_vec(),
        samples: sampler.samples,
        method: "hybrid",
        seed: None,
        counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::integrate_rre;
    use crate::model::parse_model;
    use crate::stochastic::scripted::Scripted;
    use proptest::prelude::*;

    fn no_sink(_: &Segment, _: f64) {}

    #[test]
    fn partition_rules() {
        let n = parse_model("species A = 1000\nspecies B = 3\nspecies C = 0\nreaction a: A -> C @ 1\nreaction b: B -> C @ 100\nreaction c: C -> 0 @ 1").unwrap();
        let x = [1000.0, 3.0, 0.0];
        let p = partition_reactions(&n, &x, &HybridConfig::default());
        assert_eq!(p.fast, vec![0]);
        assert_eq!(p.slow, vec![1, 2]);

        let all_fast = HybridConfig {
            amount_threshold: 0.0,
            propensity_threshold: 0.0,
            ..Default::default()
        };
        let p = partition_reactions(&n, &x, &all_fast);
        assert_eq!(p.fast, vec![0, 1]);
        assert_eq!(p.slow, vec![2]); // zero propensity
    }

    #[test]
    fn constant_hazard_jump_time() {
        let n = parse_model("species Y = 0\nreaction s: 0 -> Y @ 2").unwrap();
        let part = Partition {
            slow: vec![0],
            fast: vec![],
        };
        let mut rng = Scripted::uniforms(&[(-1.0f64).exp()]);
        let out = next_jump(
            &n,
            0.0,
            &[0.0],
            &part,
            10.0,
            &mut rng,
            IntegratorConfig::default(),
            no_sink,
        )
        .unwrap();
        let t = out.time.unwrap();
        assert!((t - 0.5).abs() <= 1e-9, "{t}");

        let out = next_jump(
            &n,
            3.0,
            &[0.0],
            &part,
            10.0,
            &mut Scripted::uniforms(&[(-1.0f64).exp()]),
            IntegratorConfig::default(),
            no_sink,
        )
        .unwrap();
        assert!((out.time.unwrap() - 3.5).abs() <= 1e-9);
    }

    #[test]
    fn linear_hazard_jump_time() {
        // X grows at unit rate through a fast source; the slow hazard is X itself.
        let n = parse_model("species X = 0\nspecies Y = 0\nreaction src: 0 -> X @ 1\nreaction slow: X -> X + Y @ 1")
            .unwrap();
        let part = Partition {
            slow: vec![1],
            fast: vec![0],
        };
        let mut rng = Scripted::uniforms(&[(-1.0f64).exp()]);
        let out = next_jump(
            &n,
            0.0,
            &[0.0, 0.0],
            &part,
            10.0,
            &mut rng,
            IntegratorConfig::default(),
            no_sink,
        )
        .unwrap();
        let t = out.time.unwrap();
        assert!((t - 2f64.sqrt()).abs() <= 1e-9 * 2f64.sqrt(), "{t}");
        assert!((out.amounts[0] - 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn empty_slow_set_is_pure_rre() {
        let n = parse_model("species A = 100\nreaction d: A -> 0 @ 1").unwrap();
        let part = Partition {
            slow: vec![],
            fast: vec![0],
        };
        let mut rng = Scripted::uniforms(&[0.5]);
        let out = next_jump(
            &n,
            0.0,
            &[100.0],
            &part,
            1.0,
            &mut rng,
            IntegratorConfig::default(),
            no_sink,
        )
        .unwrap();
        assert_eq!(out.time, None);
        assert!(((out.amounts[0] - 100.0 / std::f64::consts::E) / 36.787944).abs() < 1e-6);
    }

    #[test]
    fn all_fast_matches_rate_equations() {
        let n = parse_model("species A = 10\nreaction b: 0 -> A @ 5\nreaction d: A -> 0 @ 1").unwrap();
        let grid = Grid::uniform(5.0, 51).unwrap();
        let cfg = HybridConfig {
            amount_threshold: 0.0,
            propensity_threshold: 0.0,
            ..Default::default()
        };
        let hyb = simulate_hybrid(&n, &grid, 1, &cfg).unwrap();
        let rre = integrate_rre(&n, &[10.0], &grid, cfg.integrator).unwrap();
        assert_eq!(hyb.counters.jumps, 0);
        for (h, r) in hyb.samples.iter().zip(&rre.samples) {
            assert!((h[0] - r[0]).abs() <= 10.0 * (cfg.integrator.rel_tol * r[0].abs() + cfg.integrator.abs_tol));
        }
    }

    #[test]
    fn slow_only_species_stay_integral() {
        let n = parse_model(
            "species A = 500\nspecies B = 500\nspecies C = 0\n\
             reaction f: A -> B @ 5\nreaction b: B -> A @ 5\nreaction s: 0 -> C @ 1",
        )
        .unwrap();
        let grid = Grid::uniform(3.0, 31).unwrap();
        let traj = simulate_hybrid(&n, &grid, 4, &HybridConfig::default()).unwrap();
        assert!(traj.counters.jumps > 0);
        for s in &traj.samples {
            assert_eq!(s[2], s[2].round());
            assert!((s[0] + s[1] - 1000.0).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let n = parse_model("species A = 0\nreaction b: 0 -> A @ 5\nreaction d: A -> 0 @ 1").unwrap();
        let grid = Grid::uniform(10.0, 11).unwrap();
        let cfg = HybridConfig::default();
        assert_eq!(
            simulate_hybrid(&n, &grid, 9, &cfg).unwrap(),
            simulate_hybrid(&n, &grid, 9, &cfg).unwrap()
        );
    }

    proptest! {
        #[test]
        fn partition_is_a_partition(a in 0.0f64..500.0, b in 0.0f64..500.0, ta in 0.0f64..50.0, tx in 0.0f64..200.0) {
            let n = parse_model("species A = 0\nspecies B = 0\nreaction r1: A + B -> 0 @ 0.01\nreaction r2: 0 -> A @ 3\nreaction r3: 2 B -> A @ 0.1\nreaction r4: A -> B @ 1").unwrap();
            let cfg = HybridConfig { amount_threshold: tx, propensity_threshold: ta, ..Default::default() };
            let p = partition_reactions(&n, &[a, b], &cfg);
            let mut all: Vec<usize> = p.slow.iter().chain(&p.fast).copied().collect();
            all.sort();
            prop_assert_eq!(all, vec![0, 1, 2, 3]);
        }

        #[test]
        fn hazard_is_monotone_and_brackets(u in 0.01f64..0.99, x0 in 1.0f64..200.0) {
            let n = parse_model("species A = 0\nspecies B = 0\nreaction d: A -> B @ 0.7\nreaction s: B -> 0 @ 0.2").unwrap();
            let part = Partition { slow: vec![1], fast: vec![0] };
            let threshold = -u.ln();
            let mut rng = Scripted::uniforms(&[u]);
            let mut last_g = 0.0;
            let mut ok = true;
            let out = next_jump(&n, 0.0, &[x0, 0.0], &part, 50.0, &mut rng, IntegratorConfig::default(), |seg, cut| {
                let g0 = seg.y0[2];
                let g1 = seg.y1[2];
                ok &= g0 >= last_g && g1 >= g0;
                if cut < seg.t1 {
                    ok &= g0 < threshold && g1 >= threshold;
                }
                last_g = g1;
            }).unwrap();
            prop_assert!(ok);
            let _ = out;
        }
    }
}
