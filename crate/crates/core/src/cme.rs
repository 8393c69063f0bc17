//! Chemical master equation on a truncated state space.
//!
//! States are all amount vectors with `xᵢ ≤ capᵢ`, enumerated
//! lexicographically (last species varies fastest). Transitions that would
//! leave the box feed a leak accumulator, so every answer carries its own
//! truncation error.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::ReactionNetwork;
use crate::ode::{integrate, IntegrationError, IntegratorConfig, OdeSystem};

pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;
/// Largest space the dense stationary solver accepts.
pub const DENSE_STATE_LIMIT: usize = 4096;

/// Integrator settings used for oracle duty.
pub fn oracle_integrator() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-8,
        abs_tol: 1e-14,
        ..IntegratorConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CmeError {
    #[error("expected {expected} caps, got {got}")]
    CapCount { expected: usize, got: usize },
    #[error("cap {cap} for species `{species}` is below its initial amount {initial}")]
    CapBelowInitial { species: String, cap: u64, initial: u64 },
    #[error("state space of {size} states exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: usize },
    #[error("initial distribution is invalid: {0}")]
    BadDistribution(String),
    #[error("stationary system is singular beyond the expected rank deficiency")]
    Singular,
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    caps: Vec<u64>,
    strides: Vec<usize>,
    size: usize,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn caps(&self) -> &[u64] {
        &self.caps
    }

    pub fn state(&self, index: usize) -> Vec<i64> {
        self.strides
            .iter()
            .zip(&self.caps)
            .map(|(&stride, &cap)| ((index / stride) % (cap as usize + 1)) as i64)
            .collect()
    }

    /// `None` when the state lies outside the caps.
    pub fn index(&self, state: &[i64]) -> Option<usize> {
        let mut idx = 0;
        for ((&x, &cap), &stride) in state.iter().zip(&self.caps).zip(&self.strides) {
            if x < 0 || x as u64 > cap {
                return None;
            }
            idx += x as usize * stride;
        }
        Some(idx)
    }

    pub fn states(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.size).map(|i| self.state(i))
    }
}

pub fn enumerate_states(network: &ReactionNetwork, caps: &[u64], limit: usize) -> Result<StateSpace, CmeError> {
    if caps.len() != network.n_species() {
        return Err(CmeError::CapCount {
            expected: network.n_species(),
            got: caps.len(),
        });
    }
    for (s, &cap) in network.species().iter().zip(caps) {
        if cap < s.initial_amount {
            return Err(CmeError::CapBelowInitial {
                species: s.name.clone(),
                cap,
                initial: s.initial_amount,
            });
        }
    }
    let size: u128 = caps.iter().map(|&c| u128::from(c) + 1).product();
    if size > limit as u128 {
        return Err(CmeError::TooLarge { size, limit });
    }
    let mut strides = vec![1usize; caps.len()];
    for i in (0..caps.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * (caps[i + 1] as usize + 1);
    }
    Ok(StateSpace {
        caps: caps.to_vec(),
        strides,
        size: size as usize,
    })
}

/// Sparse CME generator. Off-diagonal rates are stored per source state.
#[derive(Debug, Clone)]
pub struct Generator {
    transitions: Vec<(usize, usize, f64)>,
    exit: Vec<f64>,
    leak: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.exit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit.is_empty()
    }

    pub fn diagonal(&self, state: usize) -> f64 {
        -self.exit[state]
    }

    pub fn leak_rate(&self, state: usize) -> f64 {
        self.leak[state]
    }

    /// Total rate from `from` to `to` (`from ≠ to`).
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.transitions
            .iter()
            .filter(|&&(f, t, _)| f == from && t == to)
            .map(|&(_, _, r)| r)
            .sum()
    }

    pub fn transitions(&self) -> &[(usize, usize, f64)] {
        &self.transitions
    }

    /// Off-diagonal rates plus leak plus diagonal; zero by construction.
    pub fn row_sum(&self, state: usize) -> f64 {
        let off: f64 = self
            .transitions
            .iter()
            .filter(|&&(f, _, _)| f == state)
            .map(|&(_, _, r)| r)
            .sum();
        off + self.leak[state] + self.diagonal(state)
    }
}

pub fn build_generator(network: &ReactionNetwork, space: &StateSpace) -> Generator {
    let mut transitions = Vec::new();
    let mut exit = vec![0.0; space.len()];
    let mut leak = vec![0.0; space.len()];
    let changes: Vec<Vec<i64>> = (0..network.n_reactions()).map(|j| network.change_vector(j)).collect();
    for s in 0..space.len() {
        let x = space.state(s);
        for (j, nu) in changes.iter().enumerate() {
            let a = network.propensity(j, &x);
            if a == 0.0 {
                continue;
            }
            exit[s] += a;
            let y: Vec<i64> = x.iter().zip(nu).map(|(a, b)| a + b).collect();
            match space.index(&y) {
                Some(t) if t == s => exit[s] -= a,
                Some(t) => transitions.push((s, t, a)),
                None => leak[s] += a,
            }
        }
    }
    Generator {
        transitions,
        exit,
        leak,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    pub p: Vec<f64>,
    /// Mass lost through the truncation boundary.
    pub leaked: f64,
    /// Integrator steps in which small negative entries were clipped.
    pub clipped_steps: usize,
}

impl ProbabilityVector {
    pub fn point_mass(space: &StateSpace, state: &[i64]) -> Option<Self> {
        let idx = space.index(state)?;
        let mut p = vec![0.0; space.len()];
        p[idx] = 1.0;
        Some(Self {
            p,
            leaked: 0.0,
            clipped_steps: 0,
        })
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum::<f64>() + self.leaked
    }

    pub fn mean(&self, space: &StateSpace, species: usize) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(i, &p)| p * space.state(i)[species] as f64)
            .sum()
    }

    /// Marginal distribution of one species over `0..=cap`.
    pub fn marginal(&self, space: &StateSpace, species: usize) -> Vec<f64> {
        let mut m = vec![0.0; space.caps()[species] as usize + 1];
        for (i, &p) in self.p.iter().enumerate() {
            m[space.state(i)[species] as usize] += p;
        }
        m
    }
}

struct MasterEquation<'a> {
    generator: &'a Generator,
}

impl OdeSystem for MasterEquation<'_> {
    fn dim(&self) -> usize {
        self.generator.len() + 1
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let g = self.generator;
        let n = g.len();
        let mut leak = 0.0;
        for s in 0..n {
            dy[s] = -g.exit[s] * y[s];
            leak += g.leak[s] * y[s];
        }
        for &(from, to, rate) in &g.transitions {
            dy[to] += rate * y[from];
        }
        dy[n] = leak;
    }
}

/// Evolves `p0` for time `t` under `dp/dt = Qᵀp`.
pub fn solve_cme(
    network: &ReactionNetwork,
    space: &StateSpace,
    p0: &ProbabilityVector,
    t: f64,
) -> Result<ProbabilityVector, CmeError> {
    let generator = build_generator(network, space);
    solve_with_generator(&generator, p0, t, oracle_integrator())
}

pub fn solve_with_generator(
    generator: &Generator,
    p0: &ProbabilityVector,
    t: f64,
    config: IntegratorConfig,
) -> Result<ProbabilityVector, CmeError> {
    let n = generator.len();
    if p0.p.len() != n {
        return Err(CmeError::BadDistribution(format!(
            "length {} for {} states",
            p0.p.len(),
            n
        )));
    }
    if p0.p.iter().any(|&v| !(v >= 0.0)) || !(p0.leaked >= 0.0) {
        return Err(CmeError::BadDistribution("negative or non-finite entry".into()));
    }
    if (p0.total() - 1.0).abs() > 1e-9 {
        return Err(CmeError::BadDistribution(format!("total mass {}", p0.total())));
    }
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let mut y0 = p0.p.clone();
    y0.push(p0.leaked);
    let sys = MasterEquation { generator };
    let out = integrate(&sys, 0.0, y0, t, &[], config, true)?;
    let mut p = out.final_state;
    let leaked = p.pop().unwrap_or(0.0);
    Ok(ProbabilityVector {
        p,
        leaked,
        clipped_steps: out.floored,
    })
}

/// Solves `Qᵀp = 0`, `Σp = 1` densely, with boundary-leaving transitions
/// treated as blocked (the truncated chain reflects at its caps).
pub fn stationary_distribution(space: &StateSpace, generator: &Generator) -> Result<ProbabilityVector, CmeError> {
    let n = space.len();
    if n > DENSE_STATE_LIMIT {
        return Err(CmeError::TooLarge {
            size: n as u128,
            limit: DENSE_STATE_LIMIT,
        });
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        a[(s, s)] = -(generator.exit[s] - generator.leak[s]);
    }
    for &(from, to, rate) in &generator.transitions {
        a[(to, from)] += rate;
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(CmeError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CmeError::Singular);
    }
    let mut p: Vec<f64> = x.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(ProbabilityVector {
        p,
        leaked: 0.0,
        clipped_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn poisson_truncated(mean: f64, cap: usize) -> Vec<f64> {
        let mut p = vec![(-mean).exp()];
        for k in 1..=cap {
            let prev = p[k - 1];
            p.push(prev * mean / k as f64);
        }
        let total: f64 = p.iter().sum();
        p.iter().map(|v| v / total).collect()
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    fn birth_death() -> ReactionNetwork {
        parse_model("species A = 0\nreaction b: 0 -> A @ 5\nreaction d: A -> 0 @ 1").unwrap()
    }

    #[test]
    fn enumeration_order_and_errors() {
        let one = parse_model("species A = 3").unwrap();
        let space = enumerate_states(&one, &[10], DEFAULT_STATE_LIMIT).unwrap();
        assert_eq!(space.len(), 11);
        assert_eq!(
            space.states().map(|s| s[0]).collect::<Vec<_>>(),
            (0..=10).collect::<Vec<_>>()
        );

        let two = parse_model("species A = 0\nspecies B = 0").unwrap();
        let space = enumerate_states(&two, &[2, 1], DEFAULT_STATE_LIMIT).unwrap();
        let states: Vec<Vec<i64>> = space.states().collect();
        assert_eq!(
            states,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![2, 0], vec![2, 1]]
        );
        for (i, s) in states.iter().enumerate() {
            assert_eq!(space.index(s), Some(i));
        }
        assert_eq!(space.index(&[3, 0]), None);

        assert!(matches!(
            enumerate_states(&one, &[2], DEFAULT_STATE_LIMIT),
            Err(CmeError::CapBelowInitial { .. })
        ));
        assert!(matches!(
            enumerate_states(&two, &[999, 999], 1000),
            Err(CmeError::TooLarge { .. })
        ));
        assert!(matches!(
            enumerate_states(&two, &[1], 1000),
            Err(CmeError::CapCount { .. })
        ));
    }

    #[test]
    fn generator_examples() {
        let d = parse_model("species A = 1\nreaction d: A -> 0 @ 1").unwrap();
        let space = enumerate_states(&d, &[1], DEFAULT_STATE_LIMIT).unwrap();
        let q = build_generator(&d, &space);
        assert_eq!(q.rate(1, 0), 1.0);
        assert_eq!((q.diagonal(0), q.diagonal(1)), (0.0, -1.0));

        let bd = birth_death();
        let space = enumerate_states(&bd, &[30], DEFAULT_STATE_LIMIT).unwrap();
        let q = build_generator(&bd, &space);
        for s in 0..space.len() {
            assert_eq!(q.row_sum(s), 0.0);
        }
        assert_eq!(q.leak_rate(30), 5.0);
        assert_eq!(q.rate(30, 29), 30.0);
        assert_eq!(q.leak_rate(29), 0.0);
    }

    #[test]
    fn two_state_decay() {
        let d = parse_model("species A = 1\nreaction d: A -> 0 @ 1").unwrap();
        let space = enumerate_states(&d, &[1], DEFAULT_STATE_LIMIT).unwrap();
        let p0 = ProbabilityVector::point_mass(&space, &[1]).unwrap();
        let p = solve_cme(&d, &space, &p0, 1.0).unwrap();
        assert!((p.p[1] - (-1.0f64).exp()).abs() < 1e-6);
        assert!((p.p[1] - 0.3678794).abs() < 1e-6);
        assert!((p.p[0] - 0.6321206).abs() < 1e-6);
    }

    #[test]
    fn birth_death_relaxes_to_poisson() {
        let bd = birth_death();
        let space = enumerate_states(&bd, &[30], DEFAULT_STATE_LIMIT).unwrap();
        let p0 = ProbabilityVector::point_mass(&space, &[0]).unwrap();
        let p = solve_cme(&bd, &space, &p0, 20.0).unwrap();
        assert!(tv(&p.p, &poisson_truncated(5.0, 30)) < 1e-4);
        assert!((p.total() - 1.0).abs() < 1e-9);

        let q = build_generator(&bd, &space);
        let stat = stationary_distribution(&space, &q).unwrap();
        assert!(tv(&stat.p, &poisson_truncated(5.0, 30)) < 1e-10);

        // Truncation insensitivity: doubling the cap changes nothing visible.
        let big = enumerate_states(&bd, &[60], DEFAULT_STATE_LIMIT).unwrap();
        let pb = solve_cme(&bd, &big, &ProbabilityVector::point_mass(&big, &[0]).unwrap(), 20.0).unwrap();
        assert!(tv(&pb.p[..31], &p.p) < 1e-4);
        assert!((pb.mean(&big, 0) - p.mean(&space, 0)).abs() < 1e-4);
    }

    #[test]
    fn stationary_small_chains() {
        // One molecule flipping between A (x=1) and B (x=0).
        let flip = parse_model("species A = 1\nreaction f: A -> 0 @ 1\nreaction b: 0 -> A @ 1").unwrap();
        let space = enumerate_states(&flip, &[1], DEFAULT_STATE_LIMIT).unwrap();
        let stat = stationary_distribution(&space, &build_generator(&flip, &space)).unwrap();
        assert!((stat.p[0] - 0.5).abs() < 1e-12 && (stat.p[1] - 0.5).abs() < 1e-12);

        let uneven = parse_model("species A = 1\nreaction f: A -> 0 @ 2\nreaction b: 0 -> A @ 1").unwrap();
        let space = enumerate_states(&uneven, &[1], DEFAULT_STATE_LIMIT).unwrap();
        let stat = stationary_distribution(&space, &build_generator(&uneven, &space)).unwrap();
        assert!((stat.p[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((stat.p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_is_a_fixed_point() {
        let bd = birth_death();
        let space = enumerate_states(&bd, &[30], DEFAULT_STATE_LIMIT).unwrap();
        let q = build_generator(&bd, &space);
        let stat = stationary_distribution(&space, &q).unwrap();
        for t in [0.1, 1.0, 7.5] {
            let p = solve_with_generator(&q, &stat, t, oracle_integrator()).unwrap();
            let diff = p.p.iter().zip(&stat.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-6, "t={t}: {diff}");
        }
    }

    #[test]
    fn rejects_bad_initial_distribution() {
        let bd = birth_death();
        let space = enumerate_states(&bd, &[3], DEFAULT_STATE_LIMIT).unwrap();
        let bad = ProbabilityVector {
            p: vec![0.5, 0.4, 0.0, 0.0],
            leaked: 0.0,
            clipped_steps: 0,
        };
        assert!(matches!(
            solve_cme(&bd, &space, &bad, 1.0),
            Err(CmeError::BadDistribution(_))
        ));
    }
}
