//! Reproducible random streams.
//!
//! [`RngStream`] is xoshiro256++ seeded from a single `u64` through
//! splitmix64 (the `rand_xoshiro` `seed_from_u64` construction). On top of
//! the raw 64-bit output:
//!
//! * uniforms on the open interval (0, 1): `((x >> 11) + 0.5) · 2⁻⁵³`;
//! * standard normals by the Box–Muller transform, caching the second
//!   variate of each pair;
//! * Poisson variates by sequential-search inversion for means below 10 and
//!   by Hörmann's transformed rejection with squeeze (PTRS) above.
//!
//! None of these depend on platform maths beyond IEEE `ln`, `sqrt`, `cos`,
//! `sin`, so a seed pins the whole draw sequence.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// The draws a simulator needs. Tests substitute scripted sources.
pub trait RandomSource {
    /// Uniform on (0, 1), never 0 or 1.
    fn uniform(&mut self) -> f64;
    fn normal(&mut self) -> f64;
    fn poisson(&mut self, mean: f64) -> u64;
}

impl<R: RandomSource + ?Sized> RandomSource for &mut R {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
    fn normal(&mut self) -> f64 {
        (**self).normal()
    }
    fn poisson(&mut self, mean: f64) -> u64 {
        (**self).poisson(mean)
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

const POISSON_INVERSION_LIMIT: f64 = 10.0;

impl RandomSource for RngStream {
    #[inline]
    fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if !(mean > 0.0) {
            return 0;
        }
        if mean < POISSON_INVERSION_LIMIT {
            poisson_inversion(self, mean)
        } else {
            poisson_ptrs(self, mean)
        }
    }
}

fn poisson_inversion<R: RandomSource + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u = rng.uniform();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    // The cap only bites when rounding leaves cdf short of u in the far tail.
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Hörmann (1993), "The transformed rejection method for generating Poisson
/// random variables", algorithm PTRS.
fn poisson_ptrs<R: RandomSource + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`: exact summation below 20, Stirling series above.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 20 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}
