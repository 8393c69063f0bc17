//! Explicit Dormand–Prince 5(4) integrator with PI step-size control and
//! the pair's 4th-order continuous extension for dense output.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("maximum of {0} integrator steps exceeded")]
    MaxSteps(usize),
    #[error("non-finite derivative or state at t = {0}")]
    NonFinite(f64),
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("invalid integrator configuration: {0}")]
    Config(&'static str),
}

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.1)(t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` picks the first step automatically.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(IntegrationError::Config("tolerances must be positive"));
        }
        if !(self.h_max > 0.0) || self.h_init.is_some_and(|h| !(h > 0.0)) {
            return Err(IntegrationError::Config("step sizes must be positive"));
        }
        if self.max_steps == 0 {
            return Err(IntegrationError::Config("max_steps must be positive"));
        }
        Ok(())
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order weights (equal to the last row of `A`, hence FSAL).
#[cfg(test)]
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// 5th minus 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One trial step of the embedded pair.
#[derive(Debug, Clone)]
pub struct StepProposal {
    pub y: Vec<f64>,
    /// Derivative at the proposed point (first stage of the next step).
    pub f: Vec<f64>,
    /// Weighted RMS of the 5th/4th order difference; accept when ≤ 1.
    pub error: f64,
    stages: [Vec<f64>; 7],
}

/// Takes one Dormand–Prince step of size `h` from `(t, y)` where `f0 = f(t, y)`.
pub fn rk_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<StepProposal, IntegrationError> {
    let n = y.len();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    k[0].copy_from_slice(f0);
    let mut tmp = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (r, a) in A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    acc += a * k[r][i];
                }
            }
            tmp[i] = y[i] + h * acc;
        }
        sys.rhs(t + C[s] * h, &tmp, &mut k[s]);
        if k[s].iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite(t + C[s] * h));
        }
    }
    // tmp holds y + h·Σ A[6]·k = the 5th-order solution.
    let y_new = tmp;
    let mut err_sum = 0.0;
    for i in 0..n {
        let mut e = 0.0;
        for s in 0..7 {
            e += E[s] * k[s][i];
        }
        let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        let r = h * e / scale;
        err_sum += r * r;
    }
    let error = if n == 0 { 0.0 } else { (err_sum / n as f64).sqrt() };
    Ok(StepProposal {
        f: k[6].clone(),
        y: y_new,
        error,
        stages: k,
    })
}

/// Accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    cont: [Vec<f64>; 4],
}

impl Segment {
    fn new(t0: f64, t1: f64, h: f64, y0: Vec<f64>, p: &StepProposal) -> Self {
        let n = y0.len();
        let mut cont: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let ydiff = p.y[i] - y0[i];
            let bspl = h * p.stages[0][i] - ydiff;
            cont[0][i] = ydiff;
            cont[1][i] = bspl;
            cont[2][i] = ydiff - h * p.stages[6][i] - bspl;
            let mut d = 0.0;
            for s in 0..7 {
                d += D[s] * p.stages[s][i];
            }
            cont[3][i] = h * d;
        }
        Self {
            t0,
            t1,
            y0,
            y1: p.y.clone(),
            cont,
        }
    }

    /// Interpolated state at `t ∈ [t0, t1]`; endpoints return the stored
    /// step states exactly.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t == self.t1 {
            out.copy_from_slice(&self.y1);
            return;
        }
        if t == self.t0 {
            out.copy_from_slice(&self.y0);
            return;
        }
        let s = (t - self.t0) / (self.t1 - self.t0);
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.y0[i]
                + s * (self.cont[0][i] + s1 * (self.cont[1][i] + s * (self.cont[2][i] + s1 * self.cont[3][i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.y0.len()];
        self.eval_into(t, &mut out);
        out
    }

    /// Interpolates a single component.
    pub fn eval_component(&self, t: f64, i: usize) -> f64 {
        if t == self.t1 {
            return self.y1[i];
        }
        if t == self.t0 {
            return self.y0[i];
        }
        let s = (t - self.t0) / (self.t1 - self.t0);
        let s1 = 1.0 - s;
        self.y0[i] + s * (self.cont[0][i] + s1 * (self.cont[1][i] + s * (self.cont[2][i] + s1 * self.cont[3][i])))
    }
}

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Stateful adaptive stepper.
pub struct Integrator<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: Option<f64>,
    err_old: f64,
    nonnegative: bool,
    pub accepted: usize,
    pub rejected: usize,
    pub floored: usize,
}

impl<'a, S: OdeSystem + ?Sized> Integrator<'a, S> {
    pub fn new(sys: &'a S, t0: f64, y0: Vec<f64>, cfg: IntegratorConfig) -> Result<Self, IntegrationError> {
        cfg.validate()?;
        let mut f = vec![0.0; y0.len()];
        sys.rhs(t0, &y0, &mut f);
        if f.iter().chain(&y0).any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite(t0));
        }
        Ok(Self {
            sys,
            cfg,
            t: t0,
            y: y0,
            f,
            h: cfg.h_init,
            err_old: 1e-4,
            nonnegative: false,
            accepted: 0,
            rejected: 0,
            floored: 0,
        })
    }

    /// Floor every accepted state at zero, counting the steps that needed it.
    pub fn nonnegative(mut self, on: bool) -> Self {
        self.nonnegative = on;
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Step size the controller will try next, once one has been taken.
    pub fn proposed_step(&self) -> Option<f64> {
        self.h
    }

    fn initial_step(&self, t_stop: f64) -> Result<f64, IntegrationError> {
        // Hairer–Wanner starting-step heuristic.
        let n = self.y.len().max(1) as f64;
        let scale = |i: usize, y: &[f64]| self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs();
        let norm = |v: &[f64], y: &[f64]| {
            (v.iter()
                .enumerate()
                .map(|(i, x)| (x / scale(i, y)).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        };
        let d0 = norm(&self.y, &self.y);
        let d1 = norm(&self.f, &self.y);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.cfg.h_max).min(t_stop - self.t);
        let y1: Vec<f64> = self.y.iter().zip(&self.f).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; self.y.len()];
        self.sys.rhs(self.t + h0, &y1, &mut f1);
        if f1.iter().any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite(self.t + h0));
        }
        let diff: Vec<f64> = f1.iter().zip(&self.f).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff, &self.y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(self.cfg.h_max))
    }

    /// Advances by one accepted step, never past `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<Segment, IntegrationError> {
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(t_stop)?,
        };
        loop {
            if self.accepted + self.rejected >= self.cfg.max_steps {
                return Err(IntegrationError::MaxSteps(self.cfg.max_steps));
            }
            h = h.min(self.cfg.h_max);
            let remaining = t_stop - self.t;
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h <= f64::EPSILON * self.t.abs().max(1.0) {
                return Err(IntegrationError::StepUnderflow(self.t));
            }
            let p = rk_step(
                self.sys,
                self.t,
                &self.y,
                &self.f,
                h,
                self.cfg.rel_tol,
                self.cfg.abs_tol,
            )?;
            let err = p.error;
            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let fac = (fac11 / self.err_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                self.err_old = err.max(1e-4);
                let t1 = if last { t_stop } else { self.t + h };
                let y0 = std::mem::take(&mut self.y);
                let mut seg = Segment::new(self.t, t1, h, y0, &p);
                self.y = p.y;
                self.f = p.f;
                if self.nonnegative && self.y.iter().any(|&v| v < 0.0) {
                    for v in &mut self.y {
                        *v = v.max(0.0);
                    }
                    seg.y1.copy_from_slice(&self.y);
                    self.sys.rhs(t1, &self.y, &mut self.f);
                    self.floored += 1;
                }
                self.t = t1;
                self.accepted += 1;
                // Keep the controller's proposal even after a shortened last step.
                self.h = Some(h / fac);
                return Ok(seg);
            }
            self.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
        }
    }
}

/// Integrates from `(t0, y0)` up to `t_end`, sampling `times` (ascending,
/// within `[t0, t_end]`) from the dense output.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    times: &[f64],
    cfg: IntegratorConfig,
    nonnegative: bool,
) -> Result<Integration, IntegrationError> {
    let mut integ = Integrator::new(sys, t0, y0, cfg)?.nonnegative(nonnegative);
    let mut samples = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= t0 {
        samples.push(integ.state().to_vec());
        next += 1;
    }
    while integ.time() < t_end {
        let seg = integ.step(t_end)?;
        while next < times.len() && times[next] <= seg.t1 {
            let mut v = seg.eval(times[next]);
            if nonnegative {
                v.iter_mut().for_each(|x| *x = x.max(0.0));
            }
            samples.push(v);
            next += 1;
        }
    }
    while next < times.len() {
        samples.push(integ.state().to_vec());
        next += 1;
    }
    Ok(Integration {
        samples,
        final_state: integ.state().to_vec(),
        accepted: integ.accepted,
        rejected: integ.rejected,
        floored: integ.floored,
    })
}

#[derive(Debug, Clone)]
pub struct Integration {
    pub samples: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub floored: usize,
}
