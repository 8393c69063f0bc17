use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("sample grid is empty")]
    Empty,
    #[error("sample times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("sample time {time} outside [0, {t_end}]")]
    OutOfRange { time: f64, t_end: f64 },
    #[error("end time must be positive and finite, got {0}")]
    BadEndTime(f64),
}

/// Strictly increasing sample times inside `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    times: Vec<f64>,
    t_end: f64,
}

impl Grid {
    pub fn new(times: Vec<f64>, t_end: f64) -> Result<Self, GridError> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(GridError::BadEndTime(t_end));
        }
        if times.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, &t) in times.iter().enumerate() {
            if !(0.0..=t_end).contains(&t) {
                return Err(GridError::OutOfRange { time: t, t_end });
            }
            if i > 0 && t <= times[i - 1] {
                return Err(GridError::NotIncreasing(i));
            }
        }
        Ok(Self { times, t_end })
    }

    /// `samples` evenly spaced points from 0 to `t_end` inclusive; a single
    /// sample means just `t_end`.
    pub fn uniform(t_end: f64, samples: usize) -> Result<Self, GridError> {
        if samples == 0 {
            return Err(GridError::Empty);
        }
        let times = if samples == 1 {
            vec![t_end]
        } else {
            let n = (samples - 1) as f64;
            (0..samples)
                .map(|i| if i == samples - 1 { t_end } else { t_end * i as f64 / n })
                .collect()
        };
        Self::new(times, t_end)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Bookkeeping recorded by the simulators alongside the samples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    /// Exact SSA firings (including tau-adaptive fallback steps).
    pub events: u64,
    pub leaps: u64,
    pub rejected_leaps: u64,
    pub fallback_ssa_steps: u64,
    /// CLE steps in which some component was clamped at zero.
    pub clamped_steps: u64,
    /// Integrator steps whose result was floored at zero.
    pub floored_steps: u64,
    pub jumps: u64,
    pub integrator_steps: u64,
}

/// Sampled path of one simulation. `samples[k]` is the amounts vector at
/// `grid[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub method: &'static str,
    pub seed: Option<u64>,
    pub counters: Counters,
}

impl Trajectory {
    pub fn final_sample(&self) -> &[f64] {
        self.samples.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Values of one species across the grid.
    pub fn species_series(&self, species: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[species]).collect()
    }
}

/// Turns a piecewise-constant path into grid samples: the value at a grid
/// point is the state after the last event at or before it.
#[derive(Debug)]
pub(crate) struct StepRecorder<'g> {
    grid: &'g [f64],
    next: usize,
    samples: Vec<Vec<f64>>,
}

impl<'g> StepRecorder<'g> {
    pub fn new(grid: &'g Grid) -> Self {
        Self {
            grid: grid.times(),
            next: 0,
            samples: Vec::with_capacity(grid.len()),
        }
    }

    /// Records `current` for every pending grid point strictly before `t`.
    #[inline]
    pub fn advance_to(&mut self, t: f64, current: impl Fn() -> Vec<f64>) {
        while self.next < self.grid.len() && self.grid[self.next] < t {
            self.samples.push(current());
            self.next += 1;
        }
    }

    pub fn finish(mut self, last: Vec<f64>) -> Vec<Vec<f64>> {
        while self.next < self.grid.len() {
            self.samples.push(last.clone());
            self.next += 1;
        }
        self.samples
    }
}

pub(crate) fn to_real(amounts: &[i64]) -> Vec<f64> {
    amounts.iter().map(|&x| x as f64).collect()
}
