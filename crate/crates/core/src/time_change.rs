//! Subordinator grid paths and the discretized inverse time change.
//!
//! A subordinator path holds the grid values `D(0) = 0, D(h), D(2h), ...`
//! of a one-sided stable subordinator, extended until the grid first
//! exceeds the horizon. Its inverse is a nondecreasing step function
//! with jumps of size exactly `h`:
//!
//! `E_h(t) = (min{ n : D(nh) > t } - 1) * h`
//!
//! so `E_h(t) = n*h` on the left-closed interval `[D(nh), D((n+1)h))`.
//! Coupled coarse/fine inverses are built by subsampling one fine path,
//! never by re-simulating, so the same subordinator realization drives
//! every resolution of a strong-error estimate.

use crate::error::{Error, Result};
use crate::rng::{sample_stable_increment, RngStream, StableIncrementSpec};

/// Grid values of a one-sided stable subordinator.
#[derive(Clone, Debug)]
pub struct SubordinatorPath {
    alpha: f64,
    step: f64,
    horizon: f64,
    values: Vec<f64>,
}

impl SubordinatorPath {
    /// Build a path from precomputed grid values, validating the
    /// strictly-increasing-from-zero shape and termination past the
    /// horizon.
    pub fn from_parts(alpha: f64, step: f64, horizon: f64, values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::parameter("values", "must start at D(0) = 0"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::parameter("values", "must be strictly increasing"));
        }
        let last = *values.last().unwrap();
        if !(last > horizon) {
            return Err(Error::parameter(
                "values",
                format!("path must exceed the horizon {horizon}, last value is {last}"),
            ));
        }
        Ok(SubordinatorPath {
            alpha,
            step,
            horizon,
            values,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Grid values `D(0), D(h), ..., D((N+1)h)` (possibly extended
    /// further when the path was generated with a margin).
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Simulate a subordinator path at step `h` until its grid first
/// exceeds `horizon`.
pub fn generate_path(
    stream: &mut RngStream,
    alpha: f64,
    h: f64,
    horizon: f64,
) -> Result<SubordinatorPath> {
    generate_path_with_margin(stream, alpha, h, horizon, 1)
}

/// Simulate a subordinator path at step `h`, extended until the grid
/// exceeds `horizon` at an index divisible by `margin_factor`. Every
/// dyadic subsampling of the result by a factor dividing `margin_factor`
/// then terminates correctly, which is what the coupled coarse/fine
/// estimator needs.
pub fn generate_path_with_margin(
    stream: &mut RngStream,
    alpha: f64,
    h: f64,
    horizon: f64,
    margin_factor: usize,
) -> Result<SubordinatorPath> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::parameter("h", format!("must lie in (0, 1), got {h}")));
    }
    if !(horizon > 0.0) {
        return Err(Error::parameter(
            "horizon",
            format!("must be > 0, got {horizon}"),
        ));
    }
    if margin_factor == 0 {
        return Err(Error::parameter("margin_factor", "must be >= 1"));
    }
    let spec = StableIncrementSpec::new(alpha, h)?;
    let mut values = vec![0.0];
    let mut level = 0.0;
    loop {
        level += sample_stable_increment(stream, spec);
        values.push(level);
        let index = values.len() - 1;
        if level > horizon && index % margin_factor == 0 {
            break;
        }
    }
    SubordinatorPath::from_parts(alpha, h, horizon, values)
}

/// Restrict a path to every `k`-th grid point, producing the coupled
/// path of step `k*h`. The coarse values are taken verbatim from the
/// fine path (bit-exact), truncated at its first value past the horizon.
pub fn subsample(path: &SubordinatorPath, k: usize) -> Result<SubordinatorPath> {
    if k == 0 {
        return Err(Error::parameter("k", "subsampling factor must be >= 1"));
    }
    let mut values = Vec::with_capacity(path.values.len() / k + 2);
    for &v in path.values.iter().step_by(k) {
        values.push(v);
        if v > path.horizon {
            return SubordinatorPath::from_parts(
                path.alpha,
                k as f64 * path.step,
                path.horizon,
                values,
            );
        }
    }
    Err(Error::SubsampleExhausted)
}

/// The discretized inverse subordinator on `[0, horizon]`: a
/// right-continuous nondecreasing step function with jump size `h`.
#[derive(Clone, Debug)]
pub struct InverseTimeChange {
    step: f64,
    horizon: f64,
    jump_times: Vec<f64>,
}

impl InverseTimeChange {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The subordinator values `D(0), D(h), ..., D(Nh)` that fall inside
    /// `[0, horizon]`; the inverse jumps by `h` at each of them.
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    /// Terminal index `N`, so that the value at the horizon is `N*h`.
    pub fn num_jumps(&self) -> usize {
        self.jump_times.len() - 1
    }

    /// Terminal value `E_h(horizon) = N*h`.
    pub fn terminal_level(&self) -> f64 {
        self.num_jumps() as f64 * self.step
    }

    /// Evaluate `E_h(t)`: equals `n*h` exactly when
    /// `t` lies in `[D(nh), D((n+1)h))` (ties at a jump point map up).
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.jump_index(t).map(|n| n as f64 * self.step)
    }

    /// Index `n` such that `E_h(t) = n*h`.
    pub fn jump_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.jump_times.partition_point(|&d| d <= t) - 1)
    }
}

/// Invert a terminated path on `[0, horizon]`.
pub fn invert(path: &SubordinatorPath, horizon: f64) -> Result<InverseTimeChange> {
    if !(horizon > 0.0) {
        return Err(Error::parameter(
            "horizon",
            format!("must be > 0, got {horizon}"),
        ));
    }
    let values = path.values();
    if !(*values.last().unwrap() > horizon) {
        return Err(Error::parameter(
            "path",
            "path does not extend past the horizon; cannot invert",
        ));
    }
    // N + 1 = first index with D > horizon.
    let n_plus_one = values.partition_point(|&d| d <= horizon);
    Ok(InverseTimeChange {
        step: path.step(),
        horizon,
        jump_times: values[..=n_plus_one - 1].to_vec(),
    })
}
