//! Composition of a dual trajectory with a discretized inverse time
//! change, with exact coupling of randomness across resolutions.
//!
//! One subordinator path at the fine step drives both the fine and the
//! coarse inverse time change (the coarse path is a subsample, never a
//! re-simulation), and one Brownian increment stream at the fine dual
//! resolution drives both dual integrations — the coarse integration
//! consumes block sums of the fine increments. This is what makes the
//! strong-error estimator measure discretization error rather than
//! sampling noise.

use nalgebra::DVector;

use crate::error::{Error, Resolution, Result};
use crate::integrators::{integrate_dual, DualTrajectory, SchemeConfig, SchemeKind, SchemeStep};
use crate::models::ModelSpec;
use crate::rng::{RngStream, SubstreamLabel};
use crate::time_change::{generate_path_with_margin, invert, subsample, InverseTimeChange};

/// One simulated path of the time-changed equation at one resolution.
#[derive(Clone, Debug)]
pub struct TcsdePathResult {
    horizon: f64,
    time_change: InverseTimeChange,
    dual: DualTrajectory,
    brownian_at_terminal: DVector<f64>,
}

impl TcsdePathResult {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.time_change.step()
    }

    pub fn time_change(&self) -> &InverseTimeChange {
        &self.time_change
    }

    /// States of the dual equation on its own grid `0, h, ..., Nh`.
    pub fn dual(&self) -> &DualTrajectory {
        &self.dual
    }

    /// Terminal value `X(T) = Y(E_h(T))`.
    pub fn terminal_value(&self) -> &DVector<f64> {
        self.dual.terminal()
    }

    /// Brownian value `W(E_h(T))` as accumulated by the scheme, for
    /// pathwise comparison against closed-form solutions.
    pub fn brownian_at_terminal(&self) -> &DVector<f64> {
        &self.brownian_at_terminal
    }

    /// Evaluate the composed process at outer time `t`:
    /// `X(t) = Y(E_h(t))`, exact on the jump structure.
    pub fn eval(&self, t: f64) -> Result<&DVector<f64>> {
        let n = self.time_change.jump_index(t)?;
        Ok(&self.dual.states()[n])
    }

    /// The composed path as `(jump time, state)` segments; each state
    /// holds on the left-closed interval up to the next jump time.
    pub fn segments(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.time_change
            .jump_times()
            .iter()
            .copied()
            .zip(self.dual.states())
    }

    /// Realized quadratic variation of the composed path over
    /// `[0, horizon]` (sum of squared jumps).
    pub fn quadratic_variation(&self) -> f64 {
        self.dual.states()[..self.time_change.num_jumps() + 1]
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm_squared())
            .sum()
    }

    /// Realized quadratic variation of the dual trajectory over
    /// `[0, E_h(horizon)]`.
    pub fn dual_quadratic_variation(&self) -> f64 {
        self.dual
            .states()
            .windows(2)
            .map(|w| (&w[1] - &w[0]).norm_squared())
            .sum()
    }

    /// Left-constant samples on a uniform grid of `n_points + 1` times
    /// spanning `[0, horizon]`, as `(t, state)` rows.
    pub fn sample_on_grid(&self, n_points: usize) -> Result<Vec<(f64, DVector<f64>)>> {
        if n_points == 0 {
            return Ok(vec![(0.0, self.eval(0.0)?.clone())]);
        }
        (0..=n_points)
            .map(|i| {
                let t = self.horizon * i as f64 / n_points as f64;
                Ok((t, self.eval(t)?.clone()))
            })
            .collect()
    }
}

/// A coupled pair of solutions sharing all randomness: the coarse
/// resolution subsamples the fine subordinator path and consumes block
/// sums of the fine Brownian increments.
#[derive(Clone, Debug)]
pub struct CoupledPaths {
    pub fine: TcsdePathResult,
    pub coarse: TcsdePathResult,
}

/// Solve the time-changed equation along one sample path at two coupled
/// resolutions: dual step `fine_step` and `coarse_factor * fine_step`.
///
/// `coarse_factor` must be a power of two; with factor 1 the two
/// results are identical bit for bit. The randomness is fully
/// determined by `(master_seed, path_index)`.
#[allow(clippy::too_many_arguments)]
pub fn solve_tcsde(
    model: &ModelSpec,
    scheme_kind: SchemeKind,
    scheme_config: &SchemeConfig,
    stable_alpha: f64,
    horizon: f64,
    fine_step: f64,
    coarse_factor: usize,
    master_seed: u64,
    path_index: u64,
) -> Result<CoupledPaths> {
    if coarse_factor == 0 || !coarse_factor.is_power_of_two() {
        return Err(Error::parameter(
            "coarse_factor",
            format!("must be a power of two >= 1, got {coarse_factor}"),
        ));
    }
    let coarse_step = coarse_factor as f64 * fine_step;
    if !(coarse_step <= 1.0) {
        return Err(Error::parameter(
            "coarse_factor",
            format!("coarse step {coarse_step} exceeds 1"),
        ));
    }
    let fine_scheme = SchemeStep::new(scheme_kind, fine_step, model, *scheme_config)?;
    let coarse_scheme = SchemeStep::new(scheme_kind, coarse_step, model, *scheme_config)?;

    let mut sub_stream = RngStream::new(master_seed, path_index, SubstreamLabel::Subordinator);
    let path = generate_path_with_margin(
        &mut sub_stream,
        stable_alpha,
        fine_step,
        horizon,
        coarse_factor,
    )?;
    let fine_inverse = invert(&path, horizon)?;
    let coarse_inverse = invert(&subsample(&path, coarse_factor)?, horizon)?;

    let n_fine = fine_inverse.num_jumps();
    let n_coarse = coarse_inverse.num_jumps();
    let n_increments = n_fine.max(n_coarse * coarse_factor);

    let mut bm_stream = RngStream::new(master_seed, path_index, SubstreamLabel::Brownian);
    let increments: Vec<DVector<f64>> = (0..n_increments)
        .map(|_| bm_stream.next_gaussian_increment(model.dim_noise(), fine_step))
        .collect();

    let fine_dual = integrate_dual(model, &fine_scheme, n_fine, &increments)
        .map_err(|e| e.at_resolution(Resolution::Fine))?;

    let coarse_increments: Vec<DVector<f64>> = (0..n_coarse)
        .map(|j| {
            increments[j * coarse_factor..(j + 1) * coarse_factor]
                .iter()
                .fold(DVector::zeros(model.dim_noise()), |acc, inc| acc + inc)
        })
        .collect();
    let coarse_dual = integrate_dual(model, &coarse_scheme, n_coarse, &coarse_increments)
        .map_err(|e| e.at_resolution(Resolution::Coarse))?;

    let sum_vectors = |incs: &[DVector<f64>]| {
        incs.iter()
            .fold(DVector::zeros(model.dim_noise()), |acc, inc| acc + inc)
    };
    Ok(CoupledPaths {
        fine: TcsdePathResult {
            horizon,
            time_change: fine_inverse,
            brownian_at_terminal: sum_vectors(&increments[..n_fine]),
            dual: fine_dual,
        },
        coarse: TcsdePathResult {
            horizon,
            time_change: coarse_inverse,
            brownian_at_terminal: sum_vectors(&coarse_increments),
            dual: coarse_dual,
        },
    })
}

/// Closed-form terminal value on the same randomness as `result`, when
/// the model carries an exact solution: the solution evaluated at dual
/// time `E_h(T)` with the Brownian value the scheme actually consumed.
pub fn exact_terminal_on_path(model: &ModelSpec, result: &TcsdePathResult) -> Option<DVector<f64>> {
    model.exact_terminal(
        result.time_change().terminal_level(),
        result.brownian_at_terminal(),
    )
}
