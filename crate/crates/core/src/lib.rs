//! Monte Carlo solver for stochastic differential equations evolving
//! under a random time change.
//!
//! The driving clock is the inverse of a one-sided alpha-stable
//! subordinator. By the duality between the time-changed equation and
//! its classical counterpart, a path of the solution is the composition
//! `X(t) = Y(E_h(t))` of a discretized inverse subordinator `E_h` with
//! a numerical trajectory `Y` of the dual equation. The crate provides:
//!
//! * [`rng`] — reproducible, splittable random streams; Gaussian and
//!   positive stable increments.
//! * [`time_change`] — subordinator grid paths, the discretized inverse
//!   time change, and coupled coarse/fine subsampling.
//! * [`models`] — built-in drift/diffusion specifications and
//!   assumption probes.
//! * [`integrators`] — explicit, backward (implicit) and projected
//!   Euler one-step maps for the dual equation.
//! * [`duality`] — assembly of time-changed paths with exact coupling
//!   of randomness across resolutions.
//! * [`convergence`] — strong-error estimation, rate fitting and CSV
//!   reports.

pub mod convergence;
pub mod csvio;
pub mod duality;
pub mod error;
pub mod integrators;
pub mod models;
pub mod rng;
pub mod sum;
pub mod time_change;

pub use error::{Error, Result};
