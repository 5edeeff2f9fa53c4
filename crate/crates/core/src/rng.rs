//! Deterministic, splittable random streams.
//!
//! Every Monte Carlo path owns two independent substreams — one for
//! Brownian increments, one for subordinator increments — derived from
//! `(master_seed, path_index, label)` alone. Streams with the same
//! identity replay the same sequence bit for bit regardless of thread
//! scheduling, which is what makes parallel runs reproducible.
//!
//! Uniform variates are taken from the raw 64-bit ChaCha output
//! (`(x >> 12) + 0.5` scaled to `(0, 1)`, never hitting either
//! endpoint). Gaussians use the Box–Muller transform, both branches,
//! cosine first; the second branch is cached. Positive stable variates
//! use Kanter's representation. These derivations are frozen: tests pin
//! exact outputs per seed.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Role of a substream within one simulated path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubstreamLabel {
    Brownian,
    Subordinator,
}

impl SubstreamLabel {
    fn stream_bit(self) -> u64 {
        match self {
            SubstreamLabel::Brownian => 0,
            SubstreamLabel::Subordinator => 1,
        }
    }
}

/// Identity of a random stream. Equal identities replay equal sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub master_seed: u64,
    pub path_index: u64,
    pub label: SubstreamLabel,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream keyed by [`StreamId`].
///
/// The master seed selects the ChaCha key; `(path_index, label)` select
/// the ChaCha stream number, so distinct paths and substreams read from
/// non-overlapping portions of the same keystream and never share
/// generator state.
#[derive(Clone, Debug)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(master_seed: u64, path_index: u64, label: SubstreamLabel) -> Self {
        assert!(
            path_index < (1 << 63),
            "path_index must fit in 63 bits to address a unique substream"
        );
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((path_index << 1) | label.stream_bit());
        RngStream {
            id: StreamId {
                master_seed,
                path_index,
                label,
            },
            rng,
            spare_normal: None,
        }
    }

    pub fn from_id(id: StreamId) -> Self {
        Self::new(id.master_seed, id.path_index, id.label)
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// Uniform variate strictly inside `(0, 1)`.
    pub fn next_unit_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Standard normal variate via Box–Muller (cosine branch first,
    /// sine branch cached for the next call).
    pub fn next_standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_unit_open();
        let u2 = self.next_unit_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// One Brownian increment over `step`: a `dim`-vector of independent
    /// `N(0, step)` coordinates.
    pub fn next_gaussian_increment(&mut self, dim: usize, step: f64) -> DVector<f64> {
        let scale = step.sqrt();
        DVector::from_fn(dim, |_, _| scale * self.next_standard_normal())
    }
}

/// Generate `count` i.i.d. Brownian increments of dimension `dim` over
/// time step `step`.
pub fn gaussian_increments(
    stream: &mut RngStream,
    count: usize,
    dim: usize,
    step: f64,
) -> Result<Vec<DVector<f64>>> {
    if !(step > 0.0) {
        return Err(Error::parameter("step", format!("must be > 0, got {step}")));
    }
    Ok((0..count)
        .map(|_| stream.next_gaussian_increment(dim, step))
        .collect())
}

/// Parameters of one increment of a totally positively skewed
/// alpha-stable subordinator with Laplace exponent `psi(s) = s^alpha`
/// (no drift).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableIncrementSpec {
    alpha: f64,
    step: f64,
}

impl StableIncrementSpec {
    pub fn new(alpha: f64, step: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::parameter(
                "alpha",
                format!("stability index must lie strictly inside (0, 1), got {alpha}"),
            ));
        }
        if !(step > 0.0) {
            return Err(Error::parameter("step", format!("must be > 0, got {step}")));
        }
        Ok(StableIncrementSpec { alpha, step })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

/// Standard positive stable variate with Laplace transform `exp(-s^alpha)`,
/// Kanter's representation:
///
/// `X = sin(a U) / sin(U)^(1/a) * (sin((1-a) U) / W)^((1-a)/a)`
///
/// with `U ~ Uniform(0, pi)` and `W ~ Exp(1)`.
fn standard_positive_stable(stream: &mut RngStream, alpha: f64) -> f64 {
    let u = std::f64::consts::PI * stream.next_unit_open();
    let w = -stream.next_unit_open().ln();
    let leading = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let inner = ((1.0 - alpha) * u).sin() / w;
    leading * inner.powf((1.0 - alpha) / alpha)
}

/// One increment of the subordinator over `spec.step`, i.e. a sample of
/// `D(h)`. Self-similarity gives `D(h) = h^(1/alpha) * D(1)` in
/// distribution, so a unit sample is rescaled.
pub fn sample_stable_increment(stream: &mut RngStream, spec: StableIncrementSpec) -> f64 {
    spec.step.powf(1.0 / spec.alpha) * standard_positive_stable(stream, spec.alpha)
}
