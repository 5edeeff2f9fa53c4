//! Problem definitions: drift, diffusion, initial condition and the
//! regularity metadata the schemes gate on.
//!
//! Three models are built in:
//!
//! * `quintic` — scalar, drift `x^2 - 2x^5`, diffusion `x^2`; both
//!   coefficients grow super-linearly (gamma = 5).
//! * `stiff2d` — two-dimensional, drift `f(x) - A x` with cubic `f` and
//!   a matrix `A` whose large eigenvalue makes the system stiff
//!   (gamma = 3).
//! * `linear` — scalar geometric dynamics with a closed-form pathwise
//!   solution, used as an independent oracle for the composed solver.
//!
//! The regularity constants cannot be verified globally at runtime, so
//! `probe_assumption` samples the inequalities on a box and reports the
//! worst ratio against the declared constants. Probes are advisory,
//! never gating.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RngStream;

type DriftFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type DiffusionFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ExactTerminalFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Relative slack granted when a sampled inequality ratio is compared
/// against 1 (pure floating-point noise, not a modelling tolerance).
const PROBE_REL_TOL: f64 = 1e-9;

/// Floor for ratio denominators so that a deliberately broken constant
/// (e.g. K = 0) reports a huge but finite violation ratio.
const DENOM_FLOOR: f64 = 1e-30;

/// A drift/diffusion pair with its declared regularity constants.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim_state: usize,
    dim_noise: usize,
    drift: DriftFn,
    diffusion: DiffusionFn,
    drift_jacobian: Option<JacobianFn>,
    initial: DVector<f64>,
    gamma: f64,
    one_sided_lipschitz: f64,
    growth_constant: f64,
    eta: f64,
    moment_order: f64,
    exact_terminal: Option<ExactTerminalFn>,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("gamma", &self.gamma)
            .field("one_sided_lipschitz", &self.one_sided_lipschitz)
            .field("growth_constant", &self.growth_constant)
            .field("eta", &self.eta)
            .field("moment_order", &self.moment_order)
            .finish()
    }
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    /// Growth exponent gamma > 1 of the drift.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// One-sided Lipschitz constant K1 of the monotonicity inequality.
    pub fn one_sided_lipschitz(&self) -> f64 {
        self.one_sided_lipschitz
    }

    /// Generic growth/Lipschitz constant K shared by the polynomial
    /// Lipschitz, moment-growth and time-regularity inequalities.
    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x)
    }

    pub fn diffusion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(t, x)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.drift_jacobian.is_some()
    }

    /// Jacobian of the drift in `x`; analytic when provided, otherwise
    /// forward differences with step `1e-7 * (1 + |x|)`.
    pub fn drift_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(jac) = &self.drift_jacobian {
            return jac(t, x);
        }
        let d = self.dim_state;
        let delta = 1e-7 * (1.0 + x.norm());
        let base = self.drift(t, x);
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut shifted = x.clone();
            shifted[j] += delta;
            let col = (self.drift(t, &shifted) - &base) / delta;
            out.set_column(j, &col);
        }
        out
    }

    /// Closed-form pathwise solution at time `t` given the Brownian
    /// value `W(t)`, when the model has one.
    pub fn exact_terminal(&self, t: f64, brownian: &DVector<f64>) -> Option<DVector<f64>> {
        self.exact_terminal.as_ref().map(|f| f(t, brownian))
    }

    pub fn has_exact_solution(&self) -> bool {
        self.exact_terminal.is_some()
    }

    /// Override the declared eta (probe experimentation only; the
    /// paired constants are not recomputed).
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_one_sided_lipschitz(mut self, k1: f64) -> Self {
        self.one_sided_lipschitz = k1;
        self
    }

    pub fn with_growth_constant(mut self, k: f64) -> Self {
        self.growth_constant = k;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Drop the analytic Jacobian so the finite-difference fallback is
    /// exercised.
    pub fn without_jacobian(mut self) -> Self {
        self.drift_jacobian = None;
        self
    }
}

/// Scalar model with drift `x^2 - 2x^5` and diffusion `x^2`, starting
/// at 1. The monotonicity inequality holds for every eta > 1; the
/// declared constants use eta = 4 so both the implicit and the
/// projected scheme are eligible, with K1 slightly above the numerical
/// supremum 2.069 of the monotonicity ratio at that eta.
pub fn builtin_quintic() -> ModelSpec {
    ModelSpec {
        name: "quintic".to_owned(),
        dim_state: 1,
        dim_noise: 1,
        drift: Arc::new(|_t, x| {
            let v = x[0];
            let v2 = v * v;
            DVector::from_vec(vec![v2 - 2.0 * v2 * v2 * v])
        }),
        diffusion: Arc::new(|_t, x| DMatrix::from_vec(1, 1, vec![x[0] * x[0]])),
        drift_jacobian: Some(Arc::new(|_t, x| {
            let v = x[0];
            DMatrix::from_vec(1, 1, vec![2.0 * v - 10.0 * v.powi(4)])
        })),
        initial: DVector::from_vec(vec![1.0]),
        gamma: 5.0,
        one_sided_lipschitz: 2.1,
        growth_constant: 17.0,
        eta: 4.0,
        moment_order: 26.0,
        exact_terminal: None,
    }
}

/// Two-dimensional stiff model: drift `f(x) - A x` with
/// `f(x) = (x1 - x1^3, x2 - x2^3)` and
/// `A = [[1+a, 1-a], [1+a, 1+a]] / 2`, diffusion `beta * diag(x1, x2)`,
/// starting at `(0.5, 1)`. The symmetric part of `A` has smallest
/// eigenvalue `a/2`, which makes the declared one-sided Lipschitz
/// constant `1 - a/2 + (eta-1) beta^2 / 2`; for the default a = 200
/// this is negative, so the implicit step carries no size restriction.
pub fn builtin_stiff_2d(alpha_stiff: f64, beta: f64) -> Result<ModelSpec> {
    if !(alpha_stiff > 0.0) {
        return Err(Error::parameter(
            "alpha_stiff",
            format!("must be > 0, got {alpha_stiff}"),
        ));
    }
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[
            0.5 * (1.0 + alpha_stiff),
            0.5 * (1.0 - alpha_stiff),
            0.5 * (1.0 + alpha_stiff),
            0.5 * (1.0 + alpha_stiff),
        ],
    );
    let spectral_norm = spectral_norm_2x2(&a);
    let eta = 4.0;
    let drift_a = a.clone();
    let jac_a = a;
    Ok(ModelSpec {
        name: "stiff2d".to_owned(),
        dim_state: 2,
        dim_noise: 2,
        drift: Arc::new(move |_t, x| {
            let f = DVector::from_vec(vec![
                x[0] - x[0].powi(3),
                x[1] - x[1].powi(3),
            ]);
            f - &drift_a * x
        }),
        diffusion: Arc::new(move |_t, x| {
            DMatrix::from_diagonal(&DVector::from_vec(vec![beta * x[0], beta * x[1]]))
        }),
        drift_jacobian: Some(Arc::new(move |_t, x| {
            let jf = DMatrix::from_diagonal(&DVector::from_vec(vec![
                1.0 - 3.0 * x[0] * x[0],
                1.0 - 3.0 * x[1] * x[1],
            ]));
            jf - &jac_a
        })),
        initial: DVector::from_vec(vec![0.5, 1.0]),
        gamma: 3.0,
        one_sided_lipschitz: 1.0 - 0.5 * alpha_stiff + 0.5 * (eta - 1.0) * beta * beta,
        growth_constant: spectral_norm + 3.0,
        eta,
        moment_order: 14.0,
        exact_terminal: None,
    })
}

/// Scalar model `dY = a Y dt + b Y dW` with the exact pathwise solution
/// `Y(t) = Y(0) exp((a - b^2/2) t + b W(t))` attached. Coefficients are
/// globally Lipschitz, so every scheme applies; used as an end-to-end
/// oracle for the composed time-changed solver.
pub fn builtin_linear(a_coef: f64, b_coef: f64) -> ModelSpec {
    let moment_order = 8.0;
    let eta = 4.0;
    let growth = a_coef.abs().max(a_coef + 0.5 * (moment_order - 1.0) * b_coef * b_coef);
    ModelSpec {
        name: "linear".to_owned(),
        dim_state: 1,
        dim_noise: 1,
        drift: Arc::new(move |_t, x| DVector::from_vec(vec![a_coef * x[0]])),
        diffusion: Arc::new(move |_t, x| DMatrix::from_vec(1, 1, vec![b_coef * x[0]])),
        drift_jacobian: Some(Arc::new(move |_t, _x| {
            DMatrix::from_vec(1, 1, vec![a_coef])
        })),
        initial: DVector::from_vec(vec![1.0]),
        gamma: 2.0,
        one_sided_lipschitz: a_coef + 0.5 * (eta - 1.0) * b_coef * b_coef,
        growth_constant: growth.max(0.0) + 0.5,
        eta,
        moment_order,
        exact_terminal: Some(Arc::new(move |t, w| {
            DVector::from_vec(vec![
                ((a_coef - 0.5 * b_coef * b_coef) * t + b_coef * w[0]).exp(),
            ])
        })),
    }
}

/// Optional parameter overrides for [`model_by_name`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ModelOverrides {
    pub alpha_stiff: Option<f64>,
    pub beta: Option<f64>,
    pub linear_a: Option<f64>,
    pub linear_b: Option<f64>,
}

/// Look up a built-in model by its CLI name.
pub fn model_by_name(name: &str, overrides: &ModelOverrides) -> Result<ModelSpec> {
    match name {
        "quintic" => Ok(builtin_quintic()),
        "stiff2d" => builtin_stiff_2d(
            overrides.alpha_stiff.unwrap_or(200.0),
            overrides.beta.unwrap_or(0.5),
        ),
        "linear" => Ok(builtin_linear(
            overrides.linear_a.unwrap_or(0.5),
            overrides.linear_b.unwrap_or(1.0),
        )),
        other => Err(Error::parameter(
            "model",
            format!("unknown model `{other}`; expected quintic, stiff2d or linear"),
        )),
    }
}

fn spectral_norm_2x2(m: &DMatrix<f64>) -> f64 {
    let mtm = m.transpose() * m;
    let tr = mtm[(0, 0)] + mtm[(1, 1)];
    let det = mtm[(0, 0)] * mtm[(1, 1)] - mtm[(0, 1)] * mtm[(1, 0)];
    (0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())).sqrt()
}

/// The four regularity inequalities a model declares constants for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// Polynomially weighted Lipschitz bound on the drift.
    PolynomialLipschitz,
    /// One-sided Lipschitz / monotonicity inequality for the pair
    /// (drift, diffusion) with weight eta.
    Monotonicity,
    /// Coercivity-type moment growth bound with weight p*.
    MomentGrowth,
    /// 1/2-Hölder regularity of both coefficients in time.
    TimeHolder,
}

impl Assumption {
    pub const ALL: [Assumption; 4] = [
        Assumption::PolynomialLipschitz,
        Assumption::Monotonicity,
        Assumption::MomentGrowth,
        Assumption::TimeHolder,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Assumption::PolynomialLipschitz => "polynomial-lipschitz",
            Assumption::Monotonicity => "monotonicity",
            Assumption::MomentGrowth => "moment-growth",
            Assumption::TimeHolder => "time-holder",
        }
    }
}

/// Result of sampling one inequality over random points.
///
/// `worst_ratio` is the largest sampled value of LHS / (declared
/// constant * base); `fitted_constant` is the smallest constant that
/// would make every sampled inequality hold. A failing probe is
/// advisory: sampling cannot verify a global inequality, only refute
/// the declared constants.
#[derive(Clone, Debug)]
pub struct AssumptionProbeReport {
    pub assumption: Assumption,
    pub sampled_pairs: usize,
    pub worst_ratio: f64,
    pub fitted_constant: f64,
    pub pass: bool,
}

/// Sample an assumption inequality over `n_samples` random points drawn
/// uniformly from `[-half_width, half_width]^d` (times in `[0, 1]`).
pub fn probe_assumption(
    model: &ModelSpec,
    assumption: Assumption,
    half_width: f64,
    n_samples: usize,
    stream: &mut RngStream,
) -> Result<AssumptionProbeReport> {
    if n_samples == 0 {
        return Err(Error::parameter("n_samples", "must be >= 1"));
    }
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::parameter(
            "half_width",
            format!("must be finite and > 0, got {half_width}"),
        ));
    }
    let d = model.dim_state();
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut fitted = 0.0f64;
    for _ in 0..n_samples {
        let x = sample_box(stream, d, half_width);
        let y = sample_box(stream, d, half_width);
        let t = stream.next_unit_open();
        let s = stream.next_unit_open();
        let (lhs, base, declared) = match assumption {
            Assumption::PolynomialLipschitz => {
                let lhs = (model.drift(t, &x) - model.drift(t, &y)).norm();
                let base = (1.0
                    + x.norm().powf(model.gamma() - 1.0)
                    + y.norm().powf(model.gamma() - 1.0))
                    * (&x - &y).norm();
                (lhs, base, model.growth_constant())
            }
            Assumption::Monotonicity => {
                let diff = &x - &y;
                let lhs = (model.drift(t, &x) - model.drift(t, &y)).dot(&diff)
                    + 0.5
                        * (model.eta() - 1.0)
                        * (model.diffusion(t, &x) - model.diffusion(t, &y)).norm_squared();
                (lhs, diff.norm_squared(), model.one_sided_lipschitz())
            }
            Assumption::MomentGrowth => {
                let lhs = model.drift(t, &x).dot(&x)
                    + 0.5 * (model.moment_order() - 1.0)
                        * model.diffusion(t, &x).norm_squared();
                (lhs, 1.0 + x.norm_squared(), model.growth_constant())
            }
            Assumption::TimeHolder => {
                let db = (model.drift(t, &x) - model.drift(s, &x)).norm();
                let dg = (model.diffusion(t, &x) - model.diffusion(s, &x)).norm();
                let base = (1.0 + x.norm().powf(model.gamma())) * (t - s).abs().sqrt();
                (db.max(dg), base, model.growth_constant())
            }
        };
        worst_ratio = worst_ratio.max(lhs / (declared * base).max(DENOM_FLOOR));
        fitted = fitted.max(lhs / base.max(DENOM_FLOOR));
    }
    Ok(AssumptionProbeReport {
        assumption,
        sampled_pairs: n_samples,
        worst_ratio,
        fitted_constant: fitted,
        pass: worst_ratio <= 1.0 + PROBE_REL_TOL,
    })
}

fn sample_box(stream: &mut RngStream, dim: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| half_width * (2.0 * stream.next_unit_open() - 1.0))
}
