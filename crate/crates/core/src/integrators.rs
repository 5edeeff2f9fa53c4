//! One-step methods for the dual (classical) equation.
//!
//! All three schemes realize the same abstract one-step recursion
//! `Y(t_{n+1}) = Y(t_n) + Psi(Y(t_n), t_n, h, xi_n)`:
//!
//! * `em` — explicit Euler–Maruyama, the classical baseline. Diverges
//!   in moments on super-linear coefficients at coarse steps; kept for
//!   the globally Lipschitz oracle model.
//! * `bem` — backward Euler: drift evaluated implicitly at the next
//!   state, solved by Newton iteration. Requires the step gate
//!   `h <= min(1, rho/(2*K1))` with `rho < 1`.
//! * `pem` — projected Euler: the state is clipped to the ball of
//!   radius `h^(-alpha)`, `alpha = 1/(2(gamma-1))`, before an explicit
//!   Euler step.
//!
//! Newton nonconvergence is a hard error. A silent fallback would
//! corrupt convergence-rate measurements downstream.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Em,
    Bem,
    Pem,
}

impl SchemeKind {
    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Em => "em",
            SchemeKind::Bem => "bem",
            SchemeKind::Pem => "pem",
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(SchemeKind::Em),
            "bem" => Ok(SchemeKind::Bem),
            "pem" => Ok(SchemeKind::Pem),
            other => Err(Error::parameter(
                "scheme",
                format!("unknown scheme `{other}`; expected em, bem or pem"),
            )),
        }
    }
}

/// Numeric knobs shared by scheme construction.
#[derive(Clone, Copy, Debug)]
pub struct SchemeConfig {
    /// Absolute Euclidean residual tolerance of the implicit solve.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Safety factor of the implicit step gate `2 h K1 <= rho < 1`.
    pub rho: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            newton_tol: 1e-12,
            newton_max_iter: 50,
            rho: 0.9,
        }
    }
}

/// Outcome of one scheme step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub next_state: DVector<f64>,
    /// Newton iterations spent (0 for explicit schemes).
    pub newton_iterations: usize,
    /// Final implicit residual (0 for explicit schemes).
    pub residual_norm: f64,
}

/// A validated one-step map: scheme kind, step size and derived
/// parameters. Construction checks the scheme's admissibility gates
/// against the model's declared constants, so a `SchemeStep` that
/// exists is safe to iterate.
#[derive(Clone, Debug)]
pub struct SchemeStep {
    kind: SchemeKind,
    h: f64,
    config: SchemeConfig,
    projection_alpha: Option<f64>,
}

impl SchemeStep {
    pub fn new(
        kind: SchemeKind,
        h: f64,
        model: &ModelSpec,
        config: SchemeConfig,
    ) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::parameter("h", format!("must lie in (0, 1], got {h}")));
        }
        if !(config.newton_tol > 0.0) {
            return Err(Error::parameter("newton_tol", "must be > 0"));
        }
        if config.newton_max_iter == 0 {
            return Err(Error::parameter("newton_max_iter", "must be >= 1"));
        }
        if !(config.rho > 0.0 && config.rho < 1.0) {
            return Err(Error::parameter("rho", "must lie in (0, 1)"));
        }
        let mut projection_alpha = None;
        match kind {
            SchemeKind::Em => {}
            SchemeKind::Bem => {
                let max_h = Self::max_admissible_h(model, &config);
                if h > max_h {
                    return Err(Error::StepGate { h, max_h });
                }
            }
            SchemeKind::Pem => {
                if !(model.gamma() > 1.0) {
                    return Err(Error::parameter(
                        "gamma",
                        "projected scheme needs gamma > 1",
                    ));
                }
                projection_alpha = Some(1.0 / (2.0 * (model.gamma() - 1.0)));
            }
        }
        Ok(SchemeStep {
            kind,
            h,
            config,
            projection_alpha,
        })
    }

    /// Largest step the implicit scheme admits for this model:
    /// `min(1, rho/(2*K1))`, unrestricted up to 1 when the one-sided
    /// Lipschitz constant is nonpositive.
    pub fn max_admissible_h(model: &ModelSpec, config: &SchemeConfig) -> f64 {
        let k1 = model.one_sided_lipschitz();
        if k1 > 0.0 {
            (config.rho / (2.0 * k1)).min(1.0)
        } else {
            1.0
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    /// Projection exponent `1/(2(gamma-1))`; only for the projected scheme.
    pub fn projection_alpha(&self) -> Option<f64> {
        self.projection_alpha
    }

    /// Advance one step from `(t_n, y_n)` with Brownian increment `dw`.
    pub fn step(
        &self,
        model: &ModelSpec,
        t_n: f64,
        y_n: &DVector<f64>,
        dw: &DVector<f64>,
    ) -> Result<StepOutcome> {
        match self.kind {
            SchemeKind::Em => em_step(model, t_n, y_n, self.h, dw),
            SchemeKind::Bem => bem_step(model, t_n, y_n, self.h, dw, &self.config),
            SchemeKind::Pem => pem_step(model, t_n, y_n, self.h, dw),
        }
    }
}

/// Explicit Euler step: `y + b(t, y) h + g(t, y) dW`.
pub fn em_step(
    model: &ModelSpec,
    t_n: f64,
    y_n: &DVector<f64>,
    h: f64,
    dw: &DVector<f64>,
) -> Result<StepOutcome> {
    let next = y_n + model.drift(t_n, y_n) * h + model.diffusion(t_n, y_n) * dw;
    ensure_finite(&next, "em")?;
    Ok(StepOutcome {
        next_state: next,
        newton_iterations: 0,
        residual_norm: 0.0,
    })
}

/// Implicit (backward Euler) step: solves
/// `x - h b(t_n + h, x) = y + g(t_n, y) dW` by Newton iteration with
/// the explicit Euler predictor as initial guess. Nonconvergence
/// within the iteration budget is an error carrying the last iterate.
pub fn bem_step(
    model: &ModelSpec,
    t_n: f64,
    y_n: &DVector<f64>,
    h: f64,
    dw: &DVector<f64>,
    config: &SchemeConfig,
) -> Result<StepOutcome> {
    let t_next = t_n + h;
    let d = model.dim_state();
    let rhs = y_n + model.diffusion(t_n, y_n) * dw;
    let mut x = &rhs + model.drift(t_n, y_n) * h;
    let residual;
    let mut iterations = 0usize;
    loop {
        let jac = DMatrix::identity(d, d) - model.drift_jacobian(t_next, &x) * h;
        let f = &x - model.drift(t_next, &x) * h - &rhs;
        let delta = jac.lu().solve(&f).ok_or(Error::SingularJacobian)?;
        x -= delta;
        iterations += 1;
        let r = (&x - model.drift(t_next, &x) * h - &rhs).norm();
        if r <= config.newton_tol {
            residual = r;
            break;
        }
        if iterations >= config.newton_max_iter {
            return Err(Error::NewtonNonconvergence {
                iterations,
                residual: r,
                tol: config.newton_tol,
                last_iterate: x.iter().copied().collect(),
            });
        }
    }
    ensure_finite(&x, "bem")?;
    Ok(StepOutcome {
        next_state: x,
        newton_iterations: iterations,
        residual_norm: residual,
    })
}

/// Clip `x` to the ball of radius `h^(-alpha)`, preserving direction:
/// `x° = min(1, h^(-alpha) |x|^(-1)) x`.
pub fn pem_project(x: &DVector<f64>, h: f64, alpha: f64) -> DVector<f64> {
    let radius = h.powf(-alpha);
    let norm = x.norm();
    if norm <= radius {
        return x.clone();
    }
    let mut out = x * (radius / norm);
    // Rounding can leave the rescaled point a few ulps outside the
    // ball; nudge it in so projecting twice is a no-op.
    for _ in 0..4 {
        let n = out.norm();
        if n <= radius {
            break;
        }
        let f = radius / n;
        if f >= 1.0 {
            break;
        }
        let next = &out * f;
        if next == out {
            break;
        }
        out = next;
    }
    out
}

/// Projected Euler step: project, then one explicit Euler step at the
/// projected point. The projection exponent comes from the model's
/// gamma.
pub fn pem_step(
    model: &ModelSpec,
    t_n: f64,
    y_n: &DVector<f64>,
    h: f64,
    dw: &DVector<f64>,
) -> Result<StepOutcome> {
    let alpha = 1.0 / (2.0 * (model.gamma() - 1.0));
    let projected = pem_project(y_n, h, alpha);
    let next =
        &projected + model.drift(t_n, &projected) * h + model.diffusion(t_n, &projected) * dw;
    ensure_finite(&next, "pem")?;
    Ok(StepOutcome {
        next_state: next,
        newton_iterations: 0,
        residual_norm: 0.0,
    })
}

fn ensure_finite(x: &DVector<f64>, scheme: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { scheme })
    }
}

/// The dual-equation trajectory on the grid `0, h, ..., n h`, extended
/// piecewise-constantly (left-continuous evaluation between nodes).
#[derive(Clone, Debug)]
pub struct DualTrajectory {
    step: f64,
    states: Vec<DVector<f64>>,
    total_newton_iterations: u64,
    max_norm: f64,
}

impl DualTrajectory {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn terminal(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Left-constant evaluation at dual time `t`.
    pub fn eval(&self, t: f64) -> &DVector<f64> {
        let n = ((t / self.step).floor() as usize).min(self.states.len() - 1);
        &self.states[n]
    }

    pub fn total_newton_iterations(&self) -> u64 {
        self.total_newton_iterations
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }
}

/// Integrate the dual equation for `n_steps` steps of the scheme,
/// consuming externally supplied Brownian increments (the coupling
/// across resolutions requires that increments never be drawn here).
pub fn integrate_dual(
    model: &ModelSpec,
    scheme: &SchemeStep,
    n_steps: usize,
    increments: &[DVector<f64>],
) -> Result<DualTrajectory> {
    if increments.len() < n_steps {
        return Err(Error::parameter(
            "increments",
            format!("{} increments supplied, {n_steps} steps requested", increments.len()),
        ));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(model.initial().clone());
    let mut total_newton = 0u64;
    let mut max_norm = model.initial().norm();
    for n in 0..n_steps {
        let t_n = n as f64 * scheme.h();
        let out = scheme
            .step(model, t_n, &states[n], &increments[n])
            .map_err(|e| e.at_step(n))?;
        total_newton += out.newton_iterations as u64;
        max_norm = max_norm.max(out.next_state.norm());
        states.push(out.next_state);
    }
    Ok(DualTrajectory {
        step: scheme.h(),
        states,
        total_newton_iterations: total_newton,
        max_norm,
    })
}
