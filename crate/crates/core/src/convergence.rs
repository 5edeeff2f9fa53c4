//! Strong-error estimation against a fine-step reference and log-log
//! rate fitting.
//!
//! For each coarse step `h = k * h0` the estimator runs coupled
//! fine/coarse paths (shared subordinator realization, shared Brownian
//! increments) and reports the terminal-value discrepancy
//!
//! `error(h) = sqrt( (1/N) sum_i |X_i_fine(T) - X_i_coarse(T)|^2 )`.
//!
//! The reference uses the same scheme as the approximation under test.
//! A `sqrt-mae` metric variant replaces the squared summand by the
//! plain norm (square root of the mean absolute error); it exists for
//! comparison with tables produced by that convention.
//!
//! The path loop is the parallel axis. Per-path contributions are keyed
//! by path index and reduced in canonical order (see [`crate::sum`]),
//! so totals are identical for any thread count and shards over
//! disjoint path ranges combine exactly.

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::csvio::{comment_header, fmt_float, write_atomic};
use crate::duality::solve_tcsde;
use crate::error::{Error, Result};
use crate::integrators::{SchemeConfig, SchemeKind};
use crate::models::ModelSpec;
use crate::sum::PathSums;

/// Maximal tolerated fraction of failed paths before a rung is
/// abandoned as an experiment error.
const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetric {
    /// Root mean square of terminal differences (the default).
    Rms,
    /// Square root of the mean absolute terminal difference.
    SqrtMae,
}

impl ErrorMetric {
    pub fn label(self) -> &'static str {
        match self {
            ErrorMetric::Rms => "rms",
            ErrorMetric::SqrtMae => "sqrt-mae",
        }
    }
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rms" => Ok(ErrorMetric::Rms),
            "sqrt-mae" => Ok(ErrorMetric::SqrtMae),
            other => Err(Error::parameter(
                "error_metric",
                format!("unknown metric `{other}`; expected rms or sqrt-mae"),
            )),
        }
    }
}

/// Full description of one convergence experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model_name: String,
    pub schemes: Vec<SchemeKind>,
    pub horizon: f64,
    pub fine_step: f64,
    pub coarse_steps: Vec<f64>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub stable_alpha: f64,
    pub error_metric: ErrorMetric,
    pub scheme_config: SchemeConfig,
}

impl ExperimentConfig {
    /// Validate the invariants and return the dyadic factor of each
    /// coarse step.
    pub fn validate(&self) -> Result<Vec<usize>> {
        if self.schemes.is_empty() {
            return Err(Error::parameter("schemes", "at least one scheme required"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::parameter("horizon", "must be > 0"));
        }
        if !(self.fine_step > 0.0 && self.fine_step < 1.0) {
            return Err(Error::parameter("fine_step", "must lie in (0, 1)"));
        }
        if self.n_paths < 2 {
            return Err(Error::parameter("n_paths", "must be >= 2"));
        }
        if self.coarse_steps.is_empty() {
            return Err(Error::parameter("coarse_steps", "at least one step required"));
        }
        self.coarse_steps
            .iter()
            .map(|&h| {
                if !(h <= 1.0) {
                    return Err(Error::parameter(
                        "coarse_steps",
                        format!("step {h} exceeds 1"),
                    ));
                }
                let ratio = h / self.fine_step;
                let k = ratio.round();
                if !(k >= 1.0) || (k as usize as f64) != k || !(k as usize).is_power_of_two() {
                    return Err(Error::parameter(
                        "coarse_steps",
                        format!(
                            "step {h} is not an integer power-of-two multiple of the fine step {}",
                            self.fine_step
                        ),
                    ));
                }
                if k * self.fine_step != h {
                    return Err(Error::parameter(
                        "coarse_steps",
                        format!("step {h} does not align exactly with the fine grid"),
                    ));
                }
                Ok(k as usize)
            })
            .collect()
    }

    /// Key/value pairs echoed into every output file.
    pub fn echo_pairs(&self) -> Vec<(String, String)> {
        let schemes = self
            .schemes
            .iter()
            .map(|s| s.label())
            .collect::<Vec<_>>()
            .join(",");
        let steps = self
            .coarse_steps
            .iter()
            .map(|h| fmt_float(*h))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("model".into(), self.model_name.clone()),
            ("schemes".into(), schemes),
            ("horizon".into(), fmt_float(self.horizon)),
            ("fine_step".into(), fmt_float(self.fine_step)),
            ("coarse_steps".into(), steps),
            ("n_paths".into(), self.n_paths.to_string()),
            ("master_seed".into(), self.master_seed.to_string()),
            ("stable_alpha".into(), fmt_float(self.stable_alpha)),
            ("error_metric".into(), self.error_metric.label().into()),
            (
                "newton_tol".into(),
                fmt_float(self.scheme_config.newton_tol),
            ),
            (
                "newton_max_iter".into(),
                self.scheme_config.newton_max_iter.to_string(),
            ),
            ("rho".into(), fmt_float(self.scheme_config.rho)),
        ]
    }
}

/// A failed path with its reproducible identity.
#[derive(Clone, Debug)]
pub struct PathFailure {
    pub path_index: u64,
    pub message: String,
}

/// Partial strong-error state over a range of path indices. Shards over
/// disjoint ranges merge exactly.
#[derive(Clone, Debug, Default)]
pub struct ErrorShard {
    pub sums: PathSums,
    pub failures: Vec<PathFailure>,
    pub max_dual_norm: f64,
    pub total_newton_iterations: u64,
}

impl ErrorShard {
    pub fn merge(&mut self, other: ErrorShard) {
        self.sums.merge(other.sums);
        self.failures.extend(other.failures);
        self.failures.sort_by_key(|f| f.path_index);
        self.max_dual_norm = self.max_dual_norm.max(other.max_dual_norm);
        self.total_newton_iterations += other.total_newton_iterations;
    }
}

/// Diagnostics attached to a strong-error estimate.
#[derive(Clone, Debug)]
pub struct StrongErrorDiagnostics {
    pub n_paths: usize,
    pub n_failed: usize,
    pub failures: Vec<PathFailure>,
    pub max_dual_norm: f64,
    pub total_newton_iterations: u64,
}

/// Run the coupled estimator over one contiguous range of path indices.
#[allow(clippy::too_many_arguments)]
pub fn strong_error_shard(
    model: &ModelSpec,
    scheme: SchemeKind,
    scheme_config: &SchemeConfig,
    metric: ErrorMetric,
    stable_alpha: f64,
    horizon: f64,
    fine_step: f64,
    coarse_step: f64,
    paths: Range<u64>,
    master_seed: u64,
) -> Result<ErrorShard> {
    let ratio = coarse_step / fine_step;
    let factor = ratio.round() as usize;
    if factor == 0 || !factor.is_power_of_two() || factor as f64 * fine_step != coarse_step {
        return Err(Error::parameter(
            "coarse_step",
            format!("{coarse_step} is not a power-of-two multiple of {fine_step}"),
        ));
    }
    let outcomes: Vec<(u64, std::result::Result<(f64, f64, u64), String>)> = paths
        .clone()
        .into_par_iter()
        .map(|path_index| {
            let outcome = solve_tcsde(
                model,
                scheme,
                scheme_config,
                stable_alpha,
                horizon,
                fine_step,
                factor,
                master_seed,
                path_index,
            )
            .map(|pair| {
                let diff = (pair.fine.terminal_value() - pair.coarse.terminal_value()).norm();
                let contribution = match metric {
                    ErrorMetric::Rms => diff * diff,
                    ErrorMetric::SqrtMae => diff,
                };
                let max_norm = pair.fine.dual().max_norm().max(pair.coarse.dual().max_norm());
                let newton = pair.fine.dual().total_newton_iterations()
                    + pair.coarse.dual().total_newton_iterations();
                (contribution, max_norm, newton)
            })
            .map_err(|e| e.to_string());
            (path_index, outcome)
        })
        .collect();

    let mut shard = ErrorShard::default();
    for (path_index, outcome) in outcomes {
        match outcome {
            Ok((contribution, max_norm, newton)) => {
                shard.sums.insert(path_index, contribution);
                shard.max_dual_norm = shard.max_dual_norm.max(max_norm);
                shard.total_newton_iterations += newton;
            }
            Err(message) => shard.failures.push(PathFailure {
                path_index,
                message,
            }),
        }
    }
    Ok(shard)
}

/// Turn an accumulated shard into the error estimate, enforcing the
/// failure budget.
pub fn finalize_error(
    shard: &ErrorShard,
    scheme: SchemeKind,
    coarse_step: f64,
) -> Result<(f64, StrongErrorDiagnostics)> {
    let n_paths = shard.sums.len() + shard.failures.len();
    let n_failed = shard.failures.len();
    if n_failed as f64 > MAX_FAILURE_FRACTION * n_paths as f64 {
        let first = &shard.failures[0];
        return Err(Error::Experiment {
            scheme: scheme.label().to_owned(),
            h: coarse_step,
            n_failed,
            n_paths,
            first_path: first.path_index,
            first_message: first.message.clone(),
        });
    }
    let error = (shard.sums.total() / shard.sums.len() as f64).sqrt();
    Ok((
        error,
        StrongErrorDiagnostics {
            n_paths,
            n_failed,
            failures: shard.failures.clone(),
            max_dual_norm: shard.max_dual_norm,
            total_newton_iterations: shard.total_newton_iterations,
        },
    ))
}

/// Strong error of `scheme` at coarse step `coarse_step` against the
/// same scheme at `fine_step`, over `n_paths` coupled paths.
#[allow(clippy::too_many_arguments)]
pub fn strong_error(
    model: &ModelSpec,
    scheme: SchemeKind,
    scheme_config: &SchemeConfig,
    metric: ErrorMetric,
    stable_alpha: f64,
    horizon: f64,
    fine_step: f64,
    coarse_step: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<(f64, StrongErrorDiagnostics)> {
    let shard = strong_error_shard(
        model,
        scheme,
        scheme_config,
        metric,
        stable_alpha,
        horizon,
        fine_step,
        coarse_step,
        0..n_paths as u64,
        master_seed,
    )?;
    finalize_error(&shard, scheme, coarse_step)
}

/// Least-squares slope of `log2(error)` against `log2(h)`.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    /// Root mean square of the regression residuals in log2 space.
    pub residual: f64,
}

/// Ordinary least squares on `(log2 h, log2 e)` pairs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least two points, got {}",
            points.len()
        )));
    }
    for &(h, e) in points {
        if !(e > 0.0) {
            return Err(Error::DegenerateFit(format!(
                "error at h = {h} is {e}; exact coincidences must be excluded"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|&(h, _)| h.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.log2()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let var_x: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    if var_x == 0.0 {
        return Err(Error::DegenerateFit("all step sizes are identical".into()));
    }
    let cov: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = cov / var_x;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(RateFit {
        slope,
        residual: (ss_res / n).sqrt(),
    })
}

/// Result of one (scheme, step) rung.
#[derive(Clone, Debug)]
pub enum RungOutcome {
    Measured {
        l2_error: f64,
        diagnostics: StrongErrorDiagnostics,
    },
    Failed {
        message: String,
    },
}

#[derive(Clone, Debug)]
pub struct RungReport {
    pub scheme: SchemeKind,
    pub h: f64,
    pub outcome: RungOutcome,
}

#[derive(Clone, Debug)]
pub struct SchemeRate {
    pub scheme: SchemeKind,
    pub fit: Option<RateFit>,
    /// Why the fit is missing, when it is.
    pub note: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub rungs: Vec<RungReport>,
    pub rates: Vec<SchemeRate>,
    pub wall_clock_secs: f64,
}

/// Paths of the three CSV artifacts written by a report.
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub errors: PathBuf,
    pub rates: PathBuf,
    pub loglog: PathBuf,
}

/// Run the full experiment: every scheme over every coarse step, then a
/// rate fit per scheme over its successfully measured, nonzero rungs.
pub fn run_experiment(model: &ModelSpec, config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let start = Instant::now();
    let mut rungs = Vec::new();
    let mut rates = Vec::new();
    for &scheme in &config.schemes {
        let mut fit_points = Vec::new();
        let mut zero_rungs = 0usize;
        for &h in &config.coarse_steps {
            let outcome = match strong_error(
                model,
                scheme,
                &config.scheme_config,
                config.error_metric,
                config.stable_alpha,
                config.horizon,
                config.fine_step,
                h,
                config.n_paths,
                config.master_seed,
            ) {
                Ok((l2_error, diagnostics)) => {
                    if l2_error > 0.0 {
                        fit_points.push((h, l2_error));
                    } else {
                        zero_rungs += 1;
                    }
                    RungOutcome::Measured {
                        l2_error,
                        diagnostics,
                    }
                }
                Err(e @ Error::Experiment { .. }) => RungOutcome::Failed {
                    message: e.to_string(),
                },
                Err(e) => return Err(e),
            };
            rungs.push(RungReport {
                scheme,
                h,
                outcome,
            });
        }
        let rate = match fit_rate(&fit_points) {
            Ok(fit) => SchemeRate {
                scheme,
                fit: Some(fit),
                note: (zero_rungs > 0)
                    .then(|| format!("{zero_rungs} exact-coincidence rung(s) excluded")),
            },
            Err(e) => SchemeRate {
                scheme,
                fit: None,
                note: Some(e.to_string()),
            },
        };
        rates.push(rate);
    }
    Ok(ConvergenceReport {
        config: config.clone(),
        rungs,
        rates,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

impl ConvergenceReport {
    /// Write `errors.csv`, `rates.csv` and `loglog.csv` into `out_dir`
    /// (atomically, via temp file and rename). Every file begins with a
    /// comment header echoing the effective configuration plus
    /// `extra_header` entries. Contents are a pure function of the
    /// configuration: no timestamps, no thread counts.
    pub fn write_csvs(
        &self,
        out_dir: &Path,
        extra_header: &[(String, String)],
    ) -> Result<ReportFiles> {
        std::fs::create_dir_all(out_dir)?;
        let mut header_pairs = extra_header.to_vec();
        header_pairs.extend(self.config.echo_pairs());
        let header = comment_header(&header_pairs);

        let mut errors = header.clone();
        errors.push_str("scheme,h,l2_error,n_paths,n_failed\n");
        for rung in &self.rungs {
            match &rung.outcome {
                RungOutcome::Measured {
                    l2_error,
                    diagnostics,
                } => {
                    errors.push_str(&format!(
                        "{},{},{},{},{}\n",
                        rung.scheme,
                        fmt_float(rung.h),
                        fmt_float(*l2_error),
                        diagnostics.n_paths,
                        diagnostics.n_failed
                    ));
                }
                RungOutcome::Failed { .. } => {
                    errors.push_str(&format!(
                        "{},{},nan,{},{}\n",
                        rung.scheme,
                        fmt_float(rung.h),
                        self.config.n_paths,
                        self.config.n_paths
                    ));
                }
            }
        }

        let mut rates = header.clone();
        rates.push_str("scheme,slope,residual\n");
        for rate in &self.rates {
            match &rate.fit {
                Some(fit) => rates.push_str(&format!(
                    "{},{},{}\n",
                    rate.scheme,
                    fmt_float(fit.slope),
                    fmt_float(fit.residual)
                )),
                None => rates.push_str(&format!("{},nan,nan\n", rate.scheme)),
            }
        }

        let mut loglog = header;
        loglog.push_str("scheme,log2_h,log2_error\n");
        for rung in &self.rungs {
            if let RungOutcome::Measured { l2_error, .. } = &rung.outcome {
                if *l2_error > 0.0 {
                    loglog.push_str(&format!(
                        "{},{},{}\n",
                        rung.scheme,
                        fmt_float(rung.h.log2()),
                        fmt_float(l2_error.log2())
                    ));
                }
            }
        }

        let files = ReportFiles {
            errors: out_dir.join("errors.csv"),
            rates: out_dir.join("rates.csv"),
            loglog: out_dir.join("loglog.csv"),
        };
        write_atomic(&files.errors, &errors)?;
        write_atomic(&files.rates, &rates)?;
        write_atomic(&files.loglog, &loglog)?;
        Ok(files)
    }

    /// Human-readable summary for terminal output.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model {} | T = {} | h0 = {} | {} paths | seed {}\n",
            self.config.model_name,
            self.config.horizon,
            self.config.fine_step,
            self.config.n_paths,
            self.config.master_seed
        ));
        for rung in &self.rungs {
            match &rung.outcome {
                RungOutcome::Measured {
                    l2_error,
                    diagnostics,
                } => out.push_str(&format!(
                    "  {:>4}  h = {:<12.6e}  error = {:.6e}  ({} paths, {} failed)\n",
                    rung.scheme.label(),
                    rung.h,
                    l2_error,
                    diagnostics.n_paths,
                    diagnostics.n_failed
                )),
                RungOutcome::Failed { message } => out.push_str(&format!(
                    "  {:>4}  h = {:<12.6e}  FAILED: {message}\n",
                    rung.scheme.label(),
                    rung.h
                )),
            }
        }
        for rate in &self.rates {
            match &rate.fit {
                Some(fit) => out.push_str(&format!(
                    "  {:>4}  slope = {:.4}  residual = {:.4}{}\n",
                    rate.scheme.label(),
                    fit.slope,
                    fit.residual,
                    rate
                        .note
                        .as_deref()
                        .map(|n| format!("  [{n}]"))
                        .unwrap_or_default()
                )),
                None => out.push_str(&format!(
                    "  {:>4}  slope undefined: {}\n",
                    rate.scheme.label(),
                    rate.note.as_deref().unwrap_or("no fit")
                )),
            }
        }
        out.push_str(&format!("  wall clock: {:.1}s\n", self.wall_clock_secs));
        out
    }
}
