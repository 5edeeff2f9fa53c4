//! Statistical properties of the strong-error ladder.

use tcsde::convergence::{run_experiment, ErrorMetric, ExperimentConfig, RungOutcome};
use tcsde::integrators::{SchemeConfig, SchemeKind};
use tcsde::models::builtin_quintic;

#[test]
fn quintic_bem_errors_are_monotone_for_most_seeds() {
    // Over a 20-seed batch, the error ladder must be nonincreasing as h
    // shrinks for at least 90% of seeds.
    let model = builtin_quintic();
    let mut monotone = 0;
    let n_seeds = 20;
    for seed in 0..n_seeds {
        let config = ExperimentConfig {
            model_name: "quintic".into(),
            schemes: vec![SchemeKind::Bem],
            horizon: 1.0,
            fine_step: 2f64.powi(-11),
            coarse_steps: vec![
                2f64.powi(-4),
                2f64.powi(-5),
                2f64.powi(-6),
                2f64.powi(-7),
            ],
            n_paths: 100,
            master_seed: 9000 + seed,
            stable_alpha: 0.9,
            error_metric: ErrorMetric::Rms,
            scheme_config: SchemeConfig::default(),
        };
        let report = run_experiment(&model, &config).unwrap();
        let errors: Vec<f64> = report
            .rungs
            .iter()
            .map(|r| match &r.outcome {
                RungOutcome::Measured { l2_error, .. } => *l2_error,
                RungOutcome::Failed { message } => panic!("rung failed: {message}"),
            })
            .collect();
        // coarse_steps are listed in decreasing h, so errors should
        // decrease along the list.
        if errors.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(
        monotone * 10 >= n_seeds * 9,
        "only {monotone}/{n_seeds} seeds gave a monotone ladder"
    );
}
