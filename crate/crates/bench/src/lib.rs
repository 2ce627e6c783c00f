//! Shared fixtures for the benchmarks.

use assr_core::{ExperimentSpec, Problem};

/// Noiseless `m × n` instance, trial 0 of the harness seed stream.
pub fn instance(m: usize, n: usize, sparsity: f64) -> Problem {
    ExperimentSpec {
        m,
        n,
        sparsity,
        snr_db: None,
        ..ExperimentSpec::default()
    }
    .trial_problem(0)
    .expect("valid instance")
}
