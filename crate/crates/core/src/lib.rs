//! Sparse recovery with adaptive integrate-and-fire networks.
//!
//! The crate solves the non-negative regularized least-squares problem
//!
//! ```text
//! min_{a >= 0}  1/2 ||s - Phi a||^2 + lambda * sum_i g(a_i)
//! ```
//!
//! in three independent ways:
//!
//! * [`spiking`]: a clock-driven integrate-and-fire network whose firing rates
//!   settle on a critical point of the objective. With the `L1` penalty it is
//!   the classical spiking LCA; with a concave penalty the leak current adapts
//!   to each neuron's own firing rate.
//! * [`auxiliary`]: the continuous rate dynamics the spiking network tracks.
//! * [`oracle`]: ISTA and a non-convex proximal gradient method, plus the
//!   stationarity residual used to certify all three.
//!
//! [`harness`] generates instances with [`problem`] and compares methods over
//! seeded trials.

pub mod auxiliary;
pub mod error;
pub mod harness;
mod linalg;
pub mod oracle;
pub mod penalty;
pub mod problem;
pub mod spiking;

pub use auxiliary::{energy, output_map, AuxConfig, AuxiliaryState, AuxiliarySystem, EnergyValue, Trajectory};
pub use error::{Error, Result};
pub use harness::{
    convergence_curve, demo_spec, parse_values, run_trials, run_trials_with, sweep, ConvergenceTable, ExperimentSpec,
    MethodAggregate, MethodOutcome, MethodSpec, SolverKind, SweepAxis, SweepResult, TrialsReport,
};
pub use oracle::{ista_l1, kkt_residual, prox_grad_nonconvex, SolverOptions, SolverResult};
pub use penalty::{Penalty, RuleReport, SampleGrid};
pub use problem::{nmse, success, Dictionary, NoiseSpec, Problem};
pub use spiking::{current_bounds, firing_rates, SpikeRaster, SpikingConfig, SpikingNetwork, Trace};
