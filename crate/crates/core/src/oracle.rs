//! Iterative reference solvers and the stationarity residual.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::auxiliary::{energy, output_map, EnergyValue};
use crate::error::{Error, Result};
use crate::linalg::{power_iteration, sparse_matvec, squared_norm};
use crate::penalty::Penalty;
use crate::problem::Problem;

const POWER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Defaults to `0.9 / L`, `L` the largest eigenvalue of the Gram matrix.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop once `‖a_{k+1} − a_k‖∞` drops below this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            step_size: None,
            max_iters: 100_000,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub a: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_energy: EnergyValue,
    pub kkt: f64,
    /// `E(a_k)` for every iterate, starting from `a_0 = 0`.
    pub energies: Vec<f64>,
}

/// Largest eigenvalue of the Gram matrix.
pub fn lipschitz_constant(problem: &Problem) -> f64 {
    power_iteration(problem.gram(), POWER_ITERATIONS)
}

fn resolve_step(problem: &Problem, options: &SolverOptions) -> Result<f64> {
    let lipschitz = lipschitz_constant(problem);
    let step = options.step_size.unwrap_or(0.9 / lipschitz);
    if !(step > 0.0 && step <= 1.0 / lipschitz * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!(
            "step size {step} outside (0, 1/L] with L = {lipschitz}"
        )));
    }
    Ok(step)
}

/// Shared proximal-gradient loop. `prox(z_i)` maps a gradient step to the new
/// coordinate; `observe` sees every iterate including `a_0 = 0`.
fn proximal_loop(
    problem: &Problem,
    penalty: &Penalty,
    lambda: f64,
    options: &SolverOptions,
    mut prox: impl FnMut(f64) -> Result<f64>,
    mut observe: impl FnMut(usize, ArrayView1<'_, f64>),
) -> Result<SolverResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let step = resolve_step(problem, options)?;
    let n = problem.n();
    let bias = problem.bias();
    let half_s = 0.5 * squared_norm(problem.stimulus());
    let mut a = Array1::zeros(n);
    let mut ga = Array1::zeros(n);
    let mut energies = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    observe(0, a.view());
    loop {
        sparse_matvec(problem.gram(), a.view(), &mut ga);
        let pen: f64 = a.iter().map(|&v| penalty.value_unchecked(v)).sum();
        energies.push(half_s - bias.dot(&a) + 0.5 * a.dot(&ga) + lambda * pen);
        if converged || iterations == options.max_iters {
            break;
        }
        let mut delta = 0.0f64;
        for i in 0..n {
            let z = a[i] - step * (ga[i] - bias[i]);
            let next = prox(z)?;
            delta = delta.max((next - a[i]).abs());
            a[i] = next;
        }
        iterations += 1;
        observe(iterations, a.view());
        converged = delta < options.tol;
    }
    Ok(SolverResult {
        final_energy: energy(a.view(), problem, penalty, lambda)?,
        kkt: kkt_residual(a.view(), problem, penalty, lambda)?,
        a,
        iterations,
        converged,
        energies,
    })
}

/// ISTA for the non-negative `ℓ1` problem:
/// `a ← max(a − s(Ga − b) − sλ, 0)`.
pub fn ista_l1(problem: &Problem, lambda: f64, options: &SolverOptions) -> Result<SolverResult> {
    ista_l1_observed(problem, lambda, options, |_, _| {})
}

pub fn ista_l1_observed(
    problem: &Problem,
    lambda: f64,
    options: &SolverOptions,
    observe: impl FnMut(usize, ArrayView1<'_, f64>),
) -> Result<SolverResult> {
    let shrink = resolve_step(problem, options)? * lambda;
    proximal_loop(
        problem,
        &Penalty::L1,
        lambda,
        options,
        |z| Ok((z - shrink).max(0.0)),
        observe,
    )
}

/// Proximal gradient for a concave penalty. The scalar prox
/// `argmin_{x >= 0} ½(x − z)² + sλ g(x)` compares `x = 0` with the interior
/// stationary point.
pub fn prox_grad_nonconvex(
    problem: &Problem,
    penalty: &Penalty,
    lambda: f64,
    options: &SolverOptions,
) -> Result<SolverResult> {
    prox_grad_observed(problem, penalty, lambda, options, |_, _| {})
}

pub fn prox_grad_observed(
    problem: &Problem,
    penalty: &Penalty,
    lambda: f64,
    options: &SolverOptions,
    observe: impl FnMut(usize, ArrayView1<'_, f64>),
) -> Result<SolverResult> {
    penalty.ensure_admissible(lambda)?;
    let weight = resolve_step(problem, options)? * lambda;
    proximal_loop(
        problem,
        penalty,
        lambda,
        options,
        |z| scalar_prox(z, penalty, weight),
        observe,
    )
}

fn scalar_prox(z: f64, penalty: &Penalty, weight: f64) -> Result<f64> {
    let root = output_map(z, penalty, weight)?;
    if root == 0.0 {
        return Ok(0.0);
    }
    let objective = |x: f64| 0.5 * (x - z) * (x - z) + weight * penalty.value_unchecked(x);
    Ok(if objective(root) <= objective(0.0) { root } else { 0.0 })
}

/// First-order optimality violation on the non-negative orthant.
///
/// With `r = Ga − b`: `|r_i + λg'(a_i)|` on the support and
/// `max(0, −r_i − λg'(0))` off it; the maximum over coordinates.
pub fn kkt_residual(a: ArrayView1<'_, f64>, problem: &Problem, penalty: &Penalty, lambda: f64) -> Result<f64> {
    if a.len() != problem.n() {
        return Err(Error::Dimension(format!(
            "code has length {}, problem has {} atoms",
            a.len(),
            problem.n()
        )));
    }
    if let Some(&v) = a.iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::Domain { what: "code entry", value: v });
    }
    let r = &problem.gram().dot(&a) - &problem.bias();
    let slope0 = penalty.slope_unchecked(0.0);
    Ok(a
        .iter()
        .zip(r.iter())
        .map(|(&ai, &ri)| {
            if ai > 0.0 {
                (ri + lambda * penalty.slope_unchecked(ai)).abs()
            } else {
                (-ri - lambda * slope0).max(0.0)
            }
        })
        .fold(0.0, f64::max))
}
