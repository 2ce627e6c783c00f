//! Continuous rate dynamics tracked by the spiking network:
//!
//! ```text
//! τ du_i/dt = b_i - u_i - Σ_{j≠i} Ω_ij a_j,     a_i = max(u_i - λ g'(a_i), 0)
//! ```
//!
//! The output map is implicit for a concave penalty. It has a unique solution
//! whenever `1 + λ g'' > 0`, which is exactly rule 3.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sparse_matvec, squared_norm};
use crate::penalty::Penalty;
use crate::problem::Problem;

const ROOT_TOLERANCE: f64 = 1e-12;
const ROOT_MAX_ITERATIONS: usize = 200;

/// Solves `a = max(u - λ g'(a), 0)` for `a`.
///
/// Zero when `u <= λ g'(0)`; otherwise the root of `a + λ g'(a) - u` on
/// `(0, u]`, by Newton steps kept inside a bisection bracket.
pub fn output_map(u: f64, penalty: &Penalty, lambda: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain {
            what: "average current",
            value: u,
        });
    }
    if let Penalty::L1 = penalty {
        return Ok((u - lambda).max(0.0));
    }
    let threshold = lambda * penalty.slope_unchecked(0.0);
    if u <= threshold {
        return Ok(0.0);
    }
    let residual = |a: f64| a + lambda * penalty.slope_unchecked(a) - u;
    let (mut lo, mut hi) = (0.0, u);
    let mut a = (u - threshold).clamp(lo, hi);
    for _ in 0..ROOT_MAX_ITERATIONS {
        let r = residual(a);
        if r == 0.0 {
            return Ok(a);
        }
        if r < 0.0 {
            lo = a;
        } else {
            hi = a;
        }
        let slope = 1.0 + lambda * penalty.curvature_unchecked(a);
        let newton = a - r / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - a).abs() < ROOT_TOLERANCE * 1e-2 || hi - lo < ROOT_TOLERANCE {
            return Ok(next);
        }
        a = next;
    }
    Err(Error::RootSolve {
        u,
        iterations: ROOT_MAX_ITERATIONS,
    })
}

/// `E(a) = ½‖s − Φa‖² + λ Σ g(a_i)`, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyValue {
    pub total: f64,
    pub data_term: f64,
    pub penalty_term: f64,
}

impl EnergyValue {
    fn new(data_term: f64, penalty_term: f64) -> Self {
        EnergyValue {
            total: data_term + penalty_term,
            data_term,
            penalty_term,
        }
    }
}

pub fn energy(a: ArrayView1<'_, f64>, problem: &Problem, penalty: &Penalty, lambda: f64) -> Result<EnergyValue> {
    if a.len() != problem.n() {
        return Err(Error::Dimension(format!(
            "code has length {}, problem has {} atoms",
            a.len(),
            problem.n()
        )));
    }
    let mut penalty_sum = 0.0;
    for &v in a {
        penalty_sum += penalty.g(v)?;
    }
    let residual = &problem.stimulus() - &problem.dictionary().atoms().dot(&a);
    Ok(EnergyValue::new(
        0.5 * squared_norm(residual.view()),
        lambda * penalty_sum,
    ))
}

/// Energy from `Ωa` instead of `Φa`, O(N) once `Ωa` is known.
fn energy_from_lateral(
    a: ArrayView1<'_, f64>,
    lateral_a: ArrayView1<'_, f64>,
    half_stimulus_sq: f64,
    problem: &Problem,
    penalty: &Penalty,
    lambda: f64,
) -> EnergyValue {
    // ½‖s‖² − bᵀa + ½aᵀ(Ω + I)a
    let quad = a.dot(&lateral_a) + squared_norm(a);
    let data = half_stimulus_sq - problem.bias().dot(&a) + 0.5 * quad;
    let pen: f64 = a.iter().map(|&v| penalty.value_unchecked(v)).sum();
    EnergyValue::new(data.max(0.0), lambda * pen)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxConfig {
    pub tau: f64,
    pub lambda: f64,
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: f64,
    /// Stop once `‖τ du/dt‖∞` falls below this.
    pub stop_tolerance: f64,
    /// Largest tolerated per-step energy increase.
    pub energy_tolerance: f64,
}

impl Default for AuxConfig {
    fn default() -> Self {
        AuxConfig {
            tau: 1.0,
            lambda: 0.1,
            dt: 0.01,
            horizon: 1000.0,
            sample_every: 1.0,
            stop_tolerance: 1e-10,
            energy_tolerance: 1e-9,
        }
    }
}

impl AuxConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("dt", self.dt),
            ("sample_every", self.sample_every),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("auxiliary {name} must be positive, got {v}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "auxiliary horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.dt > self.tau / 100.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "auxiliary dt = {} exceeds tau/100 = {}",
                self.dt,
                self.tau / 100.0
            )));
        }
        Ok(())
    }
}

/// A point on the auxiliary trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryState {
    pub time: f64,
    pub u: Array1<f64>,
    pub a: Array1<f64>,
    pub energy: EnergyValue,
}

/// Forward-Euler integrator of the auxiliary dynamics, starting from `u(0) = b`.
pub struct AuxiliarySystem<'p> {
    problem: &'p Problem,
    penalty: Penalty,
    config: AuxConfig,
    u: Array1<f64>,
    a: Array1<f64>,
    lateral_a: Array1<f64>,
    steps: u64,
    half_stimulus_sq: f64,
    energy: EnergyValue,
    max_energy_increase: f64,
}

impl<'p> AuxiliarySystem<'p> {
    pub fn new(problem: &'p Problem, penalty: Penalty, config: AuxConfig) -> Result<Self> {
        config.validate()?;
        penalty.ensure_admissible(config.lambda)?;
        let u = problem.bias().to_owned();
        let a = u
            .iter()
            .map(|&ui| output_map(ui, &penalty, config.lambda))
            .collect::<Result<Array1<f64>>>()?;
        let mut lateral_a = Array1::zeros(problem.n());
        sparse_matvec(problem.lateral(), a.view(), &mut lateral_a);
        let half_stimulus_sq = 0.5 * squared_norm(problem.stimulus());
        let energy = energy_from_lateral(
            a.view(),
            lateral_a.view(),
            half_stimulus_sq,
            problem,
            &penalty,
            config.lambda,
        );
        Ok(AuxiliarySystem {
            problem,
            penalty,
            config,
            u,
            a,
            lateral_a,
            steps: 0,
            half_stimulus_sq,
            energy,
            max_energy_increase: f64::NEG_INFINITY,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn u(&self) -> ArrayView1<'_, f64> {
        self.u.view()
    }

    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.a.view()
    }

    pub fn energy(&self) -> EnergyValue {
        self.energy
    }

    /// Largest energy increase seen over a single step so far (negative if
    /// every step decreased the energy).
    pub fn max_energy_increase(&self) -> f64 {
        self.max_energy_increase
    }

    /// `‖b − u − Ωa‖∞`, i.e. `τ‖du/dt‖∞`.
    pub fn drift_norm(&self) -> f64 {
        let b = self.problem.bias();
        (0..self.u.len())
            .map(|i| (b[i] - self.u[i] - self.lateral_a[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn state(&self) -> AuxiliaryState {
        AuxiliaryState {
            time: self.time(),
            u: self.u.clone(),
            a: self.a.clone(),
            energy: self.energy,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let h = self.config.dt / self.config.tau;
        let b = self.problem.bias();
        for i in 0..self.u.len() {
            let drift = b[i] - self.u[i] - self.lateral_a[i];
            self.u[i] += h * drift;
        }
        for i in 0..self.u.len() {
            self.a[i] = output_map(self.u[i], &self.penalty, self.config.lambda)?;
        }
        sparse_matvec(self.problem.lateral(), self.a.view(), &mut self.lateral_a);
        self.steps += 1;
        let next = energy_from_lateral(
            self.a.view(),
            self.lateral_a.view(),
            self.half_stimulus_sq,
            self.problem,
            &self.penalty,
            self.config.lambda,
        );
        let increase = next.total - self.energy.total;
        self.max_energy_increase = self.max_energy_increase.max(increase);
        self.energy = next;
        if increase > self.config.energy_tolerance {
            return Err(Error::Instability {
                time: self.time(),
                increase,
                tolerance: self.config.energy_tolerance,
            });
        }
        Ok(())
    }
}

/// Sampled run of the auxiliary system.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<AuxiliaryState>,
    pub final_state: AuxiliaryState,
    /// Whether the stop tolerance was reached before the horizon.
    pub converged: bool,
    pub steps: u64,
    pub max_energy_increase: f64,
}

impl Trajectory {
    /// CSV with header `time,i,u,a,energy`; time in units of `tau`.
    pub fn to_csv(&self, tau: f64) -> String {
        let mut out = String::from("time,i,u,a,energy\n");
        for s in &self.samples {
            for i in 0..s.u.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    s.time / tau,
                    i,
                    s.u[i],
                    s.a[i],
                    s.energy.total
                );
            }
        }
        out
    }
}

pub fn integrate(problem: &Problem, penalty: &Penalty, config: &AuxConfig) -> Result<Trajectory> {
    let mut sys = AuxiliarySystem::new(problem, *penalty, *config)?;
    let total_steps = (config.horizon / config.dt).round() as u64;
    let sample_steps = ((config.sample_every / config.dt).round() as u64).max(1);
    let mut samples = vec![sys.state()];
    let mut converged = false;
    while sys.steps < total_steps {
        if sys.drift_norm() < config.stop_tolerance {
            converged = true;
            break;
        }
        sys.step()?;
        if sys.steps % sample_steps == 0 {
            samples.push(sys.state());
        }
    }
    if !converged {
        converged = sys.drift_norm() < config.stop_tolerance;
    }
    let final_state = sys.state();
    if samples.last().map(|s| s.time) != Some(final_state.time) {
        samples.push(final_state.clone());
    }
    Ok(Trajectory {
        samples,
        final_state,
        converged,
        steps: sys.steps,
        max_energy_increase: sys.max_energy_increase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_dictionary, make_sparse_code, synthesize, Dictionary};
    use ndarray::array;

    const EXP1: Penalty = Penalty::Exponential { gamma: 1.0 };

    /// Plain bisection, independent of the Newton path.
    fn bisect(u: f64, penalty: &Penalty, lambda: f64) -> f64 {
        let f = |a: f64| a + lambda * penalty.g_prime(a).unwrap() - u;
        let (mut lo, mut hi) = (0.0f64, u);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn soft_threshold_cases() {
        assert!((output_map(1.0, &Penalty::L1, 0.3).unwrap() - 0.7).abs() < 1e-15);
        for p in [Penalty::L1, EXP1, Penalty::Logarithmic { epsilon: 1.0 }, Penalty::Arctangent { eta: 1.0 }] {
            assert_eq!(output_map(0.0, &p, 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn exp_root_against_bisection() {
        // a + 0.5 e^{-a} = 1; frozen from the bisection oracle
        let expected = 0.768_039_047_013_465_5;
        let oracle = bisect(1.0, &EXP1, 0.5);
        assert!((oracle - expected).abs() < 1e-12, "{oracle}");
        let got = output_map(1.0, &EXP1, 0.5).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn energy_of_zero_and_truth() {
        let d = make_dictionary(6, 10, 1).unwrap();
        let c = make_sparse_code(10, 0.3, 2).unwrap();
        let p = synthesize(&d, &c, None).unwrap();
        let e0 = energy(Array1::zeros(10).view(), &p, &EXP1, 0.4).unwrap();
        assert!((e0.total - 0.5 * squared_norm(p.stimulus())).abs() < 1e-14);
        let et = energy(c.view(), &p, &EXP1, 0.4).unwrap();
        let pen: f64 = c.iter().map(|&v| EXP1.g(v).unwrap()).sum();
        assert!(et.data_term < 1e-28);
        assert!((et.total - 0.4 * pen).abs() < 1e-14);
        assert!(energy(Array1::from_elem(10, -1.0).view(), &p, &EXP1, 0.4).is_err());
    }

    #[test]
    fn lateral_energy_matches_direct() {
        let d = make_dictionary(8, 16, 5).unwrap();
        let c = make_sparse_code(16, 0.25, 6).unwrap();
        let p = synthesize(&d, &c, None).unwrap();
        let a = make_sparse_code(16, 0.5, 7).unwrap();
        let mut la = Array1::zeros(16);
        sparse_matvec(p.lateral(), a.view(), &mut la);
        let fast = energy_from_lateral(a.view(), la.view(), 0.5 * squared_norm(p.stimulus()), &p, &EXP1, 0.3);
        let direct = energy(a.view(), &p, &EXP1, 0.3).unwrap();
        assert!((fast.total - direct.total).abs() < 1e-12);
    }

    #[test]
    fn zero_bias_stays_at_rest() {
        let p = Problem::new(Dictionary::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(), array![0.0, 0.0], None).unwrap();
        let traj = integrate(&p, &EXP1, &AuxConfig { horizon: 1.0, ..AuxConfig::default() }).unwrap();
        assert!(traj.converged);
        assert!(traj.samples.iter().all(|s| s.a.iter().all(|&v| v == 0.0) && s.energy.total == 0.0));
    }

    #[test]
    fn scalar_problem_converges_to_soft_threshold() {
        let p = Problem::new(Dictionary::new(array![[1.0]]).unwrap(), array![1.0], None).unwrap();
        let cfg = AuxConfig { lambda: 0.3, ..AuxConfig::default() };
        let traj = integrate(&p, &Penalty::L1, &cfg).unwrap();
        assert!((traj.final_state.a[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let p = Problem::new(Dictionary::new(array![[1.0]]).unwrap(), array![1.0], None).unwrap();
        assert!(matches!(
            integrate(&p, &EXP1, &AuxConfig { lambda: 2.0, ..AuxConfig::default() }),
            Err(Error::Config(_))
        ));
        assert!(integrate(&p, &EXP1, &AuxConfig { dt: 0.1, ..AuxConfig::default() }).is_err());
    }

    #[test]
    fn case_split_holds_along_trajectory() {
        let d = make_dictionary(20, 40, 3).unwrap();
        let c = make_sparse_code(40, 0.1, 4).unwrap();
        let p = synthesize(&d, &c, None).unwrap();
        let cfg = AuxConfig { horizon: 20.0, ..AuxConfig::default() };
        let traj = integrate(&p, &EXP1, &cfg).unwrap();
        for s in &traj.samples {
            for i in 0..40 {
                let (u, a) = (s.u[i], s.a[i]);
                assert!(a >= 0.0);
                if a == 0.0 {
                    assert!(u <= cfg.lambda * EXP1.g_prime(0.0).unwrap());
                } else {
                    assert!((a - (u - cfg.lambda * EXP1.g_prime(a).unwrap())).abs() < 1e-10);
                }
            }
        }
        for w in traj.samples.windows(2) {
            assert!(w[1].energy.total <= w[0].energy.total + 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn l1_is_soft_threshold(u in -5.0f64..5.0, lambda in 0.01f64..2.0) {
                prop_assert_eq!(output_map(u, &Penalty::L1, lambda).unwrap(), (u - lambda).max(0.0));
            }

            #[test]
            fn map_is_monotone(u in 0.0f64..5.0, du in 0.0f64..2.0, gamma in 0.1f64..1.5) {
                let p = Penalty::Exponential { gamma };
                let lambda = 0.9 / (gamma * gamma);
                let lo = output_map(u, &p, lambda).unwrap();
                let hi = output_map(u + du, &p, lambda).unwrap();
                prop_assert!(hi >= lo - 1e-12);
            }

            #[test]
            fn map_solves_fixed_point(u in 0.0f64..5.0, eta in 0.3f64..3.0) {
                let p = Penalty::Arctangent { eta };
                let lambda = 1.2 * eta * eta;
                let a = output_map(u, &p, lambda).unwrap();
                if a > 0.0 {
                    prop_assert!((a - (u - lambda * p.g_prime(a).unwrap())).abs() < 1e-11);
                    prop_assert!((a - bisect(u, &p, lambda)).abs() < 1e-11);
                } else {
                    prop_assert!(u <= lambda * p.g_prime(0.0).unwrap());
                }
            }
        }
    }
}
