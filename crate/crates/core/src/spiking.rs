//! Clock-driven integrate-and-fire network with adaptive leak.
//!
//! Each neuron `i` carries a soma current `μ_i` that relaxes toward its bias
//! `b_i` with time constant `τ` and is kicked down by `Ω_ij / τ` whenever
//! neuron `j` fires. The potential integrates `μ_i − Λ_i`, where the leak
//! `Λ_i = λ g'(a_i)` depends on the neuron's own firing rate `a_i`, is floored
//! at 0, and resets to 0 on reaching the threshold 1. A neuron that fired stays
//! at rest for `t_ref`.
//!
//! One step of length `dt`:
//!
//! 1. `μ_i ← b_i + (μ_i − b_i)·exp(−dt/τ)` (exact between spikes);
//! 2. `Λ_i ← λ g'(a_i)` from the rates at the start of the step;
//! 3. non-refractory neurons integrate `ν_i ← max(ν_i + dt·(μ_i − Λ_i), 0)`;
//! 4. every neuron with `ν_i >= 1` fires and resets;
//! 5. all kicks of this step are applied after all threshold checks;
//! 6. rates and running current averages are refreshed.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::auxiliary::energy;
use crate::error::{Error, Result};
use crate::penalty::Penalty;
use crate::problem::{nmse, Problem};

/// Spiking threshold.
pub const NU_SPIKE: f64 = 1.0;
/// Reset potential.
pub const NU_REST: f64 = 0.0;
/// Lower bound of the potential.
pub const NU_FLOOR: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikingConfig {
    pub tau: f64,
    pub lambda: f64,
    pub t_ref: f64,
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: f64,
}

impl Default for SpikingConfig {
    fn default() -> Self {
        SpikingConfig {
            tau: 1.0,
            lambda: 0.1,
            t_ref: 0.1,
            dt: 0.01,
            horizon: 100.0,
            sample_every: 1.0,
        }
    }
}

impl SpikingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("t_ref", self.t_ref),
            ("dt", self.dt),
            ("sample_every", self.sample_every),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("spiking {name} must be positive, got {v}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "spiking horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.dt > self.t_ref / 10.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "dt = {} must not exceed t_ref/10 = {}",
                self.dt,
                self.t_ref / 10.0
            )));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }

    fn refractory_steps(&self) -> u32 {
        (self.t_ref / self.dt).round() as u32
    }

    fn sample_steps(&self) -> u64 {
        ((self.sample_every / self.dt).round() as u64).max(1)
    }
}

/// Snapshot of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub potential: f64,
    pub soma_current: f64,
    pub spike_count: u64,
    /// End of the current (or last) refractory period; `-inf` before the first spike.
    pub refractory_until: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub neuron: usize,
    pub time: f64,
}

/// Time-ordered spike events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub events: Vec<SpikeEvent>,
}

impl SpikeRaster {
    /// CSV with header `neuron,time`, times in units of `tau`.
    pub fn to_csv(&self, tau: f64) -> String {
        let mut out = String::from("neuron,time\n");
        for e in &self.events {
            let _ = writeln!(out, "{},{}", e.neuron, e.time / tau);
        }
        out
    }

    pub fn spike_times(&self, neuron: usize) -> impl Iterator<Item = f64> + '_ {
        self.events
            .iter()
            .filter(move |e| e.neuron == neuron)
            .map(|e| e.time)
    }

    /// Smallest interval between consecutive spikes of the same neuron.
    pub fn min_interspike_interval(&self, n: usize) -> Option<f64> {
        let mut last = vec![f64::NAN; n];
        let mut min: Option<f64> = None;
        for e in &self.events {
            let prev = last[e.neuron];
            if !prev.is_nan() {
                let d = e.time - prev;
                min = Some(min.map_or(d, |m: f64| m.min(d)));
            }
            last[e.neuron] = e.time;
        }
        min
    }
}

/// Per-neuron spike count in `[0, t]` divided by `t`; zero at `t = 0`.
pub fn firing_rates(raster: &SpikeRaster, t: f64, n: usize) -> Array1<f64> {
    let mut rates = Array1::zeros(n);
    if t <= 0.0 {
        return rates;
    }
    for e in raster.events.iter().filter(|e| e.time <= t) {
        rates[e.neuron] += 1.0;
    }
    rates / t
}

/// Bounds `(B−, B+)` that every soma current and running average respects.
///
/// With `β = 1/(τ(1 − exp(−t_ref/τ)))` bounding the filtered spike train of a
/// neuron limited by its refractory period, `B± = ±(b_max + (N−1)·Ω_max·β)`.
pub fn current_bounds(problem: &Problem, config: &SpikingConfig) -> (f64, f64) {
    let b_max = problem.bias().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let omega_max = problem.lateral().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = problem.n() as f64;
    let beta = 1.0 / (config.tau * (-(-config.t_ref / config.tau).exp_m1()));
    let reach = b_max + (n - 1.0) * omega_max * beta;
    (-reach, reach)
}

/// Sampled state of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub rates: Array1<f64>,
    pub average_currents: Array1<f64>,
    pub potentials: Array1<f64>,
    pub currents: Array1<f64>,
    pub energy: f64,
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub tau: f64,
    pub samples: Vec<TraceSample>,
    pub raster: SpikeRaster,
    /// Firing rates at the horizon: the recovered code.
    pub final_rates: Array1<f64>,
    pub bounds: (f64, f64),
    /// Steps at which some `μ_i` or `u_i` left `bounds`.
    pub bound_violations: u64,
}

impl Trace {
    /// CSV with header `time,neuron,rate,potential,current,energy,nmse`;
    /// time in units of `tau`, `nmse` empty when there is no ground truth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,neuron,rate,potential,current,energy,nmse\n");
        for s in &self.samples {
            let nmse = s.nmse.map(|v| v.to_string()).unwrap_or_default();
            for i in 0..s.rates.len() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.time / self.tau,
                    i,
                    s.rates[i],
                    s.potentials[i],
                    s.currents[i],
                    s.energy,
                    nmse
                );
            }
        }
        out
    }
}

pub struct SpikingNetwork<'p> {
    problem: &'p Problem,
    penalty: Penalty,
    config: SpikingConfig,
    decay: f64,
    /// `∫ μ` over one step per unit of `μ − b`
    decay_integral: f64,
    refractory_steps: u32,
    potential: Vec<f64>,
    current: Vec<f64>,
    current_integral: Vec<f64>,
    spike_count: Vec<u64>,
    refractory_left: Vec<u32>,
    last_spike: Vec<f64>,
    rate: Vec<f64>,
    leak: Vec<f64>,
    fired: Vec<usize>,
    steps: u64,
    raster: SpikeRaster,
    bounds: (f64, f64),
    bound_violations: u64,
}

impl<'p> SpikingNetwork<'p> {
    /// Network at rest: `ν = 0`, `μ = b`, no spikes.
    pub fn new(problem: &'p Problem, penalty: Penalty, config: SpikingConfig) -> Result<Self> {
        config.validate()?;
        penalty.ensure_admissible(config.lambda)?;
        let n = problem.n();
        let ratio = config.dt / config.tau;
        Ok(SpikingNetwork {
            problem,
            penalty,
            config,
            decay: (-ratio).exp(),
            decay_integral: -config.tau * (-ratio).exp_m1(),
            refractory_steps: config.refractory_steps(),
            potential: vec![NU_REST; n],
            current: problem.bias().to_vec(),
            current_integral: vec![0.0; n],
            spike_count: vec![0; n],
            refractory_left: vec![0; n],
            last_spike: vec![f64::NEG_INFINITY; n],
            rate: vec![0.0; n],
            leak: vec![0.0; n],
            fired: Vec::new(),
            steps: 0,
            raster: SpikeRaster::default(),
            bounds: current_bounds(problem, &config),
            bound_violations: 0,
        })
    }

    pub fn config(&self) -> &SpikingConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn rates(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.rate[..])
    }

    pub fn potentials(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.potential[..])
    }

    pub fn currents(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.current[..])
    }

    /// Running averages `u_i(t) = (1/t) ∫ μ_i`; equal to `μ(0)` at `t = 0`.
    pub fn average_currents(&self) -> Array1<f64> {
        let t = self.time();
        if t == 0.0 {
            return Array1::from(self.current.clone());
        }
        self.current_integral.iter().map(|v| v / t).collect()
    }

    pub fn raster(&self) -> &SpikeRaster {
        &self.raster
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn bound_violations(&self) -> u64 {
        self.bound_violations
    }

    pub fn neuron(&self, i: usize) -> NeuronState {
        NeuronState {
            potential: self.potential[i],
            soma_current: self.current[i],
            spike_count: self.spike_count[i],
            refractory_until: self.last_spike[i] + self.config.t_ref,
            rate: self.rate[i],
        }
    }

    /// Advances one step and returns the neurons that fired in it.
    pub fn step(&mut self) -> &[usize] {
        let n = self.potential.len();
        let bias = self.problem.bias();
        let dt = self.config.dt;
        let lambda = self.config.lambda;

        for i in 0..n {
            let excess = self.current[i] - bias[i];
            self.current_integral[i] += bias[i] * dt + excess * self.decay_integral;
            self.current[i] = bias[i] + excess * self.decay;
            self.leak[i] = lambda * self.penalty.slope_unchecked(self.rate[i]);
        }

        let t_end = (self.steps + 1) as f64 * dt;
        self.fired.clear();
        for i in 0..n {
            if self.refractory_left[i] > 0 {
                self.refractory_left[i] -= 1;
                continue;
            }
            let v = self.potential[i] + dt * (self.current[i] - self.leak[i]);
            self.potential[i] = v.max(NU_FLOOR);
            if self.potential[i] >= NU_SPIKE {
                self.potential[i] = NU_REST;
                self.refractory_left[i] = self.refractory_steps;
                self.spike_count[i] += 1;
                self.last_spike[i] = t_end;
                self.fired.push(i);
                self.raster.events.push(SpikeEvent { neuron: i, time: t_end });
            }
        }

        let lateral = self.problem.lateral();
        let inv_tau = 1.0 / self.config.tau;
        for &j in &self.fired {
            for (mu, w) in self.current.iter_mut().zip(lateral.column(j)) {
                *mu -= w * inv_tau;
            }
        }

        self.steps += 1;
        let (lo, hi) = self.bounds;
        let slack = 1e-9 * (1.0 + hi.abs());
        let mut violated = false;
        for i in 0..n {
            self.rate[i] = self.spike_count[i] as f64 / t_end;
            let u = self.current_integral[i] / t_end;
            let mu = self.current[i];
            if mu < lo - slack || mu > hi + slack || u < lo - slack || u > hi + slack {
                violated = true;
            }
            debug_assert!((NU_FLOOR..NU_SPIKE).contains(&self.potential[i]));
        }
        if violated {
            self.bound_violations += 1;
        }
        &self.fired
    }

    pub fn sample(&self) -> TraceSample {
        let rates = Array1::from(self.rate.clone());
        // rates are non-negative by construction
        let energy = energy(rates.view(), self.problem, &self.penalty, self.config.lambda)
            .map(|e| e.total)
            .unwrap_or(f64::NAN);
        let nmse = self
            .problem
            .truth()
            .and_then(|t| nmse(rates.view(), t).ok());
        TraceSample {
            time: self.time(),
            rates,
            average_currents: self.average_currents(),
            potentials: Array1::from(self.potential.clone()),
            currents: Array1::from(self.current.clone()),
            energy,
            nmse,
        }
    }

    pub fn into_trace(self, samples: Vec<TraceSample>) -> Trace {
        Trace {
            tau: self.config.tau,
            samples,
            final_rates: Array1::from(self.rate),
            bounds: self.bounds,
            bound_violations: self.bound_violations,
            raster: self.raster,
        }
    }
}

/// Simulates from rest to the horizon, sampling every `sample_every`.
pub fn run(problem: &Problem, penalty: &Penalty, config: &SpikingConfig) -> Result<Trace> {
    let mut net = SpikingNetwork::new(problem, *penalty, *config)?;
    let total = config.total_steps();
    let every = config.sample_steps();
    let mut samples = Vec::new();
    if total > 0 {
        samples.push(net.sample());
    }
    while net.steps() < total {
        net.step();
        if net.steps() % every == 0 || net.steps() == total {
            samples.push(net.sample());
        }
    }
    Ok(net.into_trace(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_dictionary, make_sparse_code, synthesize, Dictionary, DEMO_TRUTH};
    use ndarray::array;

    fn scalar_problem(b: f64) -> Problem {
        Problem::new(Dictionary::new(array![[1.0]]).unwrap(), array![b], None).unwrap()
    }

    #[test]
    fn starts_at_rest_with_bias_current() {
        let d = make_dictionary(3, 3, 2).unwrap();
        let p = synthesize(&d, &ndarray::arr1(&DEMO_TRUTH), None).unwrap();
        let net = SpikingNetwork::new(&p, Penalty::Exponential { gamma: 1.0 }, SpikingConfig::default()).unwrap();
        for i in 0..3 {
            let s = net.neuron(i);
            assert_eq!(s.potential, 0.0);
            assert_eq!(s.soma_current, p.bias()[i]);
            assert_eq!((s.spike_count, s.rate), (0, 0.0));
        }
    }

    #[test]
    fn rejects_inadmissible_penalty() {
        let p = scalar_problem(1.0);
        let cfg = SpikingConfig { lambda: 2.0, ..SpikingConfig::default() };
        assert!(matches!(
            SpikingNetwork::new(&p, Penalty::Exponential { gamma: 1.0 }, cfg),
            Err(Error::Config(_))
        ));
        let cfg = SpikingConfig { dt: 0.02, ..SpikingConfig::default() };
        assert!(SpikingNetwork::new(&p, Penalty::L1, cfg).is_err());
    }

    #[test]
    fn non_positive_bias_never_fires() {
        let p = Problem::new(
            Dictionary::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            array![-0.5, 0.0],
            None,
        )
        .unwrap();
        let trace = run(&p, &Penalty::L1, &SpikingConfig::default()).unwrap();
        assert!(trace.raster.events.is_empty());
        assert!(trace.final_rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_stimulus_is_at_rest() {
        let d = make_dictionary(2, 3, 1).unwrap();
        let p = Problem::new(d, array![0.0, 0.0], None).unwrap();
        let trace = run(&p, &Penalty::Exponential { gamma: 1.0 }, &SpikingConfig::default()).unwrap();
        assert!(trace.raster.events.is_empty());
        assert!(trace.samples.iter().all(|s| s.nmse.is_none()));
    }

    #[test]
    fn single_neuron_rate_approaches_soft_threshold() {
        // u -> b = 1, so the rate tends to max(1 - 0.3, 0)
        let p = scalar_problem(1.0);
        let cfg = SpikingConfig {
            lambda: 0.3,
            dt: 1e-4,
            t_ref: 1e-3,
            horizon: 400.0,
            sample_every: 10.0,
            ..SpikingConfig::default()
        };
        let trace = run(&p, &Penalty::L1, &cfg).unwrap();
        assert!((trace.final_rates[0] - 0.7).abs() < 0.01, "{}", trace.final_rates[0]);
    }

    #[test]
    fn simultaneous_spikes_both_kick() {
        // duplicated atom: both neurons see the same drive and cross together
        let d = Dictionary::new(array![[1.0, 1.0], [0.0, 0.0]]).unwrap();
        let p = Problem::new(d, array![2.0, 0.0], None).unwrap();
        let mut net = SpikingNetwork::new(&p, Penalty::L1, SpikingConfig::default()).unwrap();
        let fired = loop {
            let fired = net.step().to_vec();
            if !fired.is_empty() {
                break fired;
            }
        };
        assert_eq!(fired, vec![0, 1]);
        for i in 0..2 {
            // mu was still at b = 2 and each receives one kick of 1/tau
            assert!((net.currents()[i] - 1.0).abs() < 1e-12);
            assert_eq!(net.potentials()[i], 0.0);
        }
    }

    #[test]
    fn raster_and_rates_are_consistent() {
        let raster = SpikeRaster {
            events: [1.0, 2.0, 3.0]
                .iter()
                .map(|&time| SpikeEvent { neuron: 0, time })
                .collect(),
        };
        assert_eq!(firing_rates(&raster, 4.0, 1)[0], 0.75);
        assert_eq!(firing_rates(&SpikeRaster::default(), 4.0, 3), Array1::<f64>::zeros(3));
        assert_eq!(firing_rates(&raster, 0.0, 1)[0], 0.0);
        assert_eq!(raster.min_interspike_interval(1), Some(1.0));
    }

    #[test]
    fn periodic_raster_rate() {
        let p = 0.37;
        let raster = SpikeRaster {
            events: (1..=10_000)
                .map(|k| SpikeEvent { neuron: 0, time: k as f64 * p })
                .collect(),
        };
        let t = 3000.0;
        let expected = (t / p).floor() / t;
        assert!((firing_rates(&raster, t, 1)[0] - expected).abs() < 1e-12);
        assert!((expected - 1.0 / p).abs() < 1e-3);
    }

    #[test]
    fn bounds_special_cases() {
        let cfg = SpikingConfig::default();
        let p = scalar_problem(-0.8);
        assert_eq!(current_bounds(&p, &cfg), (-0.8, 0.8));
        let d = Dictionary::new(Array2::eye(3)).unwrap();
        let p = Problem::new(d, array![0.2, -0.5, 0.1], None).unwrap();
        assert_eq!(current_bounds(&p, &cfg), (-0.5, 0.5));
        // large t_ref: beta -> 1/tau
        let d = make_dictionary(3, 5, 1).unwrap();
        let p = synthesize(&d, &make_sparse_code(5, 0.4, 1).unwrap(), None).unwrap();
        let (_, hi) = current_bounds(&p, &SpikingConfig { t_ref: 1e3, tau: 2.0, ..cfg });
        let b_max = p.bias().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let o_max = p.lateral().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((hi - (b_max + 4.0 * o_max / 2.0)).abs() < 1e-12);
    }

    use ndarray::Array2;

    #[test]
    fn network_invariants_hold() {
        let d = make_dictionary(10, 20, 8).unwrap();
        let c = make_sparse_code(20, 0.2, 9).unwrap();
        let p = synthesize(&d, &c, None).unwrap();
        let cfg = SpikingConfig { horizon: 50.0, ..SpikingConfig::default() };
        let trace = run(&p, &Penalty::Exponential { gamma: 1.0 }, &cfg).unwrap();
        assert_eq!(trace.bound_violations, 0);
        assert!(!trace.raster.events.is_empty());
        assert!(trace.raster.min_interspike_interval(20).unwrap() >= cfg.t_ref - 1e-9);
        for s in &trace.samples {
            assert!(s.potentials.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
        let rates = firing_rates(&trace.raster, cfg.horizon, 20);
        assert!((&rates - &trace.final_rates).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn empty_horizon() {
        let p = scalar_problem(1.0);
        let trace = run(&p, &Penalty::L1, &SpikingConfig { horizon: 0.0, ..SpikingConfig::default() }).unwrap();
        assert!(trace.samples.is_empty());
        assert_eq!(trace.final_rates[0], 0.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let d = make_dictionary(6, 12, 3).unwrap();
        let p = synthesize(&d, &make_sparse_code(12, 0.25, 4).unwrap(), None).unwrap();
        let cfg = SpikingConfig { horizon: 20.0, ..SpikingConfig::default() };
        let a = run(&p, &Penalty::Logarithmic { epsilon: 1.0 }, &cfg).unwrap();
        let b = run(&p, &Penalty::Logarithmic { epsilon: 1.0 }, &cfg).unwrap();
        assert_eq!(a.raster, b.raster);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn leak_shrinks_with_rate() {
        let p = Penalty::Arctangent { eta: 1.0 };
        let lambda = 0.5;
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let leak = lambda * p.slope_unchecked(k as f64 * 0.05);
            assert!(leak <= prev);
            prev = leak;
        }
    }
}
