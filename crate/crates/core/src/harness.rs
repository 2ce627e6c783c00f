//! Seeded method comparisons: trials, parameter sweeps, convergence curves.
//!
//! Every trial draws one instance from `seed_base + trial` and hands the same
//! [`Problem`] to every method. Trials may run in parallel; results are merged
//! in trial order, so aggregates do not depend on scheduling.

use std::fmt;
use std::fmt::Write as _;

use ndarray::Array1;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{self, AuxConfig, AuxiliarySystem, Trajectory};
use crate::error::{Error, Result};
use crate::oracle::{ista_l1_observed, prox_grad_observed, SolverOptions, SolverResult};
use crate::penalty::Penalty;
use crate::problem::{
    make_dictionary, make_sparse_code, nmse, sparse_code_from, synthesize, NoiseSpec, Problem,
    DEMO_TRUTH, SUCCESS_THRESHOLD_DB,
};
use crate::spiking::{self, SpikingConfig, SpikingNetwork, Trace};

/// An NMSE trajectory has converged once it stays within this many dB of its final value.
pub const SETTLING_BAND_DB: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Spiking,
    Auxiliary,
    Ista,
    Proxgrad,
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Spiking => "spiking",
            SolverKind::Auxiliary => "auxiliary",
            SolverKind::Ista => "ista",
            SolverKind::Proxgrad => "proxgrad",
        }
    }
}

/// A solver paired with a penalty, e.g. `{"solver": "spiking", "penalty": "exp", "param": 1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MethodDocument", into = "MethodDocument")]
pub struct MethodSpec {
    pub solver: SolverKind,
    pub penalty: Penalty,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodDocument {
    solver: SolverKind,
    penalty: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<f64>,
}

impl TryFrom<MethodDocument> for MethodSpec {
    type Error = Error;

    fn try_from(doc: MethodDocument) -> Result<Self> {
        Ok(MethodSpec {
            solver: doc.solver,
            penalty: Penalty::from_name(&doc.penalty, doc.param)?,
        })
    }
}

impl From<MethodSpec> for MethodDocument {
    fn from(m: MethodSpec) -> Self {
        MethodDocument {
            solver: m.solver,
            penalty: m.penalty.name().to_string(),
            param: m.penalty.param(),
        }
    }
}

impl MethodSpec {
    pub fn new(solver: SolverKind, penalty: Penalty) -> Self {
        MethodSpec { solver, penalty }
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.solver.name(), self.penalty)
    }

    fn validate(&self, lambda: f64) -> Result<()> {
        if self.solver == SolverKind::Ista && !self.penalty.is_baseline() {
            return Err(Error::Config(format!(
                "ista only supports the l1 penalty, got {}",
                self.penalty
            )));
        }
        self.penalty.ensure_admissible(lambda)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The four spiking variants compared throughout: L1 baseline plus the
/// exponential, logarithmic and arctangent adaptive leaks, all with parameter 1.
pub fn default_methods() -> Vec<MethodSpec> {
    [
        Penalty::L1,
        Penalty::Exponential { gamma: 1.0 },
        Penalty::Logarithmic { epsilon: 1.0 },
        Penalty::Arctangent { eta: 1.0 },
    ]
    .into_iter()
    .map(|p| MethodSpec::new(SolverKind::Spiking, p))
    .collect()
}

/// The three-neuron demonstration: fixed truth, random square unit-norm
/// dictionaries, spiking L1 against spiking Exp(1). Fine time step and long
/// horizon so the rate estimates are not limited by spike-count quantization.
pub fn demo_spec() -> ExperimentSpec {
    ExperimentSpec {
        m: 3,
        n: 3,
        snr_db: None,
        truth: Some(DEMO_TRUTH.to_vec()),
        methods: vec![
            MethodSpec::new(SolverKind::Spiking, Penalty::L1),
            MethodSpec::new(SolverKind::Spiking, Penalty::Exponential { gamma: 1.0 }),
        ],
        lambda: 0.05,
        spiking: SpikingConfig {
            dt: 1e-3,
            t_ref: 1e-2,
            horizon: 1000.0,
            sample_every: 10.0,
            ..SpikingConfig::default()
        },
        ..ExperimentSpec::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub m: usize,
    pub n: usize,
    pub sparsity: f64,
    pub snr_db: Option<f64>,
    pub methods: Vec<MethodSpec>,
    /// Shared by every method; overrides `spiking.lambda` and `auxiliary.lambda`.
    pub lambda: f64,
    pub trials: usize,
    pub seed_base: u64,
    /// Fixed ground truth replacing the random sparse code (length `n`).
    pub truth: Option<Vec<f64>>,
    pub success_threshold_db: f64,
    pub spiking: SpikingConfig,
    pub auxiliary: AuxConfig,
    pub solver: SolverOptions,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            m: 100,
            n: 200,
            sparsity: 0.15,
            snr_db: Some(20.0),
            methods: default_methods(),
            lambda: 0.1,
            trials: 20,
            seed_base: 0,
            truth: None,
            success_threshold_db: SUCCESS_THRESHOLD_DB,
            spiking: SpikingConfig::default(),
            auxiliary: AuxConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentSpec {
    /// Copy with `lambda` pushed into the sub-configurations.
    pub fn resolved(&self) -> ExperimentSpec {
        let mut spec = self.clone();
        spec.spiking.lambda = spec.lambda;
        spec.auxiliary.lambda = spec.lambda;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.m == 0 || self.n == 0 || self.m > self.n {
            return Err(Error::Config(format!(
                "dictionary shape must satisfy 1 <= m <= n, got {}x{}",
                self.m, self.n
            )));
        }
        if let Some(t) = &self.truth {
            if t.len() != self.n {
                return Err(Error::Config(format!(
                    "truth has length {}, n = {}",
                    t.len(),
                    self.n
                )));
            }
            sparse_code_from(t).map_err(|e| Error::Config(e.to_string()))?;
        } else if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::Config(format!(
                "sparsity must lie in (0, 1], got {}",
                self.sparsity
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config(format!("snr_db must be finite, got {snr}")));
            }
        }
        let spec = self.resolved();
        let uses = |k: SolverKind| spec.methods.iter().any(|m| m.solver == k);
        if uses(SolverKind::Spiking) {
            spec.spiking.validate()?;
        }
        if uses(SolverKind::Auxiliary) || uses(SolverKind::Ista) || uses(SolverKind::Proxgrad) {
            spec.auxiliary.validate()?;
        }
        for m in &spec.methods {
            m.validate(spec.lambda)?;
        }
        Ok(())
    }

    /// Seeds for trial `t`: dictionary, code, noise.
    pub fn trial_seeds(&self, trial: usize) -> [u64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_base.wrapping_add(trial as u64));
        [rng.next_u64(), rng.next_u64(), rng.next_u64()]
    }

    /// The instance every method sees in trial `t`.
    pub fn trial_problem(&self, trial: usize) -> Result<Problem> {
        let [dict_seed, code_seed, noise_seed] = self.trial_seeds(trial);
        let dictionary = make_dictionary(self.m, self.n, dict_seed)?;
        let code = match &self.truth {
            Some(t) => sparse_code_from(t)?,
            None => make_sparse_code(self.n, self.sparsity, code_seed)?,
        };
        let noise = self.snr_db.map(|snr_db| NoiseSpec {
            snr_db,
            seed: noise_seed,
        });
        synthesize(&dictionary, &code, noise)
    }
}

/// What one method produced on one instance.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: MethodSpec,
    pub estimate: Array1<f64>,
    pub nmse: Option<f64>,
    /// First time after which the NMSE stays within [`SETTLING_BAND_DB`] of its
    /// final value. Iterative solvers map one iteration to one auxiliary `dt`.
    pub convergence_time: Option<f64>,
    pub trace: Option<Trace>,
    pub trajectory: Option<Trajectory>,
    pub solver: Option<SolverResult>,
}

fn settling_time(series: &[(f64, f64)]) -> Option<f64> {
    let &(_, last) = series.last()?;
    let mut time = series[series.len() - 1].0;
    for &(t, v) in series.iter().rev() {
        if v > last + SETTLING_BAND_DB {
            break;
        }
        time = t;
    }
    Some(time)
}

/// Runs one method on `problem` with the spec's (resolved) settings.
pub fn solve(method: &MethodSpec, problem: &Problem, spec: &ExperimentSpec) -> Result<MethodOutcome> {
    let spec = spec.resolved();
    method.validate(spec.lambda)?;
    let truth = problem.truth();
    let score = |a: &Array1<f64>| truth.and_then(|t| nmse(a.view(), t).ok());
    let mut outcome = match method.solver {
        SolverKind::Spiking => {
            let trace = spiking::run(problem, &method.penalty, &spec.spiking)?;
            let series: Vec<(f64, f64)> = trace
                .samples
                .iter()
                .filter_map(|s| s.nmse.map(|v| (s.time, v)))
                .collect();
            MethodOutcome {
                method: *method,
                estimate: trace.final_rates.clone(),
                nmse: None,
                convergence_time: settling_time(&series),
                trace: Some(trace),
                trajectory: None,
                solver: None,
            }
        }
        SolverKind::Auxiliary => {
            let traj = auxiliary::integrate(problem, &method.penalty, &spec.auxiliary)?;
            let series: Vec<(f64, f64)> = traj
                .samples
                .iter()
                .filter_map(|s| score(&s.a).map(|v| (s.time, v)))
                .collect();
            MethodOutcome {
                method: *method,
                estimate: traj.final_state.a.clone(),
                nmse: None,
                convergence_time: settling_time(&series),
                trace: None,
                trajectory: Some(traj),
                solver: None,
            }
        }
        SolverKind::Ista | SolverKind::Proxgrad => {
            let dt = spec.auxiliary.dt;
            let mut series = Vec::new();
            let observe = |k: usize, a: ndarray::ArrayView1<'_, f64>| {
                if let Some(v) = truth.and_then(|t| nmse(a, t).ok()) {
                    series.push((k as f64 * dt, v));
                }
            };
            let result = if method.solver == SolverKind::Ista {
                ista_l1_observed(problem, spec.lambda, &spec.solver, observe)?
            } else {
                prox_grad_observed(problem, &method.penalty, spec.lambda, &spec.solver, observe)?
            };
            MethodOutcome {
                method: *method,
                estimate: result.a.clone(),
                nmse: None,
                convergence_time: settling_time(&series),
                trace: None,
                trajectory: None,
                solver: Some(result),
            }
        }
    };
    outcome.nmse = score(&outcome.estimate);
    Ok(outcome)
}

fn with_jobs<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(work()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

/// Per-trial NMSE and convergence time of every method, in trial order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seeds: [u64; 3],
    pub nmse: Vec<f64>,
    pub convergence_time: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub trials: usize,
    pub median_nmse_db: f64,
    pub q25_nmse_db: f64,
    pub q75_nmse_db: f64,
    pub success_probability: f64,
    pub median_convergence_time: Option<f64>,
    pub nmse_db: Vec<f64>,
    pub convergence_times: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialsReport {
    pub aggregates: Vec<MethodAggregate>,
    pub trials: Vec<TrialRecord>,
}

impl TrialsReport {
    pub fn aggregate(&self, method: &MethodSpec) -> Option<&MethodAggregate> {
        let label = method.label();
        self.aggregates.iter().find(|a| a.method == label)
    }

    /// CSV, one row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,trials,median_nmse_db,q25_nmse_db,q75_nmse_db,success_probability,median_convergence_time\n",
        );
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                a.method,
                a.trials,
                a.median_nmse_db,
                a.q25_nmse_db,
                a.q75_nmse_db,
                a.success_probability,
                fmt_opt(a.median_convergence_time)
            );
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Linear-interpolated quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Runs every method on `spec.trials` seeded instances and aggregates NMSE.
/// Configuration errors surface before any trial runs.
pub fn run_trials(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<TrialsReport> {
    run_trials_with(spec, jobs, |_, _| Ok(()))
}

/// [`run_trials`] with a callback that sees every method's full outcome
/// (traces, trajectories) as `inspect(trial, outcome)` before it is dropped.
/// The callback may run concurrently from several trials.
pub fn run_trials_with(
    spec: &ExperimentSpec,
    jobs: Option<usize>,
    inspect: impl Fn(usize, &MethodOutcome) -> Result<()> + Sync,
) -> Result<TrialsReport> {
    spec.validate()?;
    let spec = spec.resolved();
    let trials: Vec<TrialRecord> = with_jobs(jobs, || {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| -> Result<TrialRecord> {
                let problem = spec.trial_problem(t)?;
                let mut nmse = Vec::with_capacity(spec.methods.len());
                let mut convergence_time = Vec::with_capacity(spec.methods.len());
                for m in &spec.methods {
                    let outcome = solve(m, &problem, &spec)?;
                    inspect(t, &outcome)?;
                    nmse.push(outcome.nmse.ok_or_else(|| {
                        Error::UndefinedMetric("trial instance has an all-zero truth".into())
                    })?);
                    convergence_time.push(outcome.convergence_time);
                }
                Ok(TrialRecord {
                    trial: t,
                    seeds: spec.trial_seeds(t),
                    nmse,
                    convergence_time,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let aggregates = spec
        .methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let values: Vec<f64> = trials.iter().map(|r| r.nmse[k]).collect();
            let times: Vec<f64> = trials.iter().filter_map(|r| r.convergence_time[k]).collect();
            let successes = values.iter().filter(|&&v| v < spec.success_threshold_db).count();
            MethodAggregate {
                method: m.label(),
                trials: values.len(),
                median_nmse_db: median(&values),
                q25_nmse_db: quantile(&values, 0.25),
                q75_nmse_db: quantile(&values, 0.75),
                success_probability: successes as f64 / values.len() as f64,
                median_convergence_time: (!times.is_empty()).then(|| median(&times)),
                nmse_db: values,
                convergence_times: times,
            }
        })
        .collect();
    Ok(TrialsReport { aggregates, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Sparsity,
    SnrDb,
    /// `m / n` with `n` fixed.
    MeasurementRatio,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Sparsity => "sparsity",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::MeasurementRatio => "measurement_ratio",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sparsity" => Ok(SweepAxis::Sparsity),
            "snr" | "snr_db" | "noise" => Ok(SweepAxis::SnrDb),
            "measurement" | "measurement_ratio" | "ratio" => Ok(SweepAxis::MeasurementRatio),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (expected sparsity, snr_db or measurement)"
            ))),
        }
    }

    fn apply(&self, base: &ExperimentSpec, value: f64) -> Result<ExperimentSpec> {
        let mut spec = base.clone();
        match self {
            SweepAxis::Sparsity => spec.sparsity = value,
            SweepAxis::SnrDb => spec.snr_db = Some(value),
            SweepAxis::MeasurementRatio => {
                let m = (value * spec.n as f64).round();
                if !(m >= 1.0 && m <= spec.n as f64) {
                    return Err(Error::Config(format!(
                        "measurement ratio {value} gives m = {m} for n = {}",
                        spec.n
                    )));
                }
                spec.m = m as usize;
            }
        }
        Ok(spec)
    }
}

/// Parses `lo:hi:step` (inclusive) or a comma-separated list.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse sweep values {text:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
                return Err(bad());
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            // rounding keeps 0.1 + 2 * 0.05 printing as 0.2
            (0..count)
                .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis_value: f64,
    pub m: usize,
    pub method: String,
    pub median_nmse_db: f64,
    pub q25_nmse_db: f64,
    pub q75_nmse_db: f64,
    pub success_probability: f64,
    pub median_convergence_time: Option<f64>,
    pub convergence_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    /// CSV, one row per (axis value, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "axis,value,m,method,median_nmse_db,q25_nmse_db,q75_nmse_db,success_probability,median_convergence_time\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.axis.name(),
                r.axis_value,
                r.m,
                r.method,
                r.median_nmse_db,
                r.q25_nmse_db,
                r.q75_nmse_db,
                r.success_probability,
                fmt_opt(r.median_convergence_time)
            );
        }
        out
    }

    pub fn series(&self, method: &str) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| r.method == method).collect()
    }
}

/// `run_trials` at every value of `axis`. Values must be strictly monotone.
pub fn sweep(spec: &ExperimentSpec, axis: SweepAxis, values: &[f64], jobs: Option<usize>) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::Config("sweep values must be strictly monotone".into()));
    }
    let specs = values
        .iter()
        .map(|&v| axis.apply(spec, v))
        .collect::<Result<Vec<_>>>()?;
    for s in &specs {
        s.validate()?;
    }
    let mut records = Vec::new();
    for (s, &value) in specs.iter().zip(values) {
        let report = run_trials(s, jobs)?;
        for a in report.aggregates {
            records.push(SweepRecord {
                axis_value: value,
                m: s.m,
                method: a.method,
                median_nmse_db: a.median_nmse_db,
                q25_nmse_db: a.q25_nmse_db,
                q75_nmse_db: a.q75_nmse_db,
                success_probability: a.success_probability,
                median_convergence_time: a.median_convergence_time,
                convergence_times: a.convergence_times,
            });
        }
    }
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        records,
    })
}

/// NMSE of every method sampled at common times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub times: Vec<f64>,
    pub methods: Vec<String>,
    /// `nmse_db[method][time]`
    pub nmse_db: Vec<Vec<f64>>,
}

impl ConvergenceTable {
    /// CSV with header `time,method,nmse_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,method,nmse_db\n");
        for (m, row) in self.methods.iter().zip(&self.nmse_db) {
            for (t, v) in self.times.iter().zip(row) {
                let _ = writeln!(out, "{t},{m},{v}");
            }
        }
        out
    }

    /// First sample time at which `method` reaches `level_db` or below.
    pub fn time_to_reach(&self, method: usize, level_db: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.nmse_db[method])
            .find(|(_, &v)| v <= level_db)
            .map(|(&t, _)| t)
    }
}

/// Samples NMSE along each method's trajectory at `times` (ascending). Iterative
/// solvers place iteration `k` at time `k·auxiliary.dt`.
pub fn convergence_curve(
    problem: &Problem,
    methods: &[MethodSpec],
    spec: &ExperimentSpec,
    times: &[f64],
) -> Result<ConvergenceTable> {
    let truth = problem
        .truth()
        .ok_or_else(|| Error::UndefinedMetric("convergence curve needs a ground truth".into()))?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(Error::Parameter("sample times must be non-negative and ascending".into()));
    }
    let spec = spec.resolved();
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        method.validate(spec.lambda)?;
        let mut row = Vec::with_capacity(times.len());
        match method.solver {
            SolverKind::Spiking => {
                let mut net = SpikingNetwork::new(problem, method.penalty, spec.spiking)?;
                let dt = spec.spiking.dt;
                for &t in times {
                    let target = (t / dt).round() as u64;
                    while net.steps() < target {
                        net.step();
                    }
                    row.push(nmse(net.rates(), truth)?);
                }
            }
            SolverKind::Auxiliary => {
                let mut sys = AuxiliarySystem::new(problem, method.penalty, spec.auxiliary)?;
                let dt = spec.auxiliary.dt;
                let mut steps = 0u64;
                for &t in times {
                    let target = (t / dt).round() as u64;
                    while steps < target {
                        sys.step()?;
                        steps += 1;
                    }
                    row.push(nmse(sys.a(), truth)?);
                }
            }
            SolverKind::Ista | SolverKind::Proxgrad => {
                let dt = spec.auxiliary.dt;
                let last = times.last().copied().unwrap_or(0.0);
                let options = SolverOptions {
                    max_iters: (last / dt).round() as usize,
                    ..spec.solver
                };
                let mut per_iter = Vec::new();
                let observe = |_: usize, a: ndarray::ArrayView1<'_, f64>| {
                    per_iter.push(nmse(a, truth).unwrap_or(f64::NAN));
                };
                if method.solver == SolverKind::Ista {
                    ista_l1_observed(problem, spec.lambda, &options, observe)?;
                } else {
                    prox_grad_observed(problem, &method.penalty, spec.lambda, &options, observe)?;
                }
                for &t in times {
                    let k = ((t / dt).round() as usize).min(per_iter.len() - 1);
                    row.push(per_iter[k]);
                }
            }
        }
        rows.push(row);
    }
    Ok(ConvergenceTable {
        times: times.to_vec(),
        methods: methods.iter().map(|m| m.label()).collect(),
        nmse_db: rows,
    })
}
