use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use assr_core::harness::{solve, SolverKind};
use assr_core::{convergence_curve, run_trials, sweep, ExperimentSpec, SweepAxis};

use crate::config::{Command, Meta};

fn file_label(label: &str) -> String {
    label.replace('(', "_").replace(')', "")
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn prepare(out: Option<PathBuf>, meta: &Meta) -> anyhow::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| meta.default_dir());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write(&dir, "meta.json", &meta.to_json())?;
    Ok(dir)
}

/// Trial 0 in full detail, then aggregates over all trials.
pub fn solve_command(command: Command, spec: &ExperimentSpec, out: Option<PathBuf>, jobs: Option<usize>) -> anyhow::Result<PathBuf> {
    spec.validate()?;
    let spec = spec.resolved();
    let meta = Meta::new(command, &spec, None, None);
    let dir = prepare(out, &meta)?;

    let problem = spec.trial_problem(0)?;
    write(&dir, "problem.json", &(problem.to_json()? + "\n"))?;
    let mut outcomes = Vec::with_capacity(spec.methods.len());
    for method in &spec.methods {
        outcomes.push(solve(method, &problem, &spec)?);
    }

    let labels: Vec<String> = spec.methods.iter().map(|m| m.label()).collect();
    let mut codes = String::from("i");
    if problem.truth().is_some() {
        codes.push_str(",truth");
    }
    for l in &labels {
        let _ = write!(codes, ",{l}");
    }
    codes.push('\n');
    for i in 0..problem.n() {
        let _ = write!(codes, "{i}");
        if let Some(t) = problem.truth() {
            let _ = write!(codes, ",{}", t[i]);
        }
        for o in &outcomes {
            let _ = write!(codes, ",{}", o.estimate[i]);
        }
        codes.push('\n');
    }
    write(&dir, "codes.csv", &codes)?;

    let mut nmse = String::from("method,nmse_db,convergence_time\n");
    for (l, o) in labels.iter().zip(&outcomes) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(nmse, "{l},{},{}", opt(o.nmse), opt(o.convergence_time));
    }
    write(&dir, "nmse.csv", &nmse)?;

    for (l, o) in labels.iter().zip(&outcomes) {
        let name = file_label(l);
        if let Some(trace) = &o.trace {
            write(&dir, &format!("raster_{name}.csv"), &trace.raster.to_csv(trace.tau))?;
            write(&dir, &format!("trace_{name}.csv"), &trace.to_csv())?;
        }
        if let Some(traj) = &o.trajectory {
            write(&dir, &format!("trajectory_{name}.csv"), &traj.to_csv(spec.auxiliary.tau))?;
        }
    }

    if problem.truth().is_some() {
        let times = curve_times(&spec);
        let table = convergence_curve(&problem, &spec.methods, &spec, &times)?;
        write(&dir, "convergence.csv", &table.to_csv())?;
    }

    let report = run_trials(&spec, jobs)?;
    write(&dir, "aggregates.csv", &report.to_csv())?;
    let mut trials = String::from("trial,method,nmse_db,convergence_time\n");
    for r in &report.trials {
        for (k, l) in labels.iter().enumerate() {
            let t = r.convergence_time[k].map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(trials, "{},{l},{},{t}", r.trial, r.nmse[k]);
        }
    }
    write(&dir, "trials.csv", &trials)?;
    write(&dir, "summary.json", &(serde_json::to_string_pretty(&report.aggregates)? + "\n"))?;

    println!("{:<28} {:>14} {:>10}", "method", "median NMSE dB", "success");
    for a in &report.aggregates {
        println!("{:<28} {:>14.3} {:>10.2}", a.method, a.median_nmse_db, a.success_probability);
    }
    Ok(dir)
}

/// Sample times spanning the longest horizon among the configured solvers.
fn curve_times(spec: &ExperimentSpec) -> Vec<f64> {
    let spiking = spec.methods.iter().any(|m| m.solver == SolverKind::Spiking);
    let (horizon, every) = if spiking {
        (spec.spiking.horizon, spec.spiking.sample_every)
    } else {
        (spec.auxiliary.horizon.min(100.0 * spec.auxiliary.tau), spec.auxiliary.tau)
    };
    let count = (horizon / every).round() as usize;
    (0..=count).map(|k| k as f64 * every).collect()
}

pub fn sweep_command(
    spec: &ExperimentSpec,
    axis: SweepAxis,
    values: &[f64],
    out: Option<PathBuf>,
    jobs: Option<usize>,
) -> anyhow::Result<PathBuf> {
    let spec = spec.resolved();
    // fail on bad values before anything is written
    let meta = Meta::new(Command::Sweep, &spec, Some(axis), Some(values.to_vec()));
    let result = sweep(&spec, axis, values, jobs)?;
    let dir = prepare(out, &meta)?;
    write(&dir, "sweep.csv", &result.to_csv())?;
    write(&dir, "sweep.json", &(serde_json::to_string_pretty(&result)? + "\n"))?;
    println!("{:<10} {:<28} {:>14} {:>10}", axis.name(), "method", "median NMSE dB", "success");
    for r in &result.records {
        println!(
            "{:<10} {:<28} {:>14.3} {:>10.2}",
            r.axis_value, r.method, r.median_nmse_db, r.success_probability
        );
    }
    Ok(dir)
}

pub fn replay(meta: &Meta, out: Option<PathBuf>, jobs: Option<usize>) -> anyhow::Result<PathBuf> {
    match meta.command {
        Command::Solve | Command::Demo => solve_command(meta.command, &meta.config, out, jobs),
        Command::Sweep => {
            let axis = meta.axis.context("sweep metadata lacks an axis")?;
            let values = meta.values.as_deref().context("sweep metadata lacks values")?;
            sweep_command(&meta.config, axis, values, out, jobs)
        }
    }
}
