//! Command-line driver: parses flags, loads the configuration, dispatches to
//! the library and writes every artifact under the output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::experiments::{
    generate, mean_fit_curve, run_sweep, theorem_spectrum, tuned_fit, GrowthDiagnostic, Tuning,
};
use crate::geometry::SampleSet;
use crate::sobolev::{continuum_seminorm, zoo_function, zoo_toml, ZOO_NAMES};

/// Environment variable consulted when `--out` is absent.
pub const OUT_ENV: &str = "PCRFLE_OUT";
pub const DEFAULT_OUT: &str = "pcrfle-out";

#[derive(Debug, Parser)]
#[command(name = "pcrfle", version, about = "Spectral series regression on ε-graph Laplacian eigenvectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = OUT_ENV, default_value = DEFAULT_OUT)]
    pub out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Override a configuration key, e.g. `--set tuning.mode=rule`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit one data set (from `fit.data` or generated) and write fit.csv.
    Fit,
    /// Monte-Carlo sweep over `n_grid`; writes records.csv and summary.csv.
    Sweep,
    /// Continuum seminorm refinement sequence of a test function.
    Seminorm,
    /// Laplacian spectrum of a generated design plus the growth diagnostic.
    Eigen,
    /// Oracle (K, ε) grid search on one generated data set.
    Gridsearch,
    /// Evaluate and export the named test functions.
    Zoo,
}

/// Load the configuration, write its echo, and run the subcommand.
pub fn run(cli: &Cli) -> Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed = \"{seed}\""));
    }
    let config = Config::load(cli.config.as_deref(), &overrides)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    std::fs::create_dir_all(&cli.out)?;
    config.write_echo(&cli.out)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Fit => fit(&config, out),
        Command::Sweep => sweep(&config, out),
        Command::Seminorm => seminorm(&config, out),
        Command::Eigen => eigen(&config, out),
        Command::Gridsearch => gridsearch(&config, out),
        Command::Zoo => zoo(&config, out),
    }
}

/// Machine-readable error record.
pub fn error_record(err: &Error) -> serde_json::Value {
    json!({
        "error": {
            "kind": err.kind(),
            "exit_code": err.exit_code(),
            "message": err.to_string(),
        }
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// JSON has no infinities or NaN; those travel as strings.
fn num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(crate::fmt_f64(v))
    }
}

fn fit(config: &Config, out: &Path) -> Result<()> {
    let exp = &config.experiment;
    let (samples, truth) = match &config.fit.data {
        Some(path) => {
            let s = SampleSet::read_csv(path)?;
            if s.responses().is_none() {
                return Err(Error::invalid(format!("{} has no y column", path.display())));
            }
            (s, None)
        }
        None => {
            let d = generate(exp, config.fit.n, config.fit.rep)?;
            (d.samples, Some(d.truth))
        }
    };
    let tuned = tuned_fit(exp, &samples, truth.as_deref())?;
    let mse = truth.as_ref().map(|t| tuned.fit.mse(t)).transpose()?;
    let components = tuned.fit.connectivity.map(|c| c.component_count);
    let mut meta = vec![
        ("n".to_string(), samples.n().to_string()),
        ("kernel".to_string(), exp.kernel.name()),
        ("s".to_string(), crate::fmt_f64(exp.s)),
        ("M".to_string(), crate::fmt_f64(exp.rule()?.radius)),
    ];
    if let Some(m) = mse {
        meta.push(("mse".into(), crate::fmt_f64(m)));
    }
    tuned.fit.write_csv(&samples, &meta, out.join("fit.csv"))?;
    write_json(
        &out.join("fit.json"),
        &json!({
            "n": samples.n(),
            "K": tuned.k,
            "epsilon": num(tuned.epsilon),
            "mse": mse.map(num),
            "components": components,
        }),
    )?;
    println!(
        "fit: n = {}, K = {}, epsilon = {:.6}{}",
        samples.n(),
        tuned.k,
        tuned.epsilon,
        mse.map(|m| format!(", mse = {m:.6e}")).unwrap_or_default()
    );
    Ok(())
}

fn sweep(config: &Config, out: &Path) -> Result<()> {
    let exp = &config.experiment;
    let report = run_sweep(exp)?;
    report.write_records(out.join("records.csv"))?;
    report.write_summary(out.join("summary.csv"))?;
    for p in &report.per_n {
        println!("n = {:>6}  mean mse = {:.6e}  ({} ok, {} failed)", p.n, p.mean_mse, p.successes, p.failures);
    }
    println!(
        "slope = {:.4} ± {:.4} (theory {:.4}), {} failed repetitions",
        report.fitted_slope, report.slope_stderr, report.theoretical_slope, report.failures
    );
    if config.curve.n > 0 {
        let (lo, hi) = (exp.design.low[0], exp.design.high[0]);
        let p = config.curve.points;
        let grid: Vec<f64> = (0..p).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / p as f64).collect();
        mean_fit_curve(exp, config.curve.n, &grid)?.write_csv(out.join("curve.csv"))?;
    }
    Ok(())
}

fn seminorm(config: &Config, out: &Path) -> Result<()> {
    let sec = &config.seminorm;
    let f = sec.function.resolve()?;
    let r = continuum_seminorm(&f, sec.s, sec.level)?;
    let mut w = csv::Writer::from_path(out.join("seminorm.csv"))?;
    w.write_record(["level", "cells_per_side", "partial_sum"])?;
    for (level, q) in &r.refinements {
        w.write_record([level.to_string(), (1u64 << level).to_string(), crate::fmt_f64(*q)])?;
    }
    w.flush()?;
    write_json(
        &out.join("seminorm.json"),
        &json!({
            "s": r.s,
            "status": r.status,
            "divergent": r.is_divergent(),
            "value": num(r.value),
            "seminorm": num(r.seminorm()),
            "estimated_error": num(r.estimated_error),
            "quadrature_cells": r.quadrature_cells,
        }),
    )?;
    if r.is_divergent() {
        println!("seminorm at s = {}: divergent (partial sums grow without bound)", r.s);
    } else {
        println!(
            "seminorm at s = {}: {:?}, squared value {:.10e} ± {:.1e}",
            r.s, r.status, r.value, r.estimated_error
        );
    }
    Ok(())
}

fn eigen(config: &Config, out: &Path) -> Result<()> {
    let (n, m) = (config.eigen.n, config.eigen.m);
    let (_, epsilon, eig) = theorem_spectrum(&config.experiment, n, m)?;
    eig.write_csv(out.join("eigen.csv"))?;
    let g = GrowthDiagnostic::from_spectrum(&config.experiment, &eig, epsilon);
    g.write_csv(out.join("growth.csv"))?;
    write_json(
        &out.join("growth.json"),
        &json!({
            "n": g.n,
            "m": g.m,
            "epsilon": num(g.epsilon),
            "scaled_epsilon": num(g.scaled_epsilon),
            "cap_index": num(g.cap_index),
            "exponent": num(g.exponent),
            "exponent_stderr": num(g.exponent_stderr),
            "fit_range": [g.fit_range.0, g.fit_range.1],
            "insufficient_range": g.insufficient_range,
            "post_cap_exponent": num(g.post_cap_exponent),
            "plateau_constant": num(g.plateau_constant),
            "sandwich": [num(g.sandwich.0), num(g.sandwich.1)],
            "violation_fraction": num(g.violation_fraction),
        }),
    )?;
    println!(
        "eigen: n = {n}, m = {m}, epsilon = {epsilon:.6}, lambda_1 = {:.3e}, growth exponent = {:.4}{}",
        eig.values()[0],
        g.exponent,
        if g.insufficient_range { " (insufficient range)" } else { "" }
    );
    Ok(())
}

fn gridsearch(config: &Config, out: &Path) -> Result<()> {
    let exp = &config.experiment;
    let Tuning::Grid { k_grid, eps_grid } = &exp.tuning else {
        return Err(Error::Tuning("gridsearch needs tuning.mode = \"grid\"".into()));
    };
    let d = generate(exp, config.gridsearch.n, config.gridsearch.rep)?;
    let n = d.samples.n();
    let ks: Vec<usize> = k_grid.iter().copied().filter(|&k| k <= n).collect();
    if ks.is_empty() {
        return Err(Error::Tuning(format!("no K in the grid fits n = {n}")));
    }
    let g = crate::estimator::grid_search_with(&d.samples, &ks, eps_grid, &exp.kernel, &d.truth, &exp.solver.options())?;
    let mut w = csv::Writer::from_path(out.join("grid.csv"))?;
    w.write_record(["K", "epsilon", "mse"])?;
    for c in &g.surface {
        w.write_record([c.k.to_string(), crate::fmt_f64(c.epsilon), crate::fmt_f64(c.mse)])?;
    }
    w.flush()?;
    write_json(
        &out.join("gridsearch.json"),
        &json!({
            "n": n,
            "best_K": g.best_k,
            "best_epsilon": num(g.best_epsilon),
            "best_mse": num(g.best_mse),
            "components": g.connectivity.iter().map(|c| c.component_count).collect::<Vec<_>>(),
        }),
    )?;
    println!("gridsearch: n = {n}, best K = {}, epsilon = {}, mse = {:.6e}", g.best_k, g.best_epsilon, g.best_mse);
    Ok(())
}

fn zoo(config: &Config, out: &Path) -> Result<()> {
    std::fs::write(out.join("zoo.toml"), zoo_toml())?;
    let p = config.zoo.points;
    let mut w = csv::Writer::from_path(out.join("zoo.csv"))?;
    w.write_record(["function", "x", "value"])?;
    for name in ZOO_NAMES {
        let f = zoo_function(name)?;
        let d = f.domain();
        if d.dim() != 1 {
            continue;
        }
        let (lo, hi) = (d.low[0], d.high[0]);
        for i in 0..p {
            let x = lo + (hi - lo) * i as f64 / (p - 1) as f64;
            w.write_record([name.to_string(), crate::fmt_f64(x), crate::fmt_f64(f.evaluate(&[x])?)])?;
        }
    }
    w.flush()?;
    println!("zoo: {} functions × {p} points", ZOO_NAMES.len());
    Ok(())
}
