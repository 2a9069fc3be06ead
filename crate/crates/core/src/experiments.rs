//! Monte-Carlo harness: data from `Y = f(X) + noise` on a uniform design,
//! repeated tuned fits, log-log rate fits, the eigenvalue growth diagnostic
//! and averaged fit curves.
//!
//! Every draw comes from a ChaCha stream keyed by `(seed, n, repetition)`,
//! so repetitions run in any order and still reproduce bit for bit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::{
    choose_epsilon, choose_k, empirical_sq_dist, fit_with, grid_search_with, RegressionFit, TuningRule,
};
use crate::geometry::{KernelSpec, SampleSet};
use crate::sobolev::{zoo_function, Domain, TestFunction};
use crate::spectral::{EigenMethod, EigenOptions, EigenSystem};

/// Truth referenced by zoo name or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Named(String),
    Inline(TestFunction),
}

impl TruthSpec {
    pub fn resolve(&self) -> Result<TestFunction> {
        let f = match self {
            TruthSpec::Named(name) => zoo_function(name)?,
            TruthSpec::Inline(f) => f.clone(),
        };
        f.validate()?;
        Ok(f)
    }
}

/// Number of eigenvectors for fixed tuning: a count, or `"n"` for all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedK {
    Count(usize),
    All,
}

impl FixedK {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            FixedK::Count(k) => k,
            FixedK::All => n,
        }
    }
}

impl Serialize for FixedK {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FixedK::Count(k) => s.serialize_u64(*k as u64),
            FixedK::All => s.serialize_str("n"),
        }
    }
}

impl<'de> Deserialize<'de> for FixedK {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(FixedK::Count(k as usize)),
            Raw::Word(w) if w == "n" => Ok(FixedK::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected a count or \"n\", got \"{w}\""))),
        }
    }
}

/// How each repetition picks `(K, ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tuning {
    /// Oracle grid search against the truth.
    Grid {
        #[serde(default = "default_k_grid")]
        k_grid: Vec<usize>,
        #[serde(default = "default_eps_grid")]
        eps_grid: Vec<f64>,
    },
    /// Theorem rule at the configured `s`; ε is rescaled by the design's length scale.
    Rule {
        #[serde(default = "one")]
        m: f64,
        #[serde(default = "one")]
        c0: f64,
        #[serde(default = "one")]
        upper_c0: f64,
    },
    Fixed { k: FixedK, epsilon: f64 },
}

fn one() -> f64 {
    1.0
}

fn default_k_grid() -> Vec<usize> {
    (1..=60).collect()
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3]
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::Grid {
            k_grid: default_k_grid(),
            eps_grid: default_eps_grid(),
        }
    }
}

/// Eigensolver settings exposed to configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default = "auto")]
    pub method: EigenMethod,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
}

fn auto() -> EigenMethod {
    EigenMethod::Auto
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            method: EigenMethod::Auto,
            tolerance: default_tol(),
        }
    }
}

impl SolverSettings {
    pub fn options(&self) -> EigenOptions {
        EigenOptions {
            method: self.method,
            tolerance: self.tolerance,
            ..EigenOptions::default()
        }
    }
}

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_truth")]
    pub truth: TruthSpec,
    /// Uniform design box.
    #[serde(default = "default_design")]
    pub design: Domain,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub tuning: Tuning,
    /// Smoothness order behind the theoretical slope and the tuning rule.
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_seed", with = "seed_format")]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_truth() -> TruthSpec {
    TruthSpec::Named("f2".into())
}

fn default_design() -> Domain {
    Domain::interval(0.0, 5.0)
}

fn default_n_grid() -> Vec<usize> {
    vec![500, 625, 750, 875, 1000]
}

fn default_reps() -> usize {
    200
}

fn default_s() -> f64 {
    0.45
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            truth: default_truth(),
            design: default_design(),
            noise_sd: 1.0,
            n_grid: default_n_grid(),
            repetitions: default_reps(),
            kernel: KernelSpec::default(),
            tuning: Tuning::default(),
            s: default_s(),
            seed: DEFAULT_SEED,
            solver: SolverSettings::default(),
        }
    }
}

/// TOML integers are signed 64-bit; larger seeds travel as strings.
mod seed_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        if *seed <= i64::MAX as u64 {
            s.serialize_i64(*seed as i64)
        } else {
            s.serialize_str(&seed.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) if v >= 0 => Ok(v as u64),
            Raw::Int(v) => Err(serde::de::Error::custom(format!("seed must be non-negative, got {v}"))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        line: None,
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Check every invariant; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(bad("s", format!("s must lie in (0,1), got {}", self.s)));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions", "repetitions must be at least 1"));
        }
        if self.n_grid.is_empty() {
            return Err(bad("n_grid", "n_grid must not be empty"));
        }
        if self.n_grid.iter().any(|&n| n < 2) || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("n_grid", "n_grid entries must be >= 2 and strictly increasing"));
        }
        if *self.n_grid.last().unwrap() >= 1 << 32 || self.repetitions >= 1 << 31 {
            return Err(bad("n_grid", "sample sizes must stay below 2^32 and repetitions below 2^31"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(bad("noise_sd", format!("noise_sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        self.design.validate().map_err(|e| bad("design", e.to_string()))?;
        let truth = self.truth.resolve().map_err(|e| bad("truth", e.to_string()))?;
        let dom = truth.domain();
        if dom.dim() != self.design.dim() {
            return Err(bad(
                "truth",
                format!("truth lives in dimension {} but the design in {}", dom.dim(), self.design.dim()),
            ));
        }
        let inside = (0..dom.dim()).all(|k| dom.low[k] <= self.design.low[k] && self.design.high[k] <= dom.high[k]);
        if !inside {
            return Err(bad("design", "design box must lie inside the truth's domain"));
        }
        self.kernel.validate().map_err(|e| bad("kernel", e.to_string()))?;
        if !(self.solver.tolerance > 0.0) {
            return Err(bad("solver.tolerance", "tolerance must be positive"));
        }
        match &self.tuning {
            Tuning::Grid { k_grid, eps_grid } => {
                if k_grid.is_empty() {
                    return Err(bad("tuning.k_grid", "k_grid must not be empty"));
                }
                if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                    return Err(bad("tuning.eps_grid", "eps_grid must hold positive bandwidths"));
                }
            }
            Tuning::Rule { .. } => {
                self.rule().map_err(|e| bad("tuning", e.to_string()))?;
            }
            Tuning::Fixed { k, epsilon } => {
                if !(*epsilon > 0.0 && epsilon.is_finite()) {
                    return Err(bad("tuning.epsilon", "epsilon must be positive"));
                }
                if let FixedK::Count(k) = k {
                    if *k > self.n_grid[0] {
                        return Err(bad("tuning.k", format!("K = {k} exceeds the smallest n = {}", self.n_grid[0])));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.design.dim()
    }

    /// `−2s/(2s+d)`.
    pub fn theoretical_slope(&self) -> f64 {
        -2.0 * self.s / (2.0 * self.s + self.dim() as f64)
    }

    /// Tuning rule from the `rule` mode, or unit constants otherwise.
    pub fn rule(&self) -> Result<TuningRule> {
        let (m, c0, upper) = match self.tuning {
            Tuning::Rule { m, c0, upper_c0 } => (m, c0, upper_c0),
            _ => (1.0, 1.0, 1.0),
        };
        TuningRule::new(self.s, m, self.dim())?.with_window(c0, upper)
    }

    /// Theorem-window ε at sample size `n`, in design units.
    pub fn theorem_epsilon(&self, n: usize) -> Result<(usize, f64)> {
        let rule = self.rule()?;
        let k = choose_k(&rule, n);
        Ok((k, choose_epsilon(&rule, n, k)? * self.design.length_scale()))
    }
}

/// A generated data set together with the noiseless truth at the design.
#[derive(Debug, Clone)]
pub struct Draw {
    pub samples: SampleSet,
    pub truth: Vec<f64>,
}

/// Draw `n` points for repetition `rep`.
pub fn generate(config: &ExperimentConfig, n: usize, rep: usize) -> Result<Draw> {
    let truth = config.truth.resolve()?;
    draw(config, &truth, n, rep, 0)
}

fn draw(config: &ExperimentConfig, truth: &TestFunction, n: usize, rep: usize, attempt: u64) -> Result<Draw> {
    let d = config.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(((n as u64) << 32) | (attempt << 31) | rep as u64);
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        for k in 0..d {
            let (lo, hi) = (config.design.low[k], config.design.high[k]);
            let u: f64 = rng.random();
            coords.push((lo + (hi - lo) * u).min(hi));
        }
    }
    let values: Vec<f64> = coords.chunks(d).map(|x| truth.eval_unchecked(x)).collect();
    let responses = values
        .iter()
        .map(|&f| {
            let z: f64 = rng.sample(StandardNormal);
            if config.noise_sd == 0.0 {
                f
            } else {
                f + config.noise_sd * z
            }
        })
        .collect();
    Ok(Draw {
        samples: SampleSet::from_flat(coords, d, Some(responses))?,
        truth: values,
    })
}

/// One repetition's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub n: usize,
    pub rep: usize,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    /// `‖f̂ − f‖_n²`, NaN if the repetition failed.
    pub mse: f64,
    pub components: Option<usize>,
    pub error: Option<String>,
}

impl Record {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

struct Tuned {
    k: usize,
    epsilon: f64,
    mse: f64,
    components: usize,
    fitted: Option<Vec<f64>>,
}

fn tune_and_fit(config: &ExperimentConfig, d: &Draw, want_fit: bool) -> Result<Tuned> {
    let n = d.samples.n();
    let opts = config.solver.options();
    let (k, epsilon) = match &config.tuning {
        Tuning::Grid { k_grid, eps_grid } => {
            let ks: Vec<usize> = k_grid.iter().copied().filter(|&k| k <= n).collect();
            if ks.is_empty() {
                return Err(Error::Tuning(format!("no K in the grid fits n = {n}")));
            }
            let g = grid_search_with(&d.samples, &ks, eps_grid, &config.kernel, &d.truth, &opts)?;
            if !want_fit {
                let slot = eps_grid.iter().position(|&e| e == g.best_epsilon).unwrap();
                return Ok(Tuned {
                    k: g.best_k,
                    epsilon: g.best_epsilon,
                    mse: g.best_mse,
                    components: g.connectivity[slot].component_count,
                    fitted: None,
                });
            }
            (g.best_k, g.best_epsilon)
        }
        Tuning::Rule { .. } => config.theorem_epsilon(n)?,
        Tuning::Fixed { k, epsilon } => {
            let k = k.resolve(n);
            if k > n {
                return Err(Error::invalid(format!("K = {k} exceeds n = {n}")));
            }
            (k, *epsilon)
        }
    };
    let fit = fit_with(&d.samples, k, epsilon, &config.kernel, &opts)?;
    Ok(Tuned {
        k,
        epsilon,
        mse: empirical_sq_dist(&fit.fitted, &d.truth),
        components: fit.connectivity.map_or(1, |c| c.component_count),
        fitted: Some(fit.fitted),
    })
}

/// A fit whose `(K, ε)` came from the configured tuning mode.
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub k: usize,
    pub epsilon: f64,
    pub fit: RegressionFit,
}

/// Tune and fit one sample set. Grid tuning needs the truth at the design.
pub fn tuned_fit(config: &ExperimentConfig, samples: &SampleSet, truth: Option<&[f64]>) -> Result<TunedFit> {
    let n = samples.n();
    let opts = config.solver.options();
    let (k, epsilon) = match &config.tuning {
        Tuning::Grid { k_grid, eps_grid } => {
            let truth = truth.ok_or_else(|| {
                Error::Tuning("grid tuning needs the truth; use rule or fixed tuning for external data".into())
            })?;
            let ks: Vec<usize> = k_grid.iter().copied().filter(|&k| k <= n).collect();
            if ks.is_empty() {
                return Err(Error::Tuning(format!("no K in the grid fits n = {n}")));
            }
            let g = grid_search_with(samples, &ks, eps_grid, &config.kernel, truth, &opts)?;
            (g.best_k, g.best_epsilon)
        }
        Tuning::Rule { .. } => config.theorem_epsilon(n)?,
        Tuning::Fixed { k, epsilon } => (k.resolve(n), *epsilon),
    };
    let fit = fit_with(samples, k, epsilon, &config.kernel, &opts)?;
    Ok(TunedFit { k, epsilon, fit })
}

/// Run one repetition, re-drawing once if the first attempt fails.
fn attempt_twice(
    config: &ExperimentConfig,
    truth: &TestFunction,
    n: usize,
    rep: usize,
    want_fit: bool,
) -> std::result::Result<(Draw, Tuned), String> {
    let mut last = String::new();
    for attempt in 0..2 {
        let result = draw(config, truth, n, rep, attempt).and_then(|d| tune_and_fit(config, &d, want_fit).map(|t| (d, t)));
        match result {
            Ok(v) => return Ok(v),
            Err(e) => {
                log::warn!("n = {n}, rep = {rep}, attempt {attempt}: {e}");
                last = e.to_string();
            }
        }
    }
    Err(last)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub n: usize,
    /// Mean over successful repetitions.
    pub mean_mse: f64,
    pub successes: usize,
    pub failures: usize,
    /// Repetitions whose selected graph had more than one component.
    pub disconnected: usize,
    pub in_slope_fit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<Record>,
    pub per_n: Vec<SizeSummary>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub theoretical_slope: f64,
    pub failures: usize,
}

/// Fraction of disconnected repetitions above which the smallest `n` leaves the slope fit.
pub const DISCONNECTED_LIMIT: f64 = 0.10;

pub fn run_sweep(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let truth = config.truth.resolve()?;
    let tasks: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.repetitions).map(move |r| (n, r)))
        .collect();
    let records: Vec<Record> = tasks
        .par_iter()
        .map(|&(n, rep)| match attempt_twice(config, &truth, n, rep, false) {
            Ok((_, t)) => Record {
                n,
                rep,
                k: Some(t.k),
                epsilon: Some(t.epsilon),
                mse: t.mse,
                components: Some(t.components),
                error: None,
            },
            Err(e) => Record {
                n,
                rep,
                k: None,
                epsilon: None,
                mse: f64::NAN,
                components: None,
                error: Some(e),
            },
        })
        .collect();

    let mut per_n = Vec::with_capacity(config.n_grid.len());
    for &n in &config.n_grid {
        let rows: Vec<&Record> = records.iter().filter(|r| r.n == n).collect();
        let ok: Vec<f64> = rows.iter().filter(|r| r.ok()).map(|r| r.mse).collect();
        let disconnected = rows.iter().filter(|r| r.components.is_some_and(|c| c > 1)).count();
        let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
        per_n.push(SizeSummary {
            n,
            mean_mse: mean,
            successes: ok.len(),
            failures: rows.len() - ok.len(),
            disconnected,
            in_slope_fit: mean.is_finite() && mean > 0.0,
        });
    }
    if let Some(first) = per_n.first_mut() {
        if first.disconnected as f64 > DISCONNECTED_LIMIT * config.repetitions as f64 {
            log::warn!(
                "n = {} was disconnected in {} of {} repetitions; excluded from the slope fit",
                first.n,
                first.disconnected,
                config.repetitions
            );
            first.in_slope_fit = false;
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_n
        .iter()
        .filter(|p| p.in_slope_fit)
        .map(|p| ((p.n as f64).ln(), p.mean_mse.ln()))
        .unzip();
    let (slope, stderr) = ols_slope(&xs, &ys);
    let failures = records.iter().filter(|r| !r.ok()).count();
    Ok(ExperimentReport {
        records,
        per_n,
        fitted_slope: slope,
        slope_stderr: stderr,
        theoretical_slope: config.theoretical_slope(),
        failures,
    })
}

/// Least-squares slope and its standard error (NaN below three points).
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len();
    if k < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if k < 3 {
        return (slope, f64::NAN);
    }
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (slope, (ssr / (k - 2) as f64 / sxx).sqrt())
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(crate::fmt_f64).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ExperimentReport {
    /// `n, rep, K, epsilon, mse, components, error`.
    pub fn write_records(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["n", "rep", "K", "epsilon", "mse", "components", "error"])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.rep.to_string(),
                opt_usize(r.k),
                opt_f64(r.epsilon),
                crate::fmt_f64(r.mse),
                opt_usize(r.components),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per `n`; the slope columns repeat on every row.
    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "n",
            "mean_mse",
            "fitted_slope",
            "theoretical_slope",
            "slope_stderr",
            "successes",
            "failures",
            "disconnected",
            "in_slope_fit",
        ])?;
        for p in &self.per_n {
            w.write_record([
                p.n.to_string(),
                crate::fmt_f64(p.mean_mse),
                crate::fmt_f64(self.fitted_slope),
                crate::fmt_f64(self.theoretical_slope),
                crate::fmt_f64(self.slope_stderr),
                p.successes.to_string(),
                p.failures.to_string(),
                p.disconnected.to_string(),
                p.in_slope_fit.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Laplacian spectrum against the `k^{2/d} ∧ ε^{−2}` growth law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthDiagnostic {
    pub n: usize,
    pub dim: usize,
    pub m: usize,
    /// Bandwidth in design units.
    pub epsilon: f64,
    /// `ε` divided by the design's length scale.
    pub scaled_epsilon: f64,
    /// First index with `k^{2/d} ≥ scaled_epsilon^{−2}`.
    pub cap_index: f64,
    /// `λ_1 .. λ_m`.
    pub values: Vec<f64>,
    /// Fitted exponent of `λ_k ∝ k^p` over `2 ≤ k < cap_index` (NaN if too few points).
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// Indices `(first, last)` used in the exponent fit.
    pub fit_range: (usize, usize),
    pub insufficient_range: bool,
    /// Exponent over the indices past the cap (NaN if too few).
    pub post_cap_exponent: f64,
    /// `max_k λ_k · scaled_epsilon²`.
    pub plateau_constant: f64,
    /// Sandwich constants `(C_lo, C_hi)` around the median ratio `λ_k / (k^{2/d} ∧ ε^{−2})`.
    pub sandwich: (f64, f64),
    /// Fraction of `k ≥ 2` outside the sandwich.
    pub violation_fraction: f64,
}

/// Half-width (as a factor) of the fixed-constant sandwich.
pub const SANDWICH_FACTOR: f64 = 4.0;
const MIN_FIT_POINTS: usize = 3;

/// Spectrum of one generated design (repetition 0) at the theorem bandwidth.
pub fn eigenvalue_growth_diagnostic(config: &ExperimentConfig, n: usize, m: usize) -> Result<GrowthDiagnostic> {
    let (_, epsilon, eig) = theorem_spectrum(config, n, m)?;
    Ok(GrowthDiagnostic::from_spectrum(config, &eig, epsilon))
}

/// The first `m` eigenpairs over repetition 0's design at the theorem bandwidth.
pub fn theorem_spectrum(config: &ExperimentConfig, n: usize, m: usize) -> Result<(Draw, f64, EigenSystem)> {
    config.validate()?;
    if m == 0 || m > n {
        return Err(Error::invalid(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let d = generate(config, n, 0)?;
    let (_, epsilon) = config.theorem_epsilon(n)?;
    let (eig, _) = crate::estimator::design_eigensystem(&d.samples, epsilon, &config.kernel, m, &config.solver.options())?;
    Ok((d, epsilon, eig))
}

fn growth_from_values(values: Vec<f64>, n: usize, epsilon: f64, scaled: f64, dim: usize) -> GrowthDiagnostic {
    let m = values.len();
    let dimf = dim as f64;
    let cap_index = scaled.powf(-dimf);
    let law = |k: usize| (k as f64).powf(2.0 / dimf).min(scaled.powi(-2));

    let usable = |k: usize| values[k - 1] > 0.0;
    let pre: Vec<usize> = (2..=m).filter(|&k| (k as f64) < cap_index && usable(k)).collect();
    let post: Vec<usize> = (2..=m).filter(|&k| (k as f64) >= cap_index && usable(k)).collect();
    let loglog = |ks: &[usize]| {
        let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
        let ys: Vec<f64> = ks.iter().map(|&k| values[k - 1].ln()).collect();
        ols_slope(&xs, &ys)
    };
    let insufficient = pre.len() < MIN_FIT_POINTS;
    let (exponent, stderr) = if insufficient { (f64::NAN, f64::NAN) } else { loglog(&pre) };
    let post_exp = if post.len() < MIN_FIT_POINTS { f64::NAN } else { loglog(&post).0 };

    let mut ratios: Vec<f64> = (2..=m).map(|k| values[k - 1] / law(k)).collect();
    let (lo, hi, violations) = if ratios.is_empty() {
        (f64::NAN, f64::NAN, 0.0)
    } else {
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let (lo, hi) = (median / SANDWICH_FACTOR, median * SANDWICH_FACTOR);
        ratios.retain(|r| !(*r >= lo && *r <= hi));
        (lo, hi, ratios.len() as f64 / (m - 1) as f64)
    };
    let max = values.iter().cloned().fold(0.0, f64::max);
    GrowthDiagnostic {
        n,
        dim,
        m,
        epsilon,
        scaled_epsilon: scaled,
        cap_index,
        exponent,
        exponent_stderr: stderr,
        fit_range: (pre.first().copied().unwrap_or(0), pre.last().copied().unwrap_or(0)),
        insufficient_range: insufficient,
        post_cap_exponent: post_exp,
        plateau_constant: max * scaled * scaled,
        sandwich: (lo, hi),
        violation_fraction: violations,
        values,
    }
}

impl GrowthDiagnostic {
    pub fn from_spectrum(config: &ExperimentConfig, eig: &EigenSystem, epsilon: f64) -> Self {
        let values: Vec<f64> = (0..eig.m()).map(|k| eig.clamped_value(k)).collect();
        growth_from_values(values, eig.n(), epsilon, epsilon / config.design.length_scale(), config.dim())
    }

    /// `k^{2/d} ∧ ε^{−2}` in scaled units.
    pub fn growth_law(&self, k: usize) -> f64 {
        (k as f64).powf(2.0 / self.dim as f64).min(self.scaled_epsilon.powi(-2))
    }

    /// `k, eigenvalue, law, in_fit`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "eigenvalue", "growth_law", "in_fit"])?;
        for (i, &v) in self.values.iter().enumerate() {
            let k = i + 1;
            let law = self.growth_law(k);
            let in_fit = k >= self.fit_range.0 && k <= self.fit_range.1 && !self.insufficient_range;
            w.write_record([k.to_string(), crate::fmt_f64(v), crate::fmt_f64(law), in_fit.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fitted values averaged over repetitions, bucketed onto an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FitCurve {
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    /// `None` marks a bucket that no design point fell into.
    pub mean_fit: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub failed_repetitions: usize,
}

/// Each design point joins the bucket of its nearest grid point; buckets
/// average the fitted values of all their points over all repetitions.
pub fn mean_fit_curve(config: &ExperimentConfig, n: usize, grid: &[f64]) -> Result<FitCurve> {
    config.validate()?;
    if config.dim() != 1 {
        return Err(Error::invalid("fit curves need a one-dimensional design"));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("evaluation grid must be non-empty and strictly increasing"));
    }
    let truth = config.truth.resolve()?;
    let truth_at: Vec<f64> = grid.iter().map(|&x| truth.evaluate(&[x])).collect::<Result<_>>()?;
    let per_rep: Vec<Option<(Vec<f64>, Vec<usize>)>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (d, t) = attempt_twice(config, &truth, n, rep, true).ok()?;
            let fitted = t.fitted.expect("fit requested");
            let mut sums = vec![0.0; grid.len()];
            let mut counts = vec![0usize; grid.len()];
            for (i, &f) in fitted.iter().enumerate() {
                let b = nearest(grid, d.samples.point(i)[0]);
                sums[b] += f;
                counts[b] += 1;
            }
            Some((sums, counts))
        })
        .collect();
    let mut sums = vec![0.0; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    let mut failed = 0;
    for r in per_rep {
        match r {
            Some((s, c)) => {
                for b in 0..grid.len() {
                    sums[b] += s[b];
                    counts[b] += c[b];
                }
            }
            None => failed += 1,
        }
    }
    let mean_fit = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(FitCurve {
        x: grid.to_vec(),
        truth: truth_at,
        mean_fit,
        counts,
        failed_repetitions: failed,
    })
}

/// Index of the grid point nearest to `x` (ties go left).
fn nearest(grid: &[f64], x: f64) -> usize {
    let right = grid.partition_point(|&g| g < x);
    if right == 0 {
        0
    } else if right == grid.len() {
        grid.len() - 1
    } else if x - grid[right - 1] <= grid[right] - x {
        right - 1
    } else {
        right
    }
}

impl FitCurve {
    /// `x, truth, mean_fit, count, missing`; missing buckets leave `mean_fit` empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "truth", "mean_fit", "count", "missing"])?;
        for i in 0..self.x.len() {
            w.write_record([
                crate::fmt_f64(self.x[i]),
                crate::fmt_f64(self.truth[i]),
                opt_f64(self.mean_fit[i]),
                self.counts[i].to_string(),
                self.mean_fit[i].is_none().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
