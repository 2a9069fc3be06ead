//! The projection estimator `f̂ = V_K V_Kᵀ Y` on Laplacian eigenvectors,
//! its theorem-driven tuning, and oracle grid search.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_graph, Connectivity, KernelSpec, SampleSet};
use crate::spectral::{eigensolve_with, laplacian, EigenOptions, EigenSystem};

/// Smoothness, radius and window constants that drive `K` and `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRule {
    /// Sobolev order, in (0, 1).
    pub s: f64,
    /// Sobolev ball radius M.
    #[serde(rename = "m")]
    pub radius: f64,
    pub dim: usize,
    /// Lower window constant: ε ≥ c0 (log n / n)^{1/d}.
    #[serde(default = "one")]
    pub c0: f64,
    /// Upper window constant: ε ≤ C0 K^{−1/d}.
    #[serde(default = "one", rename = "upper_c0")]
    pub upper_c0: f64,
}

fn one() -> f64 {
    1.0
}

impl TuningRule {
    pub fn new(s: f64, radius: f64, dim: usize) -> Result<Self> {
        let rule = TuningRule {
            s,
            radius,
            dim,
            c0: 1.0,
            upper_c0: 1.0,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn with_window(mut self, c0: f64, upper_c0: f64) -> Result<Self> {
        self.c0 = c0;
        self.upper_c0 = upper_c0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::invalid(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("M must be positive, got {}", self.radius)));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(self.c0 > 0.0 && self.upper_c0 > 0.0) {
            return Err(Error::invalid("window constants c0 and C0 must be positive"));
        }
        Ok(())
    }

    /// Predicted error exponent `−2s/(2s+d)`.
    pub fn rate_exponent(&self) -> f64 {
        -2.0 * self.s / (2.0 * self.s + self.dim as f64)
    }
}

/// `K = min{ ⌊(M²n)^{d/(2s+d)}⌋ ∨ 1, n }`.
pub fn choose_k(rule: &TuningRule, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let d = rule.dim as f64;
    let base = rule.radius * rule.radius * n as f64;
    let x = base.powf(d / (2.0 * rule.s + d));
    // exact integer powers can land a hair below the integer
    let nearest = x.round();
    let floor = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.floor() };
    if !floor.is_finite() || floor >= n as f64 {
        return n;
    }
    (floor as usize).clamp(1, n)
}

/// Geometric midpoint of `[c0 (log n / n)^{1/d}, C0 K^{−1/d}]`.
pub fn choose_epsilon(rule: &TuningRule, n: usize, k: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Tuning(format!("need n >= 2 for the bandwidth window, got {n}")));
    }
    let (lo, hi) = epsilon_window(rule, n, k.max(1));
    if lo > hi {
        return Err(Error::Tuning(format!(
            "empty bandwidth window [{lo:.6e}, {hi:.6e}] at n = {n}, K = {k}; lower c0 or raise C0"
        )));
    }
    Ok((lo * hi).sqrt())
}

/// Bounds of the admissible bandwidth window.
pub fn epsilon_window(rule: &TuningRule, n: usize, k: usize) -> (f64, f64) {
    let d = rule.dim as f64;
    let n = n as f64;
    let lo = rule.c0 * (n.ln() / n).powf(1.0 / d);
    let hi = rule.upper_c0 * (k as f64).powf(-1.0 / d);
    (lo, hi)
}

/// In-sample squared distance `‖a − b‖_n²`.
pub fn empirical_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `‖a‖_n²`.
pub fn empirical_sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone)]
pub struct RegressionFit {
    pub fitted: Vec<f64>,
    pub k: usize,
    pub epsilon: f64,
    /// `⟨Y, v_k⟩_n` for `k < K`.
    pub projections: Vec<f64>,
    /// `None` only when `K = 0`.
    pub eig: Option<Arc<EigenSystem>>,
    pub connectivity: Option<Connectivity>,
}

impl RegressionFit {
    pub fn mse(&self, truth: &[f64]) -> Result<f64> {
        check_len(truth, self.fitted.len(), "truth")?;
        Ok(empirical_sq_dist(&self.fitted, truth))
    }

    /// Write one row per sample (`index, x.., y, fitted`), preceded by `# key=value` lines.
    pub fn write_csv(&self, samples: &SampleSet, meta: &[(String, String)], path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# K={}", self.k)?;
        writeln!(out, "# epsilon={}", crate::fmt_f64(self.epsilon))?;
        for (k, v) in meta {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((1..=samples.dim()).map(|k| format!("x{k}")));
        header.push("y".into());
        header.push("fitted".into());
        w.write_record(&header)?;
        let y = samples.responses();
        for i in 0..samples.n() {
            let mut row = vec![i.to_string()];
            row.extend(samples.point(i).iter().map(|&v| crate::fmt_f64(v)));
            row.push(y.map(|y| crate::fmt_f64(y[i])).unwrap_or_default());
            row.push(crate::fmt_f64(self.fitted[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_len(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::invalid(format!("{what} has length {} but n = {n}", v.len())));
    }
    Ok(())
}

/// Eigensystem of the ε-graph Laplacian over the design, first `m` pairs.
pub fn design_eigensystem(
    samples: &SampleSet,
    epsilon: f64,
    kernel: &KernelSpec,
    m: usize,
    opts: &EigenOptions,
) -> Result<(EigenSystem, Connectivity)> {
    let graph = build_graph(samples, epsilon, kernel)?;
    let conn = graph.connectivity();
    if !conn.connected {
        log::debug!("ε-graph at ε = {epsilon:.4e} has {} components", conn.component_count);
    }
    let op = laplacian(&graph, samples.dim())?;
    Ok((eigensolve_with(&op, m, opts)?, conn))
}

/// Project responses onto the first `K` eigenvectors of the ε-graph Laplacian.
pub fn fit(samples: &SampleSet, k: usize, epsilon: f64, kernel: &KernelSpec) -> Result<RegressionFit> {
    fit_with(samples, k, epsilon, kernel, &EigenOptions::default())
}

pub fn fit_with(
    samples: &SampleSet,
    k: usize,
    epsilon: f64,
    kernel: &KernelSpec,
    opts: &EigenOptions,
) -> Result<RegressionFit> {
    let y = samples
        .responses()
        .ok_or_else(|| Error::invalid("fit needs responses"))?;
    let n = samples.n();
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds n = {n}")));
    }
    if k == 0 {
        // still validate the graph inputs
        let graph = build_graph(samples, epsilon, kernel)?;
        return Ok(RegressionFit {
            fitted: vec![0.0; n],
            k: 0,
            epsilon,
            projections: Vec::new(),
            eig: None,
            connectivity: Some(graph.connectivity()),
        });
    }
    let (eig, conn) = design_eigensystem(samples, epsilon, kernel, k, opts)?;
    if !conn.connected {
        log::warn!(
            "ε-graph at ε = {epsilon:.4e} has {} components; each contributes a constant eigenvector",
            conn.component_count
        );
    }
    let mut out = fit_on(Arc::new(eig), y, k, epsilon)?;
    out.connectivity = Some(conn);
    Ok(out)
}

/// Fit against a precomputed eigensystem.
pub fn fit_on(eig: Arc<EigenSystem>, y: &[f64], k: usize, epsilon: f64) -> Result<RegressionFit> {
    check_len(y, eig.n(), "responses")?;
    let projections = eig.coefficients(y, k)?;
    let fitted = eig.synthesize(&projections);
    Ok(RegressionFit {
        fitted,
        k,
        epsilon,
        projections,
        eig: Some(eig),
        connectivity: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub k: usize,
    pub epsilon: f64,
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_k: usize,
    pub best_epsilon: f64,
    pub best_mse: f64,
    /// Every evaluated cell, ordered by ε then K as given in the grids.
    pub surface: Vec<GridCell>,
    /// Connectivity of the graph at each ε in the grid.
    pub connectivity: Vec<Connectivity>,
}

/// Oracle tuning: in-sample MSE against `truth` over every `(K, ε)` pair.
///
/// One eigensolve per ε serves all `K`. Ties go to smaller `K`, then smaller `ε`.
pub fn grid_search(
    samples: &SampleSet,
    k_grid: &[usize],
    eps_grid: &[f64],
    kernel: &KernelSpec,
    truth: &[f64],
) -> Result<GridSearchResult> {
    grid_search_with(samples, k_grid, eps_grid, kernel, truth, &EigenOptions::default())
}

pub fn grid_search_with(
    samples: &SampleSet,
    k_grid: &[usize],
    eps_grid: &[f64],
    kernel: &KernelSpec,
    truth: &[f64],
    opts: &EigenOptions,
) -> Result<GridSearchResult> {
    let n = samples.n();
    let y = samples
        .responses()
        .ok_or_else(|| Error::invalid("grid search needs responses"))?;
    check_len(truth, n, "truth")?;
    if k_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::invalid("grid search needs non-empty K and ε grids"));
    }
    let k_max = *k_grid.iter().max().unwrap();
    if k_max > n {
        return Err(Error::invalid(format!("K grid value {k_max} exceeds n = {n}")));
    }
    let mut sorted_k: Vec<usize> = k_grid.to_vec();
    sorted_k.sort_unstable();
    sorted_k.dedup();

    let mut surface = Vec::with_capacity(k_grid.len() * eps_grid.len());
    let mut connectivity = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let mut mse_at = vec![0.0; sorted_k.len()];
        if k_max == 0 {
            let g = build_graph(samples, eps, kernel)?;
            connectivity.push(g.connectivity());
            mse_at[0] = empirical_sq_norm(truth);
        } else {
            let (eig, conn) = design_eigensystem(samples, eps, kernel, k_max, opts)?;
            connectivity.push(conn);
            let coef = eig.coefficients(y, k_max)?;
            let mut fitted = vec![0.0; n];
            let mut done = 0;
            for (slot, &k) in sorted_k.iter().enumerate() {
                while done < k {
                    let c = coef[done];
                    for (f, v) in fitted.iter_mut().zip(eig.vector(done).iter()) {
                        *f += c * v;
                    }
                    done += 1;
                }
                mse_at[slot] = empirical_sq_dist(&fitted, truth);
            }
        }
        for &k in k_grid {
            let slot = sorted_k.binary_search(&k).unwrap();
            surface.push(GridCell {
                k,
                epsilon: eps,
                mse: mse_at[slot],
            });
        }
    }

    let best = surface
        .iter()
        .copied()
        .reduce(|best, cell| {
            let better = cell.mse < best.mse
                || (cell.mse == best.mse
                    && (cell.k < best.k || (cell.k == best.k && cell.epsilon < best.epsilon)));
            if better {
                cell
            } else {
                best
            }
        })
        .unwrap();
    Ok(GridSearchResult {
        best_k: best.k,
        best_epsilon: best.epsilon,
        best_mse: best.mse,
        surface,
        connectivity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVariance {
    /// `‖f − Π_K f‖_n²`, equal to `Σ_{k>K} ⟨f, v_k⟩_n²` on a complete system.
    pub bias_sq: f64,
    /// `‖f̂ − Π_K f‖_n²`, the projected noise.
    pub variance_proxy: f64,
}

pub fn bias_variance_decompose(fit: &RegressionFit, truth: &[f64]) -> Result<BiasVariance> {
    let n = fit.fitted.len();
    check_len(truth, n, "truth")?;
    let projected = match &fit.eig {
        Some(eig) => eig.project(truth, fit.k)?,
        None => vec![0.0; n],
    };
    Ok(BiasVariance {
        bias_sq: empirical_sq_dist(&projected, truth),
        variance_proxy: empirical_sq_dist(&fit.fitted, &projected),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_k_examples() {
        let rule = TuningRule::new(0.5, 1.0, 1).unwrap();
        assert_eq!(choose_k(&rule, 1000), 31);
        let tiny = TuningRule::new(0.5, 0.01, 1).unwrap();
        assert_eq!(choose_k(&tiny, 100), 1);
        // M above n^{s/d}: K saturates at n
        let n = 400usize;
        let big = TuningRule::new(0.3, (n as f64).powf(0.3) + 1.0, 1).unwrap();
        assert_eq!(choose_k(&big, n), n);
        // exact integer power: 1024^{1/2} = 32
        assert_eq!(choose_k(&rule, 1024), 32);
    }

    #[test]
    fn choose_epsilon_examples() {
        let rule = TuningRule::new(0.5, 1.0, 1).unwrap();
        let eps = choose_epsilon(&rule, 1000, 31).unwrap();
        let lo = (1000f64).ln() / 1000.0;
        let hi: f64 = 1.0 / 31.0;
        assert!((lo - 0.00691).abs() < 1e-5 && (hi - 0.03226).abs() < 1e-5);
        assert!((eps - 0.01493).abs() < 1e-5);
        assert!(eps >= lo && eps <= hi);

        let bad = rule.with_window(1e3, 1e-3).unwrap();
        assert!(matches!(choose_epsilon(&bad, 1000, 31), Err(Error::Tuning(_))));

        let (_, hi) = epsilon_window(&rule.with_window(1.0, 2.5).unwrap(), 1000, 1);
        assert_eq!(hi, 2.5);
    }

    #[test]
    fn rule_validation() {
        assert!(TuningRule::new(1.5, 1.0, 1).is_err());
        assert!(TuningRule::new(0.5, 0.0, 1).is_err());
        assert!(TuningRule::new(0.5, 1.0, 0).is_err());
    }

    #[test]
    fn k1_fit_is_the_mean() {
        let s = SampleSet::from_line(&[0.0, 0.1, 0.2], Some(vec![2.0, 4.0, 6.0])).unwrap();
        let f = fit(&s, 1, 0.5, &KernelSpec::Indicator).unwrap();
        for v in &f.fitted {
            assert!((v - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k0_and_kn() {
        let s = SampleSet::from_line(&[0.0, 0.1, 0.25, 0.3], Some(vec![1.0, -2.0, 0.5, 3.0])).unwrap();
        let f = fit(&s, 0, 0.2, &KernelSpec::Indicator).unwrap();
        assert!(f.fitted.iter().all(|&v| v == 0.0));
        let f = fit(&s, 4, 0.2, &KernelSpec::Indicator).unwrap();
        for (a, b) in f.fitted.iter().zip(s.responses().unwrap()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(fit(&s, 5, 0.2, &KernelSpec::Indicator).is_err());
    }

    #[test]
    fn grid_single_cell_and_ties() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let truth: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let s = SampleSet::from_line(&xs, Some(truth.clone())).unwrap();
        let g = grid_search(&s, &[3], &[0.2], &KernelSpec::Indicator, &truth).unwrap();
        assert_eq!((g.best_k, g.best_epsilon), (3, 0.2));
        assert_eq!(g.surface.len(), 1);

        // noiseless: K = n interpolates, MSE 0 at every ε; the smaller ε wins the tie
        let g = grid_search(&s, &[1, 5, 20], &[0.3, 0.2], &KernelSpec::Indicator, &truth).unwrap();
        assert_eq!(g.best_k, 20);
        assert_eq!(g.best_epsilon, 0.2);
        assert!(g.best_mse < 1e-20);
    }

    #[test]
    fn bias_of_constant_and_second_vector() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin() + i as f64 * 0.03).collect();
        let s = SampleSet::from_line(&xs, Some(vec![0.0; 30])).unwrap();
        let f = fit(&s, 3, 0.4, &KernelSpec::Triangular).unwrap();
        assert!(f.connectivity.unwrap().connected);
        let bv = bias_variance_decompose(&f, &[1.5; 30]).unwrap();
        assert!(bv.bias_sq < 1e-24);

        let eig = f.eig.clone().unwrap();
        let v2: Vec<f64> = eig.vector(1).iter().copied().collect();
        let f1 = fit_on(eig, &v2, 1, 0.4).unwrap();
        let bv = bias_variance_decompose(&f1, &v2).unwrap();
        assert!((bv.bias_sq - 1.0).abs() < 1e-10);
    }
}
