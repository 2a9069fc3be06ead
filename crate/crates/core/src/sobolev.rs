//! Fractional Sobolev analytics: a zoo of nonsmooth test functions, the
//! continuum seminorm `∬ |u(x)−u(y)|²/|x−y|^{d+2s}` by singular quadrature,
//! its graph counterpart `Σ λ_k^s ⟨u, v_k⟩_n²`, and the constant `c_{d,s}`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gamma;
use crate::spectral::EigenSystem;

/// Axis-aligned box `[low, high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Domain {
    pub fn interval(low: f64, high: f64) -> Self {
        Domain {
            low: vec![low],
            high: vec![high],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.low).zip(&self.high).all(|((v, lo), hi)| v >= lo && v <= hi)
    }

    /// `(∏ (high − low))^{1/d}`.
    pub fn length_scale(&self) -> f64 {
        let vol: f64 = self.low.iter().zip(&self.high).map(|(a, b)| b - a).product();
        vol.powf(1.0 / self.dim() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.is_empty() || self.low.len() != self.high.len() {
            return Err(Error::invalid("domain needs matching, non-empty low and high"));
        }
        for (a, b) in self.low.iter().zip(&self.high) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::invalid(format!("empty or unbounded domain side [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

fn symmetric_unit() -> Domain {
    Domain::interval(-1.0, 1.0)
}

/// A closed-form test function. Piecewise families use half-open pieces
/// `(b_i, b_{i+1}]`; the left end of the domain joins the first piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    /// `|x|^α` (Euclidean norm), on `(−1, 1)` unless given.
    Power {
        alpha: f64,
        #[serde(default = "symmetric_unit")]
        domain: Domain,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// Coefficients per piece in ascending powers of `x`.
    PiecewisePolynomial {
        breakpoints: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
    },
    /// `Σ_j h_j (1 + |(x − t_j)/w_j|)^{−4}`.
    Bumps {
        locations: Vec<f64>,
        heights: Vec<f64>,
        widths: Vec<f64>,
        domain: Domain,
    },
}

impl TestFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Power { alpha, domain } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::invalid(format!("power exponent must lie in (0,1), got {alpha}")));
                }
                domain.validate()
            }
            TestFunction::PiecewiseConstant { breakpoints, values } => {
                check_breakpoints(breakpoints, values.len())?;
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("piece values must be finite"));
                }
                Ok(())
            }
            TestFunction::PiecewisePolynomial {
                breakpoints,
                coefficients,
            } => {
                check_breakpoints(breakpoints, coefficients.len())?;
                if coefficients.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("polynomial coefficients must be finite"));
                }
                Ok(())
            }
            TestFunction::Bumps {
                locations,
                heights,
                widths,
                domain,
            } => {
                domain.validate()?;
                if domain.dim() != 1 {
                    return Err(Error::invalid("bumps are defined on an interval"));
                }
                if locations.len() != heights.len() || locations.len() != widths.len() || locations.is_empty() {
                    return Err(Error::invalid("bumps need equally many locations, heights and widths"));
                }
                if widths.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::invalid("bump widths must be positive"));
                }
                Ok(())
            }
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            TestFunction::Power { domain, .. } | TestFunction::Bumps { domain, .. } => domain.clone(),
            TestFunction::PiecewiseConstant { breakpoints, .. }
            | TestFunction::PiecewisePolynomial { breakpoints, .. } => {
                Domain::interval(breakpoints[0], *breakpoints.last().unwrap())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Power { domain, .. } => domain.dim(),
            _ => 1,
        }
    }

    /// Piece boundaries interior to the domain (empty for smooth families).
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            TestFunction::PiecewiseConstant { breakpoints, .. }
            | TestFunction::PiecewisePolynomial { breakpoints, .. } => &breakpoints[1..breakpoints.len() - 1],
            _ => &[],
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let domain = self.domain();
        if !domain.contains(x) {
            return Err(Error::invalid(format!(
                "point {x:?} lies outside the domain {:?} × {:?}",
                domain.low, domain.high
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluate a point already known to be in the domain.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Power { alpha, .. } => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    r.powf(*alpha)
                }
            }
            TestFunction::PiecewiseConstant { breakpoints, values } => values[piece(breakpoints, x[0])],
            TestFunction::PiecewisePolynomial {
                breakpoints,
                coefficients,
            } => {
                let c = &coefficients[piece(breakpoints, x[0])];
                c.iter().rev().fold(0.0, |acc, &a| acc * x[0] + a)
            }
            TestFunction::Bumps {
                locations,
                heights,
                widths,
                ..
            } => locations
                .iter()
                .zip(heights)
                .zip(widths)
                .map(|((t, h), w)| h * (1.0 + ((x[0] - t) / w).abs()).powi(-4))
                .sum(),
        }
    }
}

fn check_breakpoints(b: &[f64], pieces: usize) -> Result<()> {
    if b.len() < 2 || b.len() != pieces + 1 {
        return Err(Error::invalid(format!(
            "{} breakpoints cannot partition the domain into {pieces} pieces",
            b.len()
        )));
    }
    if b.iter().any(|v| !v.is_finite()) || b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("breakpoints must be finite and strictly increasing"));
    }
    Ok(())
}

/// Index of the piece `(b_i, b_{i+1}]` containing `x`.
fn piece(breakpoints: &[f64], x: f64) -> usize {
    let below = breakpoints.partition_point(|&b| b < x);
    below.saturating_sub(1).min(breakpoints.len() - 2)
}

/// Names accepted by [`zoo_function`].
pub const ZOO_NAMES: [&str; 5] = ["f1", "f2", "f3", "f4", "step"];

/// The named test functions. `f4` is the classic bumps signal rescaled to `(0, 5)`.
pub fn zoo_function(name: &str) -> Result<TestFunction> {
    let f = match name {
        "f1" => TestFunction::Power {
            alpha: 0.75,
            domain: symmetric_unit(),
        },
        "f2" => TestFunction::PiecewiseConstant {
            breakpoints: vec![0.0, 1.0, 2.0, 3.0, 5.0],
            values: vec![1.0, 0.5, 2.0, -2.5],
        },
        "f3" => TestFunction::PiecewisePolynomial {
            breakpoints: vec![0.0, 1.0, 2.0, 3.0, 5.0],
            coefficients: vec![
                vec![0.0, 1.0],
                vec![2.0, 0.0, 2.0],
                vec![2.0, -1.0],
                vec![-4.0, -2.0, 0.0, 0.2],
            ],
        },
        "f4" => {
            let t = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
            let h = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
            let w = [0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005];
            TestFunction::Bumps {
                locations: t.iter().map(|v| 5.0 * v).collect(),
                heights: h.to_vec(),
                widths: w.iter().map(|v| 5.0 * v).collect(),
                domain: Domain::interval(0.0, 5.0),
            }
        }
        "step" => TestFunction::PiecewiseConstant {
            breakpoints: vec![0.0, 0.5, 1.0],
            values: vec![1.0, 0.0],
        },
        other => {
            return Err(Error::invalid(format!(
                "unknown test function `{other}` (known: {})",
                ZOO_NAMES.join(", ")
            )))
        }
    };
    Ok(f)
}

/// The whole zoo as a TOML document, one table per name.
pub fn zoo_toml() -> String {
    let zoo: BTreeMap<&str, TestFunction> = ZOO_NAMES.iter().map(|n| (*n, zoo_function(n).unwrap())).collect();
    toml::to_string(&zoo).expect("zoo serializes")
}

/// Parse a TOML document of named function tables.
pub fn parse_function_table(text: &str) -> Result<BTreeMap<String, TestFunction>> {
    let table: BTreeMap<String, TestFunction> =
        toml::from_str(text).map_err(|e| Error::invalid(format!("function table: {e}")))?;
    for f in table.values() {
        f.validate()?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    Divergent,
    /// The increment ratios neither all shrink nor all grow.
    Inconclusive,
}

/// Outcome of the refinement sequence for the squared seminorm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormResult {
    /// Extrapolated `∬ |u(x)−u(y)|²/|x−y|^{1+2s}`; `+∞` when divergent.
    pub value: f64,
    pub s: f64,
    pub status: Convergence,
    /// Cells summed at the finest level.
    pub quadrature_cells: usize,
    pub estimated_error: f64,
    /// `(level, partial sum)` for each refinement.
    pub refinements: Vec<(u32, f64)>,
}

impl SeminormResult {
    pub fn is_divergent(&self) -> bool {
        self.status == Convergence::Divergent
    }

    /// `|u|_{H^s}`, the square root of [`value`](Self::value).
    pub fn seminorm(&self) -> f64 {
        self.value.sqrt()
    }
}

/// Coarsest grid is `2^FIRST_LEVEL` cells per side.
pub const FIRST_LEVEL: u32 = 3;
/// Three increment ratios need five refinements.
pub const MIN_LEVEL: u32 = FIRST_LEVEL + 4;
pub const DEFAULT_LEVEL: u32 = 12;

/// Continuum seminorm of a one-dimensional test function over its domain.
pub fn continuum_seminorm(f: &TestFunction, s: f64, level: u32) -> Result<SeminormResult> {
    f.validate()?;
    if f.dim() != 1 {
        return Err(Error::invalid("continuum quadrature is implemented for d = 1 only"));
    }
    let d = f.domain();
    seminorm_quadrature(|x| f.eval_unchecked(&[x]), d.low[0], d.high[0], s, level)
}

/// Midpoint quadrature of `∬_{[a,b]²} |u(x)−u(y)|²/|x−y|^{1+2s}` on `2^ℓ × 2^ℓ`
/// grids for `ℓ = 3..=level`, skipping the cells on and next to the diagonal.
///
/// The skipped band shrinks geometrically, so successive increments shrink
/// by a constant ratio when the integral is finite and do not shrink when it
/// is infinite. Converged sequences are extrapolated by Aitken's rule.
pub fn seminorm_quadrature<F>(u: F, a: f64, b: f64, s: f64, level: u32) -> Result<SeminormResult>
where
    F: Fn(f64) -> f64,
{
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid(format!("s must lie in (0,1), got {s}")));
    }
    if !(level >= MIN_LEVEL && level <= 20) {
        return Err(Error::invalid(format!("refinement level must lie in {MIN_LEVEL}..=20, got {level}")));
    }
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
    }
    let mut refinements = Vec::new();
    let mut cells = 0;
    for l in FIRST_LEVEL..=level {
        let n = 1usize << l;
        let h = (b - a) / n as f64;
        let vals: Vec<f64> = (0..n).map(|i| u(a + (i as f64 + 0.5) * h)).collect();
        refinements.push((l, band_sum(&vals, h, s)));
        cells = n * n - (3 * n - 2);
    }

    let q: Vec<f64> = refinements.iter().map(|r| r.1).collect();
    let last = *q.last().unwrap();
    let inc: Vec<f64> = q.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let negligible = |d: f64| d.abs() <= 1e-14 * scale || scale == 0.0;

    let tail = &inc[inc.len() - 4..];
    let (status, value, err) = if tail.iter().all(|&d| negligible(d)) {
        (Convergence::Converged, last, tail[3].abs())
    } else {
        let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
        if ratios.iter().all(|r| r.is_finite() && r.abs() < 1.0) {
            let r = ratios[2];
            let correction = tail[3] * r / (1.0 - r);
            let prev = tail[2] * ratios[1] / (1.0 - ratios[1]);
            let value = last + correction;
            let previous = q[q.len() - 2] + prev;
            (Convergence::Converged, value, (value - previous).abs().max(correction.abs() * 1e-3))
        } else if tail.iter().all(|&d| d > 0.0) && ratios.iter().all(|&r| r >= 1.0) {
            (Convergence::Divergent, f64::INFINITY, f64::INFINITY)
        } else {
            (Convergence::Inconclusive, last, tail[3].abs())
        }
    };
    Ok(SeminormResult {
        value,
        s,
        status,
        quadrature_cells: cells,
        estimated_error: err,
        refinements,
    })
}

/// `2 h² Σ_{k≥2} (kh)^{−1−2s} Σ_i (u_i − u_{i+k})²`.
fn band_sum(vals: &[f64], h: f64, s: f64) -> f64 {
    let n = vals.len();
    let per_offset: Vec<f64> = (2..n)
        .into_par_iter()
        .map(|k| {
            let diff: f64 = vals[..n - k]
                .iter()
                .zip(&vals[k..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            diff * (k as f64 * h).powf(-1.0 - 2.0 * s)
        })
        .collect();
    2.0 * h * h * per_offset.iter().sum::<f64>()
}

/// `⟨L^s f, f⟩_n = Σ_k λ_k^s ⟨f, v_k⟩_n²` over the computed pairs, `s ∈ (0, 1]`.
pub fn spectral_seminorm(eig: &EigenSystem, f_values: &[f64], s: f64) -> Result<f64> {
    eig.power_form(f_values, s)
}

/// `c_{d,s} = s 2^{2s} Γ((d+2s)/2) / Γ(1−s)`.
pub fn frac_laplacian_constant(s: f64, d: usize) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid(format!("s must lie in (0,1), got {s}")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(s * 4f64.powf(s) * gamma((d as f64 + 2.0 * s) / 2.0) / gamma(1.0 - s))
}
