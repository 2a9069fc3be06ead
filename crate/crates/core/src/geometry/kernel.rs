use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::unit_sphere_area;

/// Default shape of the truncated Gaussian profile.
pub const DEFAULT_GAUSSIAN_SHAPE: f64 = 0.4;

/// Radial kernel profile η: [0, ∞) → [0, ∞), supported on [0, 1] and non-increasing there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// η(t) = 1 on [0, 1].
    Indicator,
    /// η(t) = 1 − t on [0, 1].
    Triangular,
    /// η(t) = exp(−t²/(2h²)) on [0, 1].
    TruncatedGaussian {
        #[serde(default = "default_shape")]
        h: f64,
    },
}

fn default_shape() -> f64 {
    DEFAULT_GAUSSIAN_SHAPE
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::TruncatedGaussian {
            h: DEFAULT_GAUSSIAN_SHAPE,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::TruncatedGaussian { h } if !(h > 0.0 && h.is_finite()) => Err(
                Error::invalid(format!("truncated gaussian shape h must be positive, got {h}")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        match *self {
            KernelSpec::Indicator => 1.0,
            KernelSpec::Triangular => 1.0 - t,
            KernelSpec::TruncatedGaussian { h } => (-t * t / (2.0 * h * h)).exp(),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            KernelSpec::Indicator => "indicator".into(),
            KernelSpec::Triangular => "triangular".into(),
            KernelSpec::TruncatedGaussian { h } => format!("truncated_gaussian(h={h})"),
        }
    }
}

/// σ₀ = ∫ η(‖x‖) dx and σ₁ = (1/d) ∫ ‖y‖² η(‖y‖) dy over ℝ^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub sigma0: f64,
    pub sigma1: f64,
    pub dim: usize,
}

/// Kernel moments by radial reduction to integrals over [0, 1].
pub fn kernel_moments(kernel: &KernelSpec, dim: usize) -> Result<KernelMoments> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    kernel.validate()?;
    let area = unit_sphere_area(dim);
    let d = dim as i32;
    let m0 = gauss_legendre_unit(|r| r.powi(d - 1) * kernel.eval(r));
    let m2 = gauss_legendre_unit(|r| r.powi(d + 1) * kernel.eval(r));
    Ok(KernelMoments {
        sigma0: area * m0,
        sigma1: area * m2 / dim as f64,
        dim,
    })
}

// Composite Gauss–Legendre on [0, 1]: 64 panels of 10 nodes.
fn gauss_legendre_unit(f: impl Fn(f64) -> f64) -> f64 {
    const PANELS: usize = 64;
    let (nodes, weights) = legendre_rule(10);
    let width = 1.0 / PANELS as f64;
    let mut sum = 0.0;
    for p in 0..PANELS {
        let mid = (p as f64 + 0.5) * width;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(&weights) {
            panel += w * f(mid + 0.5 * width * x);
        }
        sum += 0.5 * width * panel;
    }
    sum
}

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [−1, 1].
pub(crate) fn legendre_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pm = if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
            let dx = pm / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}
