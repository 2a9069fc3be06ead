//! Principal component regression on fractional Laplacian eigenmaps.
//!
//! The pipeline builds an ε-neighborhood graph over the design points,
//! forms the scaled unnormalized Laplacian `L = (D − W)/(n ε^{d+2})`,
//! computes its leading eigenvectors under the empirical norm
//! `‖u‖_n = ‖u‖₂/√n`, and projects the responses onto the first `K` of them.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | sample sets, kernels, ε-graphs, connectivity |
//! | [`spectral`] | Laplacian operator, eigensolvers, fractional powers |
//! | [`estimator`] | fitting, tuning rules, grid search, bias/variance split |
//! | [`sobolev`] | test functions, continuum and spectral seminorms, `c_{d,s}` |
//! | [`experiments`] | Monte-Carlo sweeps, rate fits, eigenvalue diagnostics |
//! | [`config`] / [`cli`] | TOML configuration and the command-line driver |

pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod geometry;
pub mod sobolev;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};

/// Format a float with 17 significant digits (lossless for f64).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}
