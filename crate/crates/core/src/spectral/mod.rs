//! Scaled graph Laplacian, its eigensystem under the `‖·‖_n` normalization,
//! and fractional powers by spectral calculus.
//!
//! Eigenvectors are stored with `‖v‖₂ = √n` so that `⟨v_i, v_j⟩_n = δ_ij`,
//! where `⟨u, v⟩_n = u·v / n`. The null space of the Laplacian is spanned by
//! component indicators; both solvers return exactly those vectors (with
//! eigenvalue 0) for the leading pairs.

mod dense;
mod envelope;
mod krylov;
mod laplacian;

use std::path::Path;

use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use laplacian::{dirichlet_form, laplacian, LaplacianOperator};

/// Above this size `EigenMethod::Auto` switches to the Krylov solver.
pub const DENSE_THRESHOLD: usize = 512;

/// Eigenvalues in `[−NEGATIVE_CLAMP, 0)` are treated as round-off and clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense below [`DENSE_THRESHOLD`] (or when more than a third of the
    /// spectrum is requested), Krylov above.
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Residual target `‖L x − λ x‖₂` for unit `x`.
    pub tolerance: f64,
    /// Krylov block size; also the largest eigenvalue multiplicity resolved reliably.
    pub block_size: usize,
    /// Shift for `(L + σI)^{-1}`; defaults to `1e-4 · max L_ii`.
    pub shift: Option<f64>,
    /// Cap on the Krylov basis dimension (`None` = no cap below `n`).
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Auto,
            tolerance: 1e-10,
            block_size: 4,
            shift: None,
            max_basis: None,
            seed: 0x5eed_1a9c,
        }
    }
}

/// Ascending eigenpairs of the scaled Laplacian.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Build from ascending values and unit-2-norm columns (rescaled to `‖v‖_n = 1`).
    pub(crate) fn from_unit(values: Vec<f64>, mut unit_vectors: DMatrix<f64>) -> Self {
        let n = unit_vectors.nrows();
        let root_n = (n as f64).sqrt();
        for mut col in unit_vectors.column_iter_mut() {
            // sign: largest-magnitude entry positive (first one on ties)
            let mut best = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[best].abs() {
                    best = i;
                }
            }
            let sign = if col[best] < 0.0 { -root_n } else { root_n };
            col *= sign;
        }
        EigenSystem {
            values,
            vectors: unit_vectors,
        }
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    /// Number of computed pairs.
    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn is_complete(&self) -> bool {
        self.m() == self.n()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Columns are the eigenvectors, `‖v_k‖₂ = √n`.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> DVectorView<'_, f64> {
        self.vectors.column(k)
    }

    /// `λ_k` clamped at zero from below.
    pub fn clamped_value(&self, k: usize) -> f64 {
        self.values[k].max(0.0)
    }

    /// Coefficients `⟨u, v_k⟩_n` for the first `count` pairs.
    pub fn coefficients(&self, u: &[f64], count: usize) -> Result<Vec<f64>> {
        self.check_len(u)?;
        if count > self.m() {
            return Err(Error::invalid(format!(
                "requested {count} coefficients but only {} eigenpairs are available",
                self.m()
            )));
        }
        let n = self.n() as f64;
        Ok((0..count)
            .map(|k| self.vectors.column(k).iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / n)
            .collect())
    }

    /// `Σ_{k<K} c_k v_k`.
    pub fn synthesize(&self, coefficients: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (k, &c) in coefficients.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.vectors.column(k).iter()) {
                *o += c * v;
            }
        }
        out
    }

    /// Orthogonal projection onto the span of the first `count` eigenvectors.
    pub fn project(&self, u: &[f64], count: usize) -> Result<Vec<f64>> {
        let c = self.coefficients(u, count)?;
        Ok(self.synthesize(&c))
    }

    /// `Σ_k λ_k^s ⟨u, v_k⟩_n²` over the computed pairs, for `s ∈ (0, 1]`.
    pub fn power_form(&self, u: &[f64], s: f64) -> Result<f64> {
        check_power(s, true)?;
        let c = self.coefficients(u, self.m())?;
        Ok(c.iter()
            .enumerate()
            .map(|(k, ck)| self.powered(k, s) * ck * ck)
            .sum())
    }

    fn powered(&self, k: usize, s: f64) -> f64 {
        let lam = self.values[k];
        if lam < 0.0 {
            // PSD operator: anything negative is round-off
            0.0
        } else {
            lam.powf(s)
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::invalid(format!(
                "vector has length {} but the eigensystem has dimension {}",
                u.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// One row per pair: `index, eigenvalue, v_1 .. v_n`, 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["index".to_string(), "eigenvalue".to_string()];
        header.extend((1..=self.n()).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for k in 0..self.m() {
            let mut row = vec![(k + 1).to_string(), crate::fmt_f64(self.values[k])];
            row.extend(self.vectors.column(k).iter().map(|&v| crate::fmt_f64(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_power(s: f64, allow_one: bool) -> Result<()> {
    let ok = if allow_one { s > 0.0 && s <= 1.0 } else { s > 0.0 && s < 1.0 };
    if !ok {
        let range = if allow_one { "(0, 1]" } else { "(0, 1)" };
        return Err(Error::invalid(format!("s must lie in {range}, got {s}")));
    }
    Ok(())
}

/// The `m` algebraically smallest eigenpairs of `op`.
pub fn eigensolve(op: &LaplacianOperator<'_>, m: usize) -> Result<EigenSystem> {
    eigensolve_with(op, m, &EigenOptions::default())
}

pub fn eigensolve_with(op: &LaplacianOperator<'_>, m: usize, opts: &EigenOptions) -> Result<EigenSystem> {
    let n = op.n();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("requested {m} eigenpairs, need 1 <= m <= n = {n}")));
    }
    let method = match opts.method {
        EigenMethod::Auto if n <= DENSE_THRESHOLD || 3 * m > n => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Krylov,
        other => other,
    };
    let (values, vectors) = match method {
        EigenMethod::Dense => dense::smallest_pairs(op, m)?,
        _ => krylov::smallest_pairs(op, m, opts)?,
    };
    Ok(EigenSystem::from_unit(values, vectors))
}

/// `L^s u = Σ_k λ_k^s ⟨u, v_k⟩_n v_k` over the computed pairs.
pub fn fractional_apply(eig: &EigenSystem, s: f64, u: &[f64]) -> Result<Vec<f64>> {
    check_power(s, false)?;
    let c = eig.coefficients(u, eig.m())?;
    let weighted: Vec<f64> = c.iter().enumerate().map(|(k, ck)| eig.powered(k, s) * ck).collect();
    Ok(eig.synthesize(&weighted))
}

/// Null-space basis: unit-norm indicators of connected components, in label order.
pub(crate) fn component_indicators(op: &LaplacianOperator<'_>) -> Vec<Vec<f64>> {
    let comps = op.graph().components();
    let mut sizes = vec![0usize; comps.count];
    for &l in &comps.labels {
        sizes[l] += 1;
    }
    (0..comps.count)
        .map(|c| {
            let v = 1.0 / (sizes[c] as f64).sqrt();
            comps.labels.iter().map(|&l| if l == c { v } else { 0.0 }).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_graph, KernelSpec, NeighborGraph, SampleSet};

    fn path3() -> NeighborGraph {
        NeighborGraph::from_edges(3, 1.0, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn path3_spectrum() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        let eig = eigensolve(&op, 3).unwrap();
        // unscaled {0, 1, 3}, scaled by 1/(nε³) = 1/3
        let expected = [0.0, 1.0 / 3.0, 1.0];
        for (a, b) in eig.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(eig.vector(0).iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fractional_apply_matches_dense_power() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        let eig = eigensolve(&op, 3).unwrap();
        let s = 0.5;
        let u = [1.0, 0.0, -1.0];
        // dense Σ λ^s v vᵀ / n assembled entrywise
        let n = 3.0;
        let mut oracle = [0.0; 3];
        for k in 0..3 {
            let lam = eig.values()[k].max(0.0).powf(s);
            let v = eig.vector(k);
            for i in 0..3 {
                for j in 0..3 {
                    oracle[i] += lam * v[i] * v[j] * u[j] / n;
                }
            }
        }
        let got = fractional_apply(&eig, s, &u).unwrap();
        for i in 0..3 {
            assert!((got[i] - oracle[i]).abs() < 1e-12);
        }
        // (1,0,−1) is the middle eigenvector of the path: L^s u = (1/3)^s u
        for i in 0..3 {
            assert!((got[i] - (1.0f64 / 3.0).powf(s) * u[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn fractional_apply_edge_cases() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        let eig = eigensolve(&op, 3).unwrap();
        let zero = fractional_apply(&eig, 0.3, &[4.0, 4.0, 4.0]).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-12));
        let v2: Vec<f64> = eig.vector(2).iter().copied().collect();
        let out = fractional_apply(&eig, 0.7, &v2).unwrap();
        let lam = eig.values()[2].powf(0.7);
        for i in 0..3 {
            assert!((out[i] - lam * v2[i]).abs() < 1e-12);
        }
        assert!(fractional_apply(&eig, 1.0, &v2).is_err());
        assert!(fractional_apply(&eig, 0.0, &v2).is_err());
    }

    #[test]
    fn disconnected_graph_null_space_is_indicators() {
        let s = SampleSet::from_line(&[0.0, 0.1, 0.2, 3.0, 3.1, 7.0], None).unwrap();
        let g = build_graph(&s, 0.15, &KernelSpec::Indicator).unwrap();
        let op = laplacian(&g, 1).unwrap();
        let eig = eigensolve(&op, 6).unwrap();
        assert_eq!(&eig.values()[..3], &[0.0, 0.0, 0.0]);
        let v0: Vec<f64> = eig.vector(0).iter().copied().collect();
        let a = (6.0f64 / 3.0).sqrt();
        for (x, e) in v0.iter().zip([a, a, a, 0.0, 0.0, 0.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        assert!(eigensolve(&op, 0).is_err());
        assert!(eigensolve(&op, 4).is_err());
    }
}
