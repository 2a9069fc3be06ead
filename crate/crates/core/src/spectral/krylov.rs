//! Block Krylov eigensolver for the smallest pairs of the scaled Laplacian.
//!
//! The Krylov space is built from the shift-inverted operator `(L + σI)^{-1}`
//! (applied through an envelope Cholesky factor) with full
//! re-orthogonalization, restricted to the orthogonal complement of the
//! known null space. Ritz pairs come from a Rayleigh–Ritz step with `L`
//! itself, so solve accuracy only affects the convergence speed, never the
//! reported residuals.

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::envelope::EnvelopeCholesky;
use super::{component_indicators, EigenOptions, LaplacianOperator};

struct Basis<'a> {
    n: usize,
    q: Vec<f64>,
    lq: Vec<f64>,
    // projected matrix, row-major, grown on demand
    t: Vec<Vec<f64>>,
    null: &'a [Vec<f64>],
}

impl Basis<'_> {
    fn dim(&self) -> usize {
        self.t.len()
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.q[j * self.n..(j + 1) * self.n]
    }

    fn orthogonalize(&self, w: &mut [f64]) {
        for _ in 0..2 {
            for z in self.null {
                let dot: f64 = z.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(z).for_each(|(wi, zi)| *wi -= dot * zi);
            }
            let dim = self.dim();
            if dim > 0 {
                let qv = DMatrixView::from_slice(&self.q, self.n, dim);
                let mut wv = DVector::from_column_slice(w);
                let h = qv.tr_mul(&wv);
                wv.gemv(-1.0, &qv, &h, 1.0);
                w.copy_from_slice(wv.as_slice());
            }
        }
    }

    /// Orthogonalize and append; returns false when `w` is numerically in the span.
    fn push(&mut self, op: &LaplacianOperator<'_>, mut w: Vec<f64>) -> bool {
        let before = norm(&w);
        if before == 0.0 {
            return false;
        }
        self.orthogonalize(&mut w);
        let after = norm(&w);
        if after <= 1e-8 * before {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= after);
        let lw = op.apply(&w);
        let dim = self.dim();
        let mut row = Vec::with_capacity(dim + 1);
        for j in 0..dim {
            let a: f64 = self.col(j).iter().zip(&lw).map(|(x, y)| x * y).sum();
            let b: f64 = self.lq[j * self.n..(j + 1) * self.n].iter().zip(&w).map(|(x, y)| x * y).sum();
            let v = 0.5 * (a + b);
            row.push(v);
            self.t[j].push(v);
        }
        row.push(w.iter().zip(&lw).map(|(x, y)| x * y).sum());
        self.t.push(row);
        self.q.extend_from_slice(&w);
        self.lq.extend_from_slice(&lw);
        true
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub(super) fn smallest_pairs(
    op: &LaplacianOperator<'_>,
    m: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = op.n();
    let null = component_indicators(op);
    let c = null.len();
    let mut values = Vec::with_capacity(m);
    let mut vectors = DMatrix::zeros(n, m);
    for (k, z) in null.iter().take(m).enumerate() {
        values.push(0.0);
        vectors.column_mut(k).copy_from_slice(z);
    }
    if m <= c {
        return Ok((values, vectors));
    }

    let want = m - c;
    let rest = n - c;
    let cap = opts.max_basis.unwrap_or(rest).clamp(want.min(rest), rest);
    let block = opts.block_size.clamp(1, rest);
    let max_diag = (0..n).map(|i| op.diag(i)).fold(0.0, f64::max);
    let sigma = opts.shift.unwrap_or(1e-4 * max_diag).max(f64::MIN_POSITIVE);
    let tol = opts.tolerance.max(64.0 * f64::EPSILON * op.norm_inf());
    let factor = EnvelopeCholesky::new(op, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut basis = Basis {
        n,
        q: Vec::with_capacity(n * cap.min(4 * want + 64)),
        lq: Vec::new(),
        t: Vec::new(),
        null: &null,
    };

    let mut last: Vec<usize> = Vec::new();
    for _ in 0..block {
        for _ in 0..4 {
            if basis.push(op, random_vector(&mut rng, n)) {
                last.push(basis.dim() - 1);
                break;
            }
        }
    }

    let mut next_check = cap.min((2 * want + 2 * block).max(want + 16));
    let mut solved = vec![0.0; n];
    let mut worst: f64;
    loop {
        if basis.dim() >= next_check || basis.dim() >= cap {
            let (theta, ritz, residuals) = rayleigh_ritz(&basis, want);
            worst = residuals.iter().cloned().fold(0.0, f64::max);
            if worst <= tol {
                for k in 0..want {
                    values.push(theta[k]);
                    vectors.column_mut(c + k).copy_from(&ritz.column(k));
                }
                return Ok((values, vectors));
            }
            if basis.dim() >= cap {
                break;
            }
            next_check = cap.min(basis.dim() + block.max(want / 2));
        }

        let mut added = Vec::with_capacity(block);
        for &j in &last {
            if basis.dim() >= cap {
                break;
            }
            factor.solve(basis.col(j), &mut solved);
            let mut ok = basis.push(op, solved.clone());
            let mut tries = 0;
            while !ok && tries < 4 && basis.dim() < cap {
                ok = basis.push(op, random_vector(&mut rng, n));
                tries += 1;
            }
            if ok {
                added.push(basis.dim() - 1);
            }
        }
        if added.is_empty() {
            // no direction left to explore
            let (theta, ritz, residuals) = rayleigh_ritz(&basis, want.min(basis.dim()));
            worst = residuals.iter().cloned().fold(0.0, f64::max);
            if theta.len() == want && worst <= tol {
                for k in 0..want {
                    values.push(theta[k]);
                    vectors.column_mut(c + k).copy_from(&ritz.column(k));
                }
                return Ok((values, vectors));
            }
            break;
        }
        last = added;
    }
    Err(Error::NonConvergence {
        iterations: basis.dim(),
        worst_residual: worst,
    })
}

fn rayleigh_ritz(basis: &Basis<'_>, want: usize) -> (Vec<f64>, DMatrix<f64>, Vec<f64>) {
    let dim = basis.dim();
    let n = basis.n;
    let t = DMatrix::from_fn(dim, dim, |i, j| basis.t[i][j]);
    let eig = SymmetricEigen::new(t);
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let want = want.min(dim);
    let s = DMatrix::from_fn(dim, want, |i, k| eig.eigenvectors[(i, idx[k])]);
    let theta: Vec<f64> = idx[..want].iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrixView::from_slice(&basis.q, n, dim);
    let lq = DMatrixView::from_slice(&basis.lq, n, dim);
    let x = q * &s;
    let mut r = lq * &s;
    for k in 0..want {
        let xk = x.column(k).into_owned();
        r.column_mut(k).axpy(-theta[k], &xk, 1.0);
    }
    let residuals = (0..want).map(|k| r.column(k).norm()).collect();
    (theta, x, residuals)
}
