use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::Result;

use super::{component_indicators, LaplacianOperator};

/// Full dense decomposition, keeping the `m` smallest pairs as unit vectors.
pub(super) fn smallest_pairs(op: &LaplacianOperator<'_>, m: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = op.n();
    let eig = SymmetricEigen::new(op.to_dense());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    // the null space is known exactly: swap in component indicators
    let null = component_indicators(op);
    let c = null.len();
    let mut values = Vec::with_capacity(m);
    let mut vectors = DMatrix::zeros(n, m);
    for k in 0..m {
        if k < c {
            values.push(0.0);
            vectors.column_mut(k).copy_from_slice(&null[k]);
            continue;
        }
        let src = idx[k];
        let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        for z in &null {
            let dot: f64 = z.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, zi) in v.iter_mut().zip(z) {
                *vi -= dot * zi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        values.push(eig.eigenvalues[src]);
        vectors.column_mut(k).copy_from_slice(&v);
    }
    Ok((values, vectors))
}
