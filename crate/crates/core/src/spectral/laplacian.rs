use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::NeighborGraph;

const PARALLEL_ROWS: usize = 4096;

/// The scaled unnormalized Laplacian `L = (D − W) / (n ε^{d+2})`, applied matrix-free.
#[derive(Debug, Clone, Copy)]
pub struct LaplacianOperator<'g> {
    graph: &'g NeighborGraph,
    scale: f64,
    dim: usize,
}

/// Wrap a graph as its scaled Laplacian for points in ℝ^`dim`.
pub fn laplacian(graph: &NeighborGraph, dim: usize) -> Result<LaplacianOperator<'_>> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    let n = graph.n() as f64;
    let scale = 1.0 / (n * graph.epsilon().powi(dim as i32 + 2));
    Ok(LaplacianOperator { graph, scale, dim })
}

impl<'g> LaplacianOperator<'g> {
    pub fn graph(&self) -> &'g NeighborGraph {
        self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Diagonal entry `L_ii`.
    pub fn diag(&self, i: usize) -> f64 {
        self.scale * self.graph.degree()[i]
    }

    /// `‖L‖_∞`, twice the largest scaled degree.
    pub fn norm_inf(&self) -> f64 {
        2.0 * self.scale * self.graph.degree().iter().cloned().fold(0.0, f64::max)
    }

    #[inline]
    fn row_apply(&self, i: usize, u: &[f64]) -> f64 {
        let ui = u[i];
        self.scale * self.graph.row(i).map(|(j, w)| w * (ui - u[j])).sum::<f64>()
    }

    /// `out ← L u`.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.n());
        assert_eq!(out.len(), self.n());
        if self.n() >= PARALLEL_ROWS {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = self.row_apply(i, u));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row_apply(i, u);
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.apply_into(u, &mut out);
        out
    }

    /// Dense copy of `L`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag(i);
            for (j, w) in self.graph.row(i) {
                m[(i, j)] = -self.scale * w;
            }
        }
        m
    }

    /// `⟨L u, u⟩_n`, summed directly over edges.
    pub fn dirichlet_form(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.n() {
            return Err(Error::invalid(format!(
                "vector has length {} but the graph has {} vertices",
                u.len(),
                self.n()
            )));
        }
        // Σ_{i,j} w (u_i − u_j)² counts each undirected edge twice
        let sum: f64 = self.graph.edges().map(|(i, j, w)| w * (u[i] - u[j]).powi(2)).sum();
        let n = self.n() as f64;
        Ok(self.scale * sum / n)
    }
}

/// `⟨L u, u⟩_n` for the Laplacian of `op`.
pub fn dirichlet_form(op: &LaplacianOperator<'_>, u: &[f64]) -> Result<f64> {
    op.dirichlet_form(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> NeighborGraph {
        NeighborGraph::from_edges(3, 1.0, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn path_graph_matrix() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        let l = op.to_dense();
        let expected = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((l[(i, j)] - expected[i][j] / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constants_in_kernel() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        assert!(op.apply(&[2.5, 2.5, 2.5]).iter().all(|&v| v == 0.0));
        assert_eq!(op.dirichlet_form(&[2.5, 2.5, 2.5]).unwrap(), 0.0);
    }

    #[test]
    fn two_vertex_quadratic_form() {
        let (w, eps) = (0.7, 0.5);
        let g = NeighborGraph::from_edges(2, eps, &[(0, 1, w)]).unwrap();
        let op = laplacian(&g, 1).unwrap();
        let u = [0.0, 1.0];
        let expected = w / (4.0 * eps * eps * eps);
        assert!((op.dirichlet_form(&u).unwrap() - expected).abs() < 1e-12);
        let lu = op.apply(&u);
        let via_matvec = (lu[0] * u[0] + lu[1] * u[1]) / 2.0;
        assert!((via_matvec - expected).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let g = path3();
        let op = laplacian(&g, 1).unwrap();
        assert!(op.dirichlet_form(&[1.0]).is_err());
    }
}
