//! ε-neighborhood graphs with kernel weights over a point cloud.
//!
//! An edge joins `X_i` and `X_j` (i ≠ j) when `η(‖X_i − X_j‖/ε)` is at least
//! [`MIN_WEIGHT`]. Self-loops are never stored: they cancel in `D − W`.

mod kdtree;
mod kernel;
mod samples;

use rayon::prelude::*;

pub use kernel::{kernel_moments, KernelMoments, KernelSpec, DEFAULT_GAUSSIAN_SHAPE};
pub use samples::SampleSet;

use crate::error::{Error, Result};
use kdtree::KdTree;

/// Edges lighter than this are dropped.
pub const MIN_WEIGHT: f64 = 1e-14;

/// Above this many points neighbor search goes through a kd-tree.
pub const SPATIAL_INDEX_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborSearch {
    /// kd-tree above [`SPATIAL_INDEX_THRESHOLD`] points, all-pairs scan below.
    Auto,
    BruteForce,
    KdTree,
}

/// Sparse symmetric weight matrix in CSR form, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    epsilon: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl NeighborGraph {
    /// Assemble from an undirected edge list `(i, j, w)`; each pair must appear once.
    pub fn from_edges(n: usize, epsilon: f64, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j || w < MIN_WEIGHT {
                continue;
            }
            if !w.is_finite() {
                return Err(Error::invalid("non-finite edge weight"));
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut weights = Vec::new();
        let mut degree = Vec::with_capacity(n);
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::invalid("duplicate edge in edge list"));
            }
            degree.push(row.iter().map(|&(_, w)| w).sum());
            for (j, w) in row {
                cols.push(j);
                weights.push(w);
            }
            row_ptr.push(cols.len());
        }
        Ok(NeighborGraph {
            n,
            epsilon,
            row_ptr,
            cols,
            weights,
            degree,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Neighbors of `i` with weights, ascending by index.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// Stored weight w_ij (0 when absent).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.weights[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.cols.len() / 2
    }

    /// Edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).filter(move |&(j, _)| j > i).map(move |(j, w)| (i, j, w)))
    }

    /// Components by union-find over the stored edges.
    pub fn components(&self) -> Components {
        let mut uf = UnionFind::new(self.n);
        for (i, j, _) in self.edges() {
            uf.union(i, j);
        }
        // label components in order of their smallest vertex
        let mut label = vec![usize::MAX; self.n];
        let mut root_label = vec![usize::MAX; self.n];
        let mut count = 0;
        for v in 0..self.n {
            let r = uf.find(v);
            if root_label[r] == usize::MAX {
                root_label[r] = count;
                count += 1;
            }
            label[v] = root_label[r];
        }
        Components {
            count,
            labels: label,
        }
    }

    /// Connectivity summary.
    pub fn connectivity(&self) -> Connectivity {
        let c = self.components();
        Connectivity {
            connected: c.count == 1,
            component_count: c.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connectivity {
    pub connected: bool,
    pub component_count: usize,
}

/// Component labels; component `k` is the `k`-th to appear scanning vertices in order.
#[derive(Debug, Clone)]
pub struct Components {
    pub count: usize,
    pub labels: Vec<usize>,
}

/// Union-find connectivity check.
pub fn connectivity_check(graph: &NeighborGraph) -> Connectivity {
    graph.connectivity()
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Build the ε-graph with the default neighbor search.
pub fn build_graph(samples: &SampleSet, epsilon: f64, kernel: &KernelSpec) -> Result<NeighborGraph> {
    build_graph_with(samples, epsilon, kernel, NeighborSearch::Auto)
}

pub fn build_graph_with(
    samples: &SampleSet,
    epsilon: f64,
    kernel: &KernelSpec,
    search: NeighborSearch,
) -> Result<NeighborGraph> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    kernel.validate()?;
    let n = samples.n();
    let use_tree = match search {
        NeighborSearch::Auto => n > SPATIAL_INDEX_THRESHOLD,
        NeighborSearch::BruteForce => false,
        NeighborSearch::KdTree => true,
    };
    let weight = |i: usize, j: usize| -> Option<f64> {
        let dist = distance(samples.point(i), samples.point(j));
        let w = kernel.eval(dist / epsilon);
        (w >= MIN_WEIGHT).then_some(w)
    };

    let edges: Vec<(usize, usize, f64)> = if use_tree {
        let tree = KdTree::new(samples.coords(), samples.dim());
        let slack = epsilon * (1.0 + 1e-12);
        (0..n)
            .into_par_iter()
            .map_init(Vec::new, |buf, i| {
                tree.candidates(samples.point(i), slack, buf);
                let mut row: Vec<(usize, usize, f64)> = buf
                    .iter()
                    .filter(|&&j| j > i)
                    .filter_map(|&j| weight(i, j).map(|w| (i, j, w)))
                    .collect();
                row.sort_by_key(|e| e.1);
                row
            })
            .flatten()
            .collect()
    } else {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| ((i + 1)..n).filter_map(move |j| weight(i, j).map(|w| (i, j, w))))
            .collect()
    };
    NeighborGraph::from_edges(n, epsilon, &edges)
}

#[inline]
fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_indicator() {
        let s = SampleSet::from_line(&[0.0, 0.3, 2.0], None).unwrap();
        let g = build_graph(&s, 0.5, &KernelSpec::Indicator).unwrap();
        let edges: Vec<_> = g.edges().collect();
        assert_eq!(edges, vec![(0, 1, 1.0)]);
        assert_eq!(g.degree(), &[1.0, 1.0, 0.0]);
        let c = connectivity_check(&g);
        assert_eq!(c.component_count, 2);
        assert!(!c.connected);
    }

    #[test]
    fn triangular_weight() {
        let s = SampleSet::from_line(&[0.0, 0.3], None).unwrap();
        let g = build_graph(&s, 0.5, &KernelSpec::Triangular).unwrap();
        assert!((g.weight(0, 1) - 0.4).abs() < 1e-15);
        assert_eq!(g.weight(1, 0), g.weight(0, 1));
    }

    #[test]
    fn triangular_boundary_edge_dropped() {
        // η(1) = 0 for the triangular kernel
        let s = SampleSet::from_line(&[0.0, 0.5], None).unwrap();
        let g = build_graph(&s, 0.5, &KernelSpec::Triangular).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn component_counts() {
        let complete: Vec<_> = (0..4).flat_map(|i| ((i + 1)..4).map(move |j| (i, j, 1.0))).collect();
        let g = NeighborGraph::from_edges(4, 1.0, &complete).unwrap();
        assert_eq!(g.connectivity().component_count, 1);
        let empty = NeighborGraph::from_edges(5, 1.0, &[]).unwrap();
        assert_eq!(empty.connectivity().component_count, 5);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let s = SampleSet::from_line(&[0.0, 0.3], None).unwrap();
        assert!(build_graph(&s, 0.0, &KernelSpec::Indicator).is_err());
        assert!(build_graph(&s, -1.0, &KernelSpec::Indicator).is_err());
    }

    #[test]
    fn duplicate_points_get_full_weight() {
        let s = SampleSet::from_line(&[1.0, 1.0, 1.0], None).unwrap();
        let g = build_graph(&s, 0.1, &KernelSpec::Triangular).unwrap();
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.weight(0, 2), 1.0);
    }
}
