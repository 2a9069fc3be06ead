//! Envelope (profile) Cholesky factorization of `L + σI` under a reverse
//! Cuthill–McKee ordering. For one-dimensional designs the ordering recovers
//! the sorted order and the envelope is a narrow band.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::NeighborGraph;

use super::LaplacianOperator;

/// Reverse Cuthill–McKee ordering; `order[k]` is the original index placed at position `k`.
pub(crate) fn reverse_cuthill_mckee(graph: &NeighborGraph) -> Vec<usize> {
    let n = graph.n();
    let deg: Vec<usize> = (0..n).map(|i| graph.row(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (deg[i], i));

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(graph, seed, &deg);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut nbrs = Vec::new();
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(graph.row(v).map(|(j, _)| j).filter(|&j| !visited[j]));
            nbrs.sort_by_key(|&j| (deg[j], j));
            for &j in &nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

// A few sweeps of "jump to the farthest, lowest-degree vertex".
fn pseudo_peripheral(graph: &NeighborGraph, seed: usize, deg: &[usize]) -> usize {
    let mut current = seed;
    let mut best_ecc = 0;
    for _ in 0..4 {
        let (far, ecc) = farthest(graph, current, deg);
        if ecc <= best_ecc {
            break;
        }
        best_ecc = ecc;
        current = far;
    }
    current
}

fn farthest(graph: &NeighborGraph, start: usize, deg: &[usize]) -> (usize, usize) {
    let mut level = vec![usize::MAX; graph.n()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0usize);
    while let Some(v) = queue.pop_front() {
        let lv = level[v];
        if lv > best.1 || (lv == best.1 && deg[v] < deg[best.0]) {
            best = (v, lv);
        }
        for (j, _) in graph.row(v) {
            if level[j] == usize::MAX {
                level[j] = lv + 1;
                queue.push_back(j);
            }
        }
    }
    best
}

pub(crate) struct EnvelopeCholesky {
    order: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factor `L + σ I`.
    pub(crate) fn new(op: &LaplacianOperator<'_>, sigma: f64) -> Result<Self> {
        let graph = op.graph();
        let n = graph.n();
        let order = reverse_cuthill_mckee(graph);
        let mut position = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        let first: Vec<usize> = order
            .iter()
            .enumerate()
            .map(|(k, &v)| graph.row(v).map(|(j, _)| position[j]).fold(k, usize::min))
            .collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for k in 0..n {
            offset.push(offset[k] + (k - first[k] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for (k, &v) in order.iter().enumerate() {
            data[offset[k] + (k - first[k])] = op.diag(v) + sigma;
            for (j, w) in graph.row(v) {
                let c = position[j];
                if c < k {
                    data[offset[k] + (c - first[k])] = -op.scale() * w;
                }
            }
        }

        for i in 0..n {
            let (fi, oi) = (first[i], offset[i]);
            for j in fi..i {
                let (fj, oj) = (first[j], offset[j]);
                let lo = fi.max(fj);
                let mut s = data[oi + (j - fi)];
                for k in lo..j {
                    s -= data[oi + (k - fi)] * data[oj + (k - fj)];
                }
                data[oi + (j - fi)] = s / data[oj + (j - fj)];
            }
            let mut d = data[oi + (i - fi)];
            for k in fi..i {
                d -= data[oi + (k - fi)].powi(2);
            }
            if !(d > 0.0) {
                return Err(Error::invalid(format!(
                    "shifted Laplacian is not positive definite at pivot {i} (shift {sigma:e})"
                )));
            }
            data[oi + (i - fi)] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            order,
            first,
            offset,
            data,
        })
    }

    /// `x ← (L + σI)^{-1} b`.
    pub(crate) fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.order.len();
        let mut z: Vec<f64> = self.order.iter().map(|&v| b[v]).collect();
        // forward: L z = Pb
        for i in 0..n {
            let (fi, oi) = (self.first[i], self.offset[i]);
            let mut s = z[i];
            for k in fi..i {
                s -= self.data[oi + (k - fi)] * z[k];
            }
            z[i] = s / self.data[oi + (i - fi)];
        }
        // backward: Lᵀ y = z
        for i in (0..n).rev() {
            let (fi, oi) = (self.first[i], self.offset[i]);
            let yi = z[i] / self.data[oi + (i - fi)];
            z[i] = yi;
            for k in fi..i {
                z[k] -= self.data[oi + (k - fi)] * yi;
            }
        }
        for (k, &v) in self.order.iter().enumerate() {
            x[v] = z[k];
        }
    }

    #[cfg(test)]
    pub(crate) fn envelope_size(&self) -> usize {
        self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_graph, KernelSpec, SampleSet};
    use crate::spectral::laplacian;

    #[test]
    fn solves_shifted_system() {
        let xs: Vec<f64> = (0..200).map(|i| ((i * 7919) % 200) as f64 / 40.0).collect();
        let s = SampleSet::from_line(&xs, None).unwrap();
        let g = build_graph(&s, 0.2, &KernelSpec::default()).unwrap();
        let op = laplacian(&g, 1).unwrap();
        let sigma = 0.3;
        let chol = EnvelopeCholesky::new(&op, sigma).unwrap();
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![0.0; 200];
        chol.solve(&b, &mut x);
        let lx = op.apply(&x);
        for i in 0..200 {
            assert!((lx[i] + sigma * x[i] - b[i]).abs() < 1e-9);
        }
        // shuffled 1-D points reorder into a band
        assert!(chol.envelope_size() < 200 * 20);
    }

    #[test]
    fn rcm_is_a_permutation_with_isolated_vertices() {
        let s = SampleSet::from_line(&[0.0, 0.1, 5.0, 0.2, 9.0], None).unwrap();
        let g = build_graph(&s, 0.15, &KernelSpec::Indicator).unwrap();
        let mut order = reverse_cuthill_mckee(&g);
        order.sort();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }
}
