//! Static kd-tree over a flat row-major point buffer, used for radius queries.

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub struct KdTree<'a> {
    coords: &'a [f64],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(coords: &'a [f64], dim: usize) -> Self {
        let n = coords.len() / dim;
        let mut tree = KdTree {
            coords,
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn coord(&self, i: usize, k: usize) -> f64 {
        self.coords[i * self.dim + k]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // split on the axis of largest spread
        let mut best = (0, -1.0);
        for k in 0..self.dim {
            let (lo, hi) = self.order[start..end]
                .iter()
                .map(|&i| self.coord(i, k))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if hi - lo > best.1 {
                best = (k, hi - lo);
            }
        }
        let dim = best.0;
        let mid = start + (end - start) / 2;
        let coords = self.coords;
        let d = self.dim;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * d + dim].total_cmp(&coords[b * d + dim])
        });
        let value = self.coord(self.order[mid], dim);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        slot
    }

    /// Indices of all points whose every coordinate box could lie within `radius`
    /// of `query`. Callers apply the exact distance predicate themselves.
    pub fn candidates(&self, query: &[f64], radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { start, end } => out.extend_from_slice(&self.order[start..end]),
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let delta = query[dim] - value;
                    // left holds coordinates <= value, right holds >= value
                    if delta <= radius {
                        stack.push(left);
                    }
                    if -delta <= radius {
                        stack.push(right);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_every_point_in_radius() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let dim = 3;
        let coords: Vec<f64> = (0..600 * dim).map(|_| next()).collect();
        let tree = KdTree::new(&coords, dim);
        let mut out = Vec::new();
        for q in 0..50 {
            let query = &coords[q * dim..(q + 1) * dim];
            tree.candidates(query, 0.2, &mut out);
            for j in 0..600 {
                let p = &coords[j * dim..(j + 1) * dim];
                let dist: f64 = p.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if dist <= 0.2 {
                    assert!(out.contains(&j));
                }
            }
        }
    }
}
