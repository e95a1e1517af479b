//! Sparse undirected graph with dense node features and optional labels.
//!
//! Adjacency is CSR with sorted neighbour lists. Graphs are immutable after
//! construction and safe to share across threads.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Undirected graph: N nodes, symmetric adjacency without self-loops or
/// duplicate edges, N x F feature matrix, optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    num_classes: usize,
}

/// Counts reported by construction: edges dropped or merged during
/// symmetrization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
}

impl Graph {
    /// Build from raw (possibly directed, possibly duplicated) edge pairs.
    /// Edges are symmetrized and deduplicated; self-loops are dropped and
    /// counted. The node count is fixed by the feature matrix.
    pub fn from_edges(
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<(Self, IngestReport)> {
        let n = features.nrows();
        let mut report = IngestReport::default();
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        let mut max_id = 0usize;
        for &(a, b) in edges {
            max_id = max_id.max(a).max(b);
            if a == b {
                report.self_loops_dropped += 1;
                continue;
            }
            pairs.push((a.min(b), a.max(b)));
        }
        if max_id >= n && !edges.is_empty() {
            return Err(Error::FeatureRowMismatch {
                feature_rows: n,
                max_node_id: max_id,
            });
        }
        pairs.sort_unstable();
        let before = pairs.len();
        pairs.dedup();
        report.duplicate_edges_dropped = before - pairs.len();

        let mut degree = vec![0usize; n];
        for &(a, b) in &pairs {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + degree[i];
        }
        let mut cursor = row_ptr.clone();
        let mut col_idx = vec![0usize; pairs.len() * 2];
        for &(a, b) in &pairs {
            col_idx[cursor[a]] = b;
            cursor[a] += 1;
            col_idx[cursor[b]] = a;
            cursor[b] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }

        let num_classes = match &labels {
            Some(l) => {
                if l.len() != n {
                    return Err(Error::LabelCountMismatch {
                        labels: l.len(),
                        num_nodes: n,
                    });
                }
                l.iter().copied().max().map_or(0, |m| m + 1)
            }
            None => 0,
        };

        Ok((
            Self {
                num_nodes: n,
                row_ptr,
                col_idx,
                features,
                labels,
                num_classes,
            },
            report,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Undirected edges as (min, max) pairs in lexicographic order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for v in 0..self.num_nodes {
            for &u in self.neighbors(v) {
                if v < u {
                    out.push((v, u));
                }
            }
        }
        out
    }

    /// Per-node degree; entries sum to 2|E|.
    pub fn degree_vector(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|v| self.degree(v)).collect()
    }

    /// Symmetric normalized Laplacian L = I - D^{-1/2} A D^{-1/2}.
    ///
    /// Isolated nodes take D^{-1/2} = 0, leaving a bare diagonal 1 for that
    /// row. All eigenvalues lie in [0, 2].
    pub fn normalized_laplacian(&self) -> SparseOperator {
        let inv_sqrt: Vec<f64> = (0..self.num_nodes)
            .map(|v| {
                let d = self.degree(v);
                if d == 0 {
                    0.0
                } else {
                    1.0 / (d as f64).sqrt()
                }
            })
            .collect();
        let mut triplets = Vec::with_capacity(self.col_idx.len() + self.num_nodes);
        for v in 0..self.num_nodes {
            triplets.push((v, v, 1.0));
            for &u in self.neighbors(v) {
                triplets.push((v, u, -inv_sqrt[v] * inv_sqrt[u]));
            }
        }
        SparseOperator::from_triplets(self.num_nodes, triplets)
            .expect("laplacian indices are in range by construction")
    }

    /// GCN propagation over the original graph with self-loops:
    /// D~^{-1/2} (A + I) D~^{-1/2} where D~ counts the self-loop.
    pub fn gcn_propagation_operator(&self) -> SparseOperator {
        let inv_sqrt: Vec<f64> = (0..self.num_nodes)
            .map(|v| 1.0 / ((self.degree(v) + 1) as f64).sqrt())
            .collect();
        let mut triplets = Vec::with_capacity(self.col_idx.len() + self.num_nodes);
        for v in 0..self.num_nodes {
            triplets.push((v, v, inv_sqrt[v] * inv_sqrt[v]));
            for &u in self.neighbors(v) {
                triplets.push((v, u, inv_sqrt[v] * inv_sqrt[u]));
            }
        }
        SparseOperator::from_triplets(self.num_nodes, triplets)
            .expect("propagation indices are in range by construction")
    }

    /// Nodes within `hops` of `source` (source included), in BFS discovery
    /// order: distance layers first, sorted-adjacency order within a layer.
    /// With `cap`, the nearest `cap` nodes are kept; ties break by BFS order.
    pub fn k_hop_node_set(&self, source: usize, hops: usize, cap: Option<usize>) -> Vec<usize> {
        debug_assert!(source < self.num_nodes);
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            // BFS discovery order is nearest-first, so the quota can cut
            // the walk short without missing a closer node.
            if cap.is_some_and(|c| order.len() == c) {
                break;
            }
            if dist[v] == hops {
                continue;
            }
            for &u in self.neighbors(v) {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        order
    }

    /// BFS distances from `source`; unreachable nodes get `usize::MAX`.
    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.num_nodes];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &u in self.neighbors(v) {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        dist
    }

    /// Connected components as a component id per node.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut count = 0;
        for s in 0..self.num_nodes {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::new();
            comp[s] = count;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &u in self.neighbors(v) {
                    if comp[u] == usize::MAX {
                        comp[u] = count;
                        queue.push_back(u);
                    }
                }
            }
            count += 1;
        }
        (count, comp)
    }
}
