//! Star-topology reconstruction and center-swap augmentation.
//!
//! The reconstructed graph is a forest of disjoint directed stars: each
//! cluster center claims nodes from its k-hop ball, every claimed member
//! gets a single directed edge into its center, and no node belongs to two
//! stars. The augmented view keeps every star's member set but re-roots it
//! at a different center via a uniformly random derangement.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::SparseOperator;
use crate::spectral::ClusterModel;

/// One directed star: `members` each point at `center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarSubgraph {
    pub center: usize,
    /// Claim order: nearest BFS layer first.
    pub members: Vec<usize>,
}

/// Disjoint directed star subgraphs over the original node set. Features
/// stay with the original graph; only indices live here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructedGraph {
    pub num_nodes: usize,
    pub subgraphs: Vec<StarSubgraph>,
}

/// The center-swapped view: star i keeps the member set of star i in the
/// base reconstruction but is re-rooted at `base.subgraphs[perm[i]].center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedGraph {
    pub base: ReconstructedGraph,
    /// Derangement over star indices: `perm[i] != i` for all i when k >= 2.
    pub center_permutation: Vec<usize>,
}

impl ReconstructedGraph {
    pub fn k(&self) -> usize {
        self.subgraphs.len()
    }

    /// All (member -> center) directed edges.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in &self.subgraphs {
            for &m in &s.members {
                out.push((m, s.center));
            }
        }
        out
    }

    pub fn centers(&self) -> Vec<usize> {
        self.subgraphs.iter().map(|s| s.center).collect()
    }

    /// Row-stochastic propagation operator: each center row averages its
    /// members plus itself (in-degree + 1); every other node keeps an
    /// identity row.
    pub fn propagation_operator(&self) -> SparseOperator {
        star_operator(
            self.num_nodes,
            self.subgraphs.iter().map(|s| (s.center, &s.members)),
        )
    }
}

impl AugmentedGraph {
    pub fn k(&self) -> usize {
        self.base.k()
    }

    /// Center occupying star `i` in this view.
    pub fn center_of_star(&self, i: usize) -> usize {
        self.base.subgraphs[self.center_permutation[i]].center
    }

    pub fn centers(&self) -> Vec<usize> {
        (0..self.k()).map(|i| self.center_of_star(i)).collect()
    }

    /// As [`ReconstructedGraph::propagation_operator`], with each star's
    /// rows re-rooted at the swapped center.
    pub fn propagation_operator(&self) -> SparseOperator {
        star_operator(
            self.base.num_nodes,
            self.base
                .subgraphs
                .iter()
                .enumerate()
                .map(|(i, s)| (self.center_of_star(i), &s.members)),
        )
    }
}

fn star_operator<'a>(
    n: usize,
    stars: impl Iterator<Item = (usize, &'a Vec<usize>)>,
) -> SparseOperator {
    let mut triplets = Vec::new();
    let mut is_center_row = vec![false; n];
    for (center, members) in stars {
        let w = 1.0 / (members.len() + 1) as f64;
        triplets.push((center, center, w));
        for &m in members {
            triplets.push((center, m, w));
        }
        is_center_row[center] = true;
    }
    for v in 0..n {
        if !is_center_row[v] {
            triplets.push((v, v, 1.0));
        }
    }
    SparseOperator::from_triplets(n, triplets).expect("star indices are in range by construction")
}

/// Build the reconstructed graph. Centers claim members in ascending
/// cluster-index order, nearest BFS layer first, each capped at
/// `neighbor_cap` members; a node already claimed (or another center) is
/// skipped, so member sets are disjoint. A center whose ball is exhausted
/// ends up a singleton star.
pub fn reconstruct(
    g: &Graph,
    clusters: &ClusterModel,
    hops: usize,
    neighbor_cap: usize,
) -> Result<ReconstructedGraph> {
    if hops == 0 || neighbor_cap == 0 {
        return Err(Error::InvalidConfig {
            reason: format!("reconstruct needs hops >= 1 and neighbor_cap >= 1 (hops={hops}, cap={neighbor_cap})"),
        });
    }
    let n = g.num_nodes();
    let mut claimed = vec![false; n];
    for &c in &clusters.centers {
        if c >= n {
            return Err(Error::NodeIdOutOfRange {
                id: c,
                num_nodes: n,
            });
        }
        claimed[c] = true; // centers are never members
    }
    let mut subgraphs = Vec::with_capacity(clusters.centers.len());
    for &center in &clusters.centers {
        let ball = g.k_hop_node_set(center, hops, None);
        let mut members = Vec::new();
        for v in ball {
            if members.len() == neighbor_cap {
                break;
            }
            if !claimed[v] {
                claimed[v] = true;
                members.push(v);
            }
        }
        subgraphs.push(StarSubgraph { center, members });
    }
    Ok(ReconstructedGraph {
        num_nodes: n,
        subgraphs,
    })
}

/// Sample a uniformly random derangement of {0..k-1} by rejection over
/// Fisher-Yates permutations.
pub fn sample_derangement(k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::AugmentationNeedsTwoCenters);
    }
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        for i in (1..k).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(i, &p)| p != i) {
            return Ok(perm);
        }
    }
}

/// Center-swap augmentation: star i keeps its member set but takes the
/// center of star perm(i), with perm a uniform derangement. Deterministic
/// per RNG state.
pub fn augment(r: &ReconstructedGraph, rng: &mut ChaCha8Rng) -> Result<AugmentedGraph> {
    let perm = sample_derangement(r.k(), rng)?;
    Ok(AugmentedGraph {
        base: r.clone(),
        center_permutation: perm,
    })
}

/// The no-augmentation ablation: the identity "swap".
pub fn identity_view(r: &ReconstructedGraph) -> AugmentedGraph {
    AugmentedGraph {
        base: r.clone(),
        center_permutation: (0..r.k()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_chacha::rand_core::SeedableRng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(edges, Array2::zeros((n, 2)), None)
            .unwrap()
            .0
    }

    fn clusters(assignments: Vec<usize>, centers: Vec<usize>) -> ClusterModel {
        let k = centers.len();
        ClusterModel {
            assignments,
            centers,
            k,
        }
    }

    #[test]
    fn disjoint_one_hop_balls_on_a_path() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let cm = clusters(vec![0, 0, 0, 1, 1], vec![0, 4]);
        let r = reconstruct(&g, &cm, 1, 100).unwrap();
        assert_eq!(r.subgraphs[0].members, vec![1]);
        assert_eq!(r.subgraphs[1].members, vec![3]);
        // node 2 belongs to neither star
        let all: Vec<usize> = r.subgraphs.iter().flat_map(|s| s.members.clone()).collect();
        assert!(!all.contains(&2));
    }

    #[test]
    fn contested_node_goes_to_lower_cluster_index() {
        let g = graph(3, &[(0, 1), (1, 2)]);
        let cm = clusters(vec![0, 0, 1], vec![0, 2]);
        let r = reconstruct(&g, &cm, 2, 100).unwrap();
        assert_eq!(r.subgraphs[0].members, vec![1]);
        assert!(r.subgraphs[1].members.is_empty());
    }

    #[test]
    fn swap_of_two_is_the_only_derangement() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_derangement(2, &mut rng).unwrap(), vec![1, 0]);
        }
    }

    #[test]
    fn three_elements_have_two_derangements() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let p = sample_derangement(3, &mut rng).unwrap();
            assert!(p == vec![1, 2, 0] || p == vec![2, 0, 1], "not a derangement of 3: {p:?}");
        }
    }

    #[test]
    fn augment_rejects_single_center() {
        let r = ReconstructedGraph {
            num_nodes: 3,
            subgraphs: vec![StarSubgraph {
                center: 0,
                members: vec![1, 2],
            }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            augment(&r, &mut rng),
            Err(Error::AugmentationNeedsTwoCenters)
        ));
    }

    #[test]
    fn propagation_rows_are_stochastic() {
        let r = ReconstructedGraph {
            num_nodes: 6,
            subgraphs: vec![
                StarSubgraph {
                    center: 0,
                    members: vec![1, 2, 3],
                },
                StarSubgraph {
                    center: 4,
                    members: vec![],
                },
            ],
        };
        let op = r.propagation_operator();
        // center with 3 members: 4 entries of 1/4
        let row: Vec<(usize, f64)> = op.row(0).collect();
        assert_eq!(row.len(), 4);
        for (_, v) in row {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // singleton star center and unassigned node: identity rows
        assert_eq!(op.get(4, 4), 1.0);
        assert_eq!(op.get(5, 5), 1.0);
        for s in op.row_sums() {
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn augmented_operator_reroots_stars() {
        let r = ReconstructedGraph {
            num_nodes: 5,
            subgraphs: vec![
                StarSubgraph {
                    center: 0,
                    members: vec![1],
                },
                StarSubgraph {
                    center: 2,
                    members: vec![3, 4],
                },
            ],
        };
        let aug = AugmentedGraph {
            base: r,
            center_permutation: vec![1, 0],
        };
        assert_eq!(aug.center_of_star(0), 2);
        assert_eq!(aug.center_of_star(1), 0);
        let op = aug.propagation_operator();
        // star 0's member {1} now feeds center node 2
        assert_eq!(op.get(2, 1), 0.5);
        assert_eq!(op.get(2, 2), 0.5);
        // star 1's members {3,4} feed center node 0
        assert!((op.get(0, 3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((op.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
    }
}
