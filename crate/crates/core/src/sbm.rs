//! Stochastic block model generator with planted labels.
//!
//! Node features follow the core-semantic decomposition x = s_b + eps:
//! block cores sit pairwise `separation` apart and per-node deviations are
//! Gaussian with per-coordinate standard deviation `deviation`. (The
//! analysis test-bed in [`crate::theory`] uses hard ball-bounded
//! deviations instead; the dataset generator wants overlapping classes so
//! downstream probes have something to disagree about.)

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, Stage};
use crate::theory::separated_cores;

#[derive(Debug, Clone, PartialEq)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    /// Within-block edge probability.
    pub p_in: f64,
    /// Cross-block edge probability.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Pairwise distance between block core semantics.
    pub separation: f64,
    /// Gaussian feature noise scale (per coordinate).
    pub deviation: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn num_nodes(&self) -> usize {
        self.blocks * self.nodes_per_block
    }

    pub fn block_of(&self, node: usize) -> usize {
        node / self.nodes_per_block
    }

    fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.nodes_per_block == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidConfig {
                reason: "blocks, nodes_per_block and feature_dim must be >= 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.p_in)
            || !(0.0..=1.0).contains(&self.p_out)
            || self.p_out >= self.p_in
        {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                    self.p_in, self.p_out
                ),
            });
        }
        if self.deviation < 0.0 || self.separation <= 0.0 {
            return Err(Error::InvalidConfig {
                reason: "separation must be > 0 and deviation >= 0".into(),
            });
        }
        Ok(())
    }
}

/// Sample a graph with planted blocks; labels carry the block ids.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let mut rng = rng::stage_rng(cfg.seed, Stage::Synth, 0);

    let cores = separated_cores(cfg.blocks, cfg.feature_dim, cfg.separation, &mut rng)?;
    let mut features = Array2::zeros((n, cfg.feature_dim));
    for v in 0..n {
        let core = &cores[cfg.block_of(v)];
        for (j, f) in features.row_mut(v).iter_mut().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *f = core[j] + cfg.deviation * noise;
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if cfg.block_of(i) == cfg.block_of(j) {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.gen_range(0.0..1.0) < p {
                edges.push((i, j));
            }
        }
    }

    let labels: Vec<usize> = (0..n).map(|v| cfg.block_of(v)).collect();
    Graph::from_edges(&edges, features, Some(labels)).map(|(g, _)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cross_probability_gives_disconnected_blocks() {
        let g = generate_sbm(&SbmConfig {
            blocks: 3,
            nodes_per_block: 15,
            p_in: 0.4,
            p_out: 0.0,
            feature_dim: 4,
            separation: 2.0,
            deviation: 0.5,
            seed: 1,
        })
        .unwrap();
        let (count, comp) = g.connected_components();
        // p_in = 0.4 on 15 nodes leaves each block connected with high
        // probability at this seed; blocks never touch each other
        assert_eq!(count, 3);
        for v in 0..g.num_nodes() {
            for &u in g.neighbors(v) {
                assert_eq!(comp[v], comp[u]);
                assert_eq!(v / 15, u / 15);
            }
        }
    }

    #[test]
    fn zero_deviation_gives_identical_block_features() {
        let g = generate_sbm(&SbmConfig {
            blocks: 2,
            nodes_per_block: 5,
            p_in: 0.5,
            p_out: 0.1,
            feature_dim: 3,
            separation: 2.0,
            deviation: 0.0,
            seed: 2,
        })
        .unwrap();
        for b in 0..2 {
            let first = g.features().row(b * 5).to_owned();
            for v in (b * 5)..(b * 5 + 5) {
                assert_eq!(g.features().row(v), first.view());
            }
        }
    }

    #[test]
    fn realized_density_is_within_3_sigma() {
        let cfg = SbmConfig {
            blocks: 2,
            nodes_per_block: 60,
            p_in: 0.2,
            p_out: 0.03,
            feature_dim: 2,
            separation: 2.0,
            deviation: 0.5,
            seed: 3,
        };
        let g = generate_sbm(&cfg).unwrap();
        let mut intra = 0usize;
        let mut inter = 0usize;
        for (a, b) in g.edge_list() {
            if cfg.block_of(a) == cfg.block_of(b) {
                intra += 1;
            } else {
                inter += 1;
            }
        }
        let intra_pairs = 2.0 * (60.0 * 59.0 / 2.0);
        let inter_pairs = 60.0 * 60.0;
        for (count, pairs, p) in [
            (intra as f64, intra_pairs, cfg.p_in),
            (inter as f64, inter_pairs, cfg.p_out),
        ] {
            let mean = pairs * p;
            let sigma = (pairs * p * (1.0 - p)).sqrt();
            assert!(
                (count - mean).abs() <= 3.0 * sigma,
                "count {count} outside {mean} +- 3*{sigma}"
            );
        }
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let mut cfg = SbmConfig {
            blocks: 2,
            nodes_per_block: 5,
            p_in: 0.1,
            p_out: 0.1,
            feature_dim: 2,
            separation: 1.0,
            deviation: 0.0,
            seed: 0,
        };
        assert!(generate_sbm(&cfg).is_err()); // p_out == p_in
        cfg.p_out = 0.05;
        assert!(generate_sbm(&cfg).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SbmConfig {
            blocks: 2,
            nodes_per_block: 10,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 3,
            separation: 2.0,
            deviation: 1.0,
            seed: 9,
        };
        let a = generate_sbm(&cfg).unwrap();
        let b = generate_sbm(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
