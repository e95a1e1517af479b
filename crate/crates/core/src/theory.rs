//! Numerical laboratory for the negative-sample gradient analysis.
//!
//! Synthesizes semantic-block feature models (core semantic plus bounded
//! per-node deviation), evaluates the InfoNCE similarity gradient in
//! closed form, sums it over intra-block and inter-block negative
//! partitions, and reports the residual of the balance threshold
//! P e^{1/tau} = sum_inter e^{theta/tau}.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Stage};

/// Features decomposed as x_i = s_{block(i)} + eps_i with ||eps_i|| <= delta.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticBlockModel {
    /// k x dim core semantics.
    pub core_semantics: Array2<f64>,
    /// n x dim per-node deviations.
    pub deviations: Array2<f64>,
    /// Block id per node.
    pub assignments: Vec<usize>,
    /// Allowable deviation delta.
    pub deviation_bound: f64,
}

impl SemanticBlockModel {
    pub fn num_nodes(&self) -> usize {
        self.assignments.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.core_semantics.nrows()
    }

    /// Synthesized features: exactly core + deviation.
    pub fn features(&self) -> Array2<f64> {
        let mut x = self.deviations.clone();
        for (i, &b) in self.assignments.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &self.core_semantics.row(b);
        }
        x
    }

    /// Largest deviation norm; at most `deviation_bound` by construction.
    pub fn max_deviation_norm(&self) -> f64 {
        self.deviations
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Core semantic vectors pairwise at distance >= `separation`. When k fits
/// in the ambient dimension the cores sit on a scaled random orthonormal
/// frame, making every pairwise distance exactly `separation`; otherwise
/// rejection sampling with a growing scale takes over.
pub fn separated_cores(
    k: usize,
    dim: usize,
    separation: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if separation <= 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("separation must be > 0, got {separation}"),
        });
    }
    if k <= dim {
        let gaussian = nalgebra::DMatrix::<f64>::from_fn(dim, dim, |_, _| {
            StandardNormal.sample(rng)
        });
        let qr = gaussian.qr();
        let q = qr.q();
        let scale = separation / 2.0f64.sqrt();
        return Ok((0..k)
            .map(|j| q.column(j).iter().map(|v| v * scale).collect())
            .collect());
    }
    // more blocks than dimensions: sample at increasing scale until all
    // pairwise distances clear the bar
    let mut scale = separation;
    for _ in 0..64 {
        'attempt: for _ in 0..256 {
            let cores: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..dim)
                        .map(|_| {
                            let g: f64 = StandardNormal.sample(rng);
                            g * scale
                        })
                        .collect()
                })
                .collect();
            for i in 0..k {
                for j in (i + 1)..k {
                    let d2: f64 = cores[i]
                        .iter()
                        .zip(&cores[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2.sqrt() < separation {
                        continue 'attempt;
                    }
                }
            }
            return Ok(cores);
        }
        scale *= 2.0;
    }
    Err(Error::Msg(format!(
        "could not place {k} cores at separation {separation} in dimension {dim}"
    )))
}

/// Build a semantic-block test bed: cores pairwise `separation` apart,
/// deviations uniform in the delta-ball.
pub fn synthesize_blocks(
    k: usize,
    dim: usize,
    separation: f64,
    delta: f64,
    nodes_per_block: usize,
    seed: u64,
) -> Result<SemanticBlockModel> {
    if k == 0 || dim == 0 || nodes_per_block == 0 {
        return Err(Error::InvalidConfig {
            reason: "k, dim and nodes_per_block must be >= 1".into(),
        });
    }
    if delta < 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("delta must be >= 0, got {delta}"),
        });
    }
    let mut rng = rng::stage_rng(seed, Stage::Synth, 1);
    let cores = separated_cores(k, dim, separation, &mut rng)?;
    let mut core_semantics = Array2::zeros((k, dim));
    for (i, c) in cores.iter().enumerate() {
        for (j, &v) in c.iter().enumerate() {
            core_semantics[[i, j]] = v;
        }
    }
    let n = k * nodes_per_block;
    let mut deviations = Array2::zeros((n, dim));
    for mut row in deviations.rows_mut() {
        let eps = sample_ball(dim, delta, &mut rng);
        for (slot, v) in row.iter_mut().zip(&eps) {
            *slot = *v;
        }
    }
    let assignments: Vec<usize> = (0..n).map(|v| v / nodes_per_block).collect();
    Ok(SemanticBlockModel {
        core_semantics,
        deviations,
        assignments,
        deviation_bound: delta,
    })
}

/// Uniform sample from the delta-ball: Gaussian direction, radius
/// delta * U^(1/dim).
fn sample_ball(dim: usize, delta: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if delta == 0.0 {
        return vec![0.0; dim];
    }
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        let u: f64 = rng.gen_range(0.0..1.0f64);
        let radius = delta * u.powf(1.0 / dim as f64);
        return dir.into_iter().map(|d| d / norm * radius).collect();
    }
}

/// (max intra-block deviation difference, min inter-block feature distance).
pub fn block_diff_stats(model: &SemanticBlockModel) -> Result<(f64, f64)> {
    let k = model.num_blocks();
    let mut counts = vec![0usize; k];
    for &b in &model.assignments {
        counts[b] += 1;
    }
    if k < 2 || counts.iter().any(|&c| c < 2) {
        return Err(Error::InvalidConfig {
            reason: "block stats need >= 2 blocks with >= 2 nodes each".into(),
        });
    }
    let n = model.num_nodes();
    let x = model.features();
    let mut max_intra = 0.0f64;
    let mut min_inter = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            if model.assignments[i] == model.assignments[j] {
                let d = (&model.deviations.row(i) - &model.deviations.row(j))
                    .mapv(|v| v * v)
                    .sum()
                    .sqrt();
                max_intra = max_intra.max(d);
            } else {
                let d = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                min_inter = min_inter.min(d);
            }
        }
    }
    Ok((max_intra, min_inter))
}

/// Derivative of the InfoNCE loss with respect to the similarity of one
/// negative pair: (1/tau) e^{theta_t/tau} / (e^{pos/tau} + sum_j e^{theta_j/tau}).
pub fn infonce_similarity_gradient(
    pos_sim: f64,
    neg_sims: &[f64],
    target: usize,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("tau must be > 0, got {tau}"),
        });
    }
    if target >= neg_sims.len() {
        return Err(Error::InvalidConfig {
            reason: format!(
                "target pair {target} out of range for {} negatives",
                neg_sims.len()
            ),
        });
    }
    let max_e = neg_sims
        .iter()
        .copied()
        .fold(pos_sim, f64::max)
        / tau;
    let denom = ((pos_sim / tau) - max_e).exp()
        + neg_sims
            .iter()
            .map(|&s| ((s / tau) - max_e).exp())
            .sum::<f64>();
    Ok(((neg_sims[target] / tau) - max_e).exp() / denom / tau)
}

/// Per-anchor gradient sums over the two negative partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// Sum of similarity gradients over same-block negatives.
    pub sg_intra: f64,
    /// Sum over different-block negatives.
    pub sg_inter: f64,
    /// sg_inter / sg_intra; +inf when sg_intra is zero.
    pub ratio: f64,
    /// P e^{1/tau} - sum_inter e^{theta/tau}.
    pub threshold_residual: f64,
    /// Number of same-block peers of the anchor.
    pub p: usize,
    pub tau: f64,
}

/// Direct summation over explicit similarity partitions. The positive
/// similarity enters only the shared denominator.
pub fn gradient_sums_from_similarities(
    intra_sims: &[f64],
    inter_sims: &[f64],
    pos_sim: f64,
    tau: f64,
) -> Result<GradientReport> {
    if tau <= 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("tau must be > 0, got {tau}"),
        });
    }
    if intra_sims.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "anchor needs at least one same-block peer (P >= 1)".into(),
        });
    }
    let denom = (pos_sim / tau).exp()
        + intra_sims.iter().map(|&s| (s / tau).exp()).sum::<f64>()
        + inter_sims.iter().map(|&s| (s / tau).exp()).sum::<f64>();
    let sg = |sims: &[f64]| {
        sims.iter()
            .map(|&s| (s / tau).exp() / denom / tau)
            .sum::<f64>()
    };
    let sg_intra = sg(intra_sims);
    let sg_inter = sg(inter_sims);
    let ratio = if sg_intra == 0.0 {
        f64::INFINITY
    } else {
        sg_inter / sg_intra
    };
    let p = intra_sims.len();
    let threshold_residual = p as f64 * (1.0 / tau).exp()
        - inter_sims.iter().map(|&s| (s / tau).exp()).sum::<f64>();
    Ok(GradientReport {
        sg_intra,
        sg_inter,
        ratio,
        threshold_residual,
        p,
        tau,
    })
}

/// Gradient sums for one anchor over cosine similarities of `embeddings`,
/// partitioned by block label. The anchor's positive similarity is taken
/// as 1 (its own augmented copy).
pub fn gradient_sums(
    embeddings: &ArrayView2<f64>,
    labels: &[usize],
    anchor: usize,
    tau: f64,
) -> Result<GradientReport> {
    let n = embeddings.nrows();
    if labels.len() != n {
        return Err(Error::dim(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            n
        )));
    }
    if anchor >= n {
        return Err(Error::NodeIdOutOfRange {
            id: anchor,
            num_nodes: n,
        });
    }
    let anchor_row: Vec<f64> = embeddings.row(anchor).to_vec();
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for j in 0..n {
        if j == anchor {
            continue;
        }
        let row: Vec<f64> = embeddings.row(j).to_vec();
        let sim = linalg::cosine(&anchor_row, &row)
            .ok_or(Error::ZeroNormEmbedding { row: j })?;
        if labels[j] == labels[anchor] {
            intra.push(sim);
        } else {
            inter.push(sim);
        }
    }
    gradient_sums_from_similarities(&intra, &inter, 1.0, tau)
}

/// Sweep grid: the anchor's block grows through `counts` while every
/// other block keeps `inter_per_block` nodes, so the inter negative set
/// stays fixed as same-block negatives accumulate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub blocks: usize,
    pub dim: usize,
    pub separation: f64,
    pub delta: f64,
    /// Nodes in each non-anchor block.
    pub inter_per_block: usize,
    pub seed: u64,
}

pub fn threshold_sweep(
    cfg: &SweepConfig,
    counts: &[usize],
    taus: &[f64],
) -> Result<Vec<GradientReport>> {
    if cfg.blocks < 2 || cfg.inter_per_block == 0 {
        return Err(Error::InvalidConfig {
            reason: "sweep needs >= 2 blocks and inter_per_block >= 1".into(),
        });
    }
    let mut out = Vec::with_capacity(counts.len() * taus.len());
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::InvalidConfig {
                reason: "counts must be >= 1".into(),
            });
        }
        let mut rng = rng::stage_rng(cfg.seed, Stage::Synth, 2 + i as u64);
        let cores = separated_cores(cfg.blocks, cfg.dim, cfg.separation, &mut rng)?;
        let mut core_semantics = Array2::zeros((cfg.blocks, cfg.dim));
        for (b, c) in cores.iter().enumerate() {
            for (j, &v) in c.iter().enumerate() {
                core_semantics[[b, j]] = v;
            }
        }
        let mut assignments = vec![0usize; count];
        for b in 1..cfg.blocks {
            assignments.extend(std::iter::repeat(b).take(cfg.inter_per_block));
        }
        let n = assignments.len();
        let mut deviations = Array2::zeros((n, cfg.dim));
        for mut row in deviations.rows_mut() {
            let eps = sample_ball(cfg.dim, cfg.delta, &mut rng);
            for (slot, v) in row.iter_mut().zip(&eps) {
                *slot = *v;
            }
        }
        let model = SemanticBlockModel {
            core_semantics,
            deviations,
            assignments,
            deviation_bound: cfg.delta,
        };
        let x = model.features();
        for &tau in taus {
            out.push(gradient_sums(&x.view(), &model.assignments, 0, tau)?);
        }
    }
    Ok(out)
}

/// CSV emission for external plotting.
pub fn write_gradient_reports_csv(path: &Path, reports: &[GradientReport]) -> Result<()> {
    let mut out = String::from("p,tau,sg_intra,sg_inter,ratio,threshold_residual\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.p, r.tau, r.sg_intra, r.sg_inter, r.ratio, r.threshold_residual
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_delta_collapses_blocks_to_cores() {
        let m = synthesize_blocks(3, 5, 10.0, 0.0, 4, 1).unwrap();
        assert_eq!(m.max_deviation_norm(), 0.0);
        let x = m.features();
        for i in 0..m.num_nodes() {
            let b = m.assignments[i];
            assert_eq!(x.row(i), m.core_semantics.row(b));
        }
        let (max_intra, min_inter) = block_diff_stats(&m).unwrap();
        assert_eq!(max_intra, 0.0);
        // cores on an orthonormal frame: every pair exactly `separation` apart
        assert_abs_diff_eq!(min_inter, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn single_block_pairwise_diffs_bounded_by_2_delta() {
        let m = synthesize_blocks(1, 4, 1.0, 0.3, 20, 2).unwrap();
        assert!(m.max_deviation_norm() <= 0.3 + 1e-12);
        let x = m.features();
        for i in 0..20 {
            for j in (i + 1)..20 {
                let d = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                assert!(d <= 0.6 + 1e-12, "pair ({i},{j}) differs by {d}");
            }
        }
    }

    #[test]
    fn inter_distances_near_separation_when_delta_small() {
        let m = synthesize_blocks(3, 6, 10.0, 0.1, 5, 3).unwrap();
        let x = m.features();
        for i in 0..m.num_nodes() {
            for j in (i + 1)..m.num_nodes() {
                if m.assignments[i] != m.assignments[j] {
                    let d = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                    assert!((9.8..=10.2).contains(&d), "inter distance {d} out of band");
                }
            }
        }
    }

    #[test]
    fn block_diff_stats_match_brute_force() {
        let m = synthesize_blocks(3, 4, 5.0, 0.5, 6, 4).unwrap();
        let (max_intra, min_inter) = block_diff_stats(&m).unwrap();
        // independent O(n^2) scan over scalar loops
        let x = m.features();
        let n = m.num_nodes();
        let mut bi = 0.0f64;
        let mut be = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut de = 0.0;
                let mut dx = 0.0;
                for c in 0..4 {
                    let a = m.deviations[[i, c]] - m.deviations[[j, c]];
                    de += a * a;
                    let b = x[[i, c]] - x[[j, c]];
                    dx += b * b;
                }
                if m.assignments[i] == m.assignments[j] {
                    bi = bi.max(de.sqrt());
                } else {
                    be = be.min(dx.sqrt());
                }
            }
        }
        assert_abs_diff_eq!(max_intra, bi, epsilon = 1e-12);
        assert_abs_diff_eq!(min_inter, be, epsilon = 1e-12);
    }

    #[test]
    fn triangle_bound_holds_exactly() {
        let m = synthesize_blocks(2, 3, 4.0, 1.0, 8, 5).unwrap();
        let (max_intra, min_inter) = block_diff_stats(&m).unwrap();
        let core_dist = (&m.core_semantics.row(0) - &m.core_semantics.row(1))
            .mapv(|v| v * v)
            .sum()
            .sqrt();
        assert!(min_inter >= core_dist - 2.0 * m.deviation_bound - 1e-12);
        assert!(min_inter >= core_dist - max_intra - 1e-12);
    }

    #[test]
    fn uniform_similarities_give_uniform_gradient() {
        // all sims equal theta with m negatives: gradient = 1/(tau (m+1))
        let theta = 0.4;
        let m = 7;
        let negs = vec![theta; m];
        for target in 0..m {
            let g = infonce_similarity_gradient(theta, &negs, target, 0.5).unwrap();
            assert_abs_diff_eq!(g, 1.0 / (0.5 * (m as f64 + 1.0)), epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_single_negative() {
        // tau=1, pos=1, one negative at 0 -> 1/(e + 1)
        let g = infonce_similarity_gradient(1.0, &[0.0], 0, 1.0).unwrap();
        assert_abs_diff_eq!(g, 1.0 / (1f64.exp() + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference_of_scalar_loss() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let tau = 0.7f64;
        let pos = 0.8f64;
        let negs: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |sims: &[f64]| -> f64 {
            let denom = (pos / tau).exp() + sims.iter().map(|&s| (s / tau).exp()).sum::<f64>();
            -((pos / tau).exp() / denom).ln()
        };
        let h = 1e-6;
        for t in 0..negs.len() {
            let mut up = negs.clone();
            up[t] += h;
            let mut dn = negs.clone();
            dn[t] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            let g = infonce_similarity_gradient(pos, &negs, t, tau).unwrap();
            assert_abs_diff_eq!(g, fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn gradient_positive_and_increasing_in_theta() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let negs: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tau = rng.gen_range(0.2..1.5);
            let pos = rng.gen_range(-1.0..1.0);
            let mut prev: Option<f64> = None;
            for theta in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                let mut sims = negs.clone();
                sims[2] = theta;
                let g = infonce_similarity_gradient(pos, &sims, 2, tau).unwrap();
                assert!(g > 0.0);
                if let Some(p) = prev {
                    assert!(g > p, "gradient must increase in theta");
                }
                prev = Some(g);
            }
        }
    }

    #[test]
    fn softmax_mass_bound() {
        // sum over ALL pair gradients times tau <= 1
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let tau = rng.gen_range(0.2..2.0);
            let pos = rng.gen_range(-1.0..1.0);
            let negs: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let total: f64 = (0..negs.len())
                .map(|t| infonce_similarity_gradient(pos, &negs, t, tau).unwrap())
                .sum();
            assert!(total * tau <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn balance_point_equalizes_partition_sums() {
        // intra sims exactly 1; inter solved so P e^{1/tau} = sum e^{theta/tau}
        let tau = 0.8f64;
        let p = 4usize;
        let m = 12usize;
        let theta = tau * ((p as f64) * (1.0 / tau).exp() / m as f64).ln();
        assert!((-1.0..=1.0).contains(&theta));
        let intra = vec![1.0; p];
        let inter = vec![theta; m];
        let rep = gradient_sums_from_similarities(&intra, &inter, 1.0, tau).unwrap();
        assert!((rep.sg_intra - rep.sg_inter).abs() <= 1e-9);
        assert!(rep.threshold_residual.abs() <= 1e-9);
    }

    #[test]
    fn no_inter_negatives_means_zero_inter_sum() {
        let rep = gradient_sums_from_similarities(&[1.0, 1.0, 1.0], &[], 1.0, 1.0).unwrap();
        assert_eq!(rep.sg_inter, 0.0);
        assert_eq!(rep.ratio, 0.0);
        assert!(rep.sg_intra > 0.0);
    }

    #[test]
    fn residual_zero_for_matched_single_pair() {
        // tau=1, P=1, one inter pair at theta=1: residual = e - e = 0
        let rep = gradient_sums_from_similarities(&[1.0], &[1.0], 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(rep.threshold_residual, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn adding_intra_peers_strictly_increases_sg_intra() {
        let inter = vec![0.1, -0.2, 0.4, 0.0];
        let mut prev = 0.0;
        for p in 1..8 {
            let intra = vec![0.9; p];
            let rep = gradient_sums_from_similarities(&intra, &inter, 1.0, 0.5).unwrap();
            assert!(rep.sg_intra > prev, "P={p}: {} !> {prev}", rep.sg_intra);
            prev = rep.sg_intra;
        }
    }

    #[test]
    fn sweep_shows_intra_overtaking_inter() {
        let cfg = SweepConfig {
            blocks: 4,
            dim: 8,
            separation: 6.0,
            delta: 0.3,
            inter_per_block: 20,
            seed: 11,
        };
        let counts = [2usize, 8, 64];
        let reports = threshold_sweep(&cfg, &counts, &[0.5]).unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert!(r.sg_intra >= 0.0 && r.sg_inter >= 0.0);
            assert!(r.sg_intra.is_finite() && r.sg_inter.is_finite());
        }
        // few same-block peers, many well-separated inter negatives:
        // inter-dominated
        assert!(reports[0].ratio > 1.0, "ratio {}", reports[0].ratio);
        // accumulating same-block negatives flips the balance
        assert!(reports[2].ratio < reports[0].ratio);
        assert!(reports[2].sg_intra > reports[0].sg_intra);
    }

    #[test]
    fn sweep_grid_cardinality() {
        let cfg = SweepConfig {
            blocks: 3,
            dim: 6,
            separation: 5.0,
            delta: 0.2,
            inter_per_block: 10,
            seed: 12,
        };
        let reports = threshold_sweep(&cfg, &[2, 4, 8], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(reports.len(), 9);
    }
}
