//! The training loop.
//!
//! Preprocessing (eigensolve, k-means, center selection, reconstruction)
//! runs once. Every epoch draws a fresh derangement, forwards both views
//! through the same encoder, computes the centers-only loss, and takes one
//! Adam step. Deterministic per seed with `threads = 1`.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::current_rss_bytes;
use crate::graph::Graph;
use crate::model::config::{TrainConfig, Variant};
use crate::model::{adam_step, anchor_features, loss_and_gradients, EncoderParams, ViewPair};
use crate::rng::{self, Stage};
use crate::spectral::{self, ClusterModel};
use crate::topology::{self, ReconstructedGraph};

/// Per-epoch log entry. `wall_ms` and `rss_bytes` are measurements and so
/// are the only non-reproducible fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub wall_ms: f64,
    pub rss_bytes: u64,
    /// Exact number of similarity terms in the loss stage.
    pub sim_terms: u64,
}

/// Everything preprocessing produces; persistable as a cache sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessArtifacts {
    pub bundle: spectral::SpectralBundle,
    pub clusters: ClusterModel,
    pub reconstruction: ReconstructedGraph,
}

/// Trained parameters plus the run log and the artifacts behind it.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: Vec<EpochRecord>,
    /// Absent for the full-sampling variant, which trains on the original
    /// graph directly.
    pub artifacts: Option<PreprocessArtifacts>,
}

/// Run preprocessing for a config: eigensolve, cluster, pick centers,
/// reconstruct. The random-sampling ablation replaces the spectral
/// pipeline with k uniformly random distinct centers.
pub fn preprocess(g: &Graph, cfg: &TrainConfig) -> Result<PreprocessArtifacts> {
    cfg.validate()?;
    let n = g.num_nodes();
    let k = cfg.clusters;
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    match cfg.variant {
        Variant::RandomSampling => {
            let mut rng = rng::stage_rng(cfg.seed, Stage::Preprocess, 2);
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            let centers: Vec<usize> = ids.into_iter().take(k).collect();
            let mut assignments = vec![0usize; n];
            for (j, &c) in centers.iter().enumerate() {
                assignments[c] = j;
            }
            let clusters = ClusterModel {
                assignments,
                centers,
                k,
            };
            let eig_k = cfg.effective_eig_k().min(n);
            // keep a trivial bundle so the artifact shape is uniform
            let bundle = spectral::SpectralBundle {
                eigenvalues: vec![0.0; eig_k],
                eigenvectors: ndarray::Array2::zeros((n, eig_k)),
            };
            let reconstruction = topology::reconstruct(g, &clusters, cfg.hops, cfg.neighbor_cap)?;
            Ok(PreprocessArtifacts {
                bundle,
                clusters,
                reconstruction,
            })
        }
        _ => {
            let eig_k = cfg.effective_eig_k();
            if eig_k > n {
                return Err(Error::KTooLarge { k: eig_k, n });
            }
            let laplacian = g.normalized_laplacian();
            let bundle = spectral::smallest_eigenpairs(
                &laplacian,
                eig_k,
                cfg.eig_tol,
                cfg.eig_max_iter,
                cfg.seed,
            )?;
            let assignments = spectral::spectral_kmeans(&bundle, k, cfg.seed, 300)?;
            let clusters = spectral::select_centers_with(g, &bundle, &assignments, cfg.centrality)?;
            let reconstruction = topology::reconstruct(g, &clusters, cfg.hops, cfg.neighbor_cap)?;
            Ok(PreprocessArtifacts {
                bundle,
                clusters,
                reconstruction,
            })
        }
    }
}

/// Train from scratch: preprocess + [`train_with_artifacts`].
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let artifacts = match cfg.variant {
        Variant::FullSampling => None,
        _ => Some(preprocess(g, cfg)?),
    };
    train_with_artifacts(g, cfg, artifacts)
}

/// Train given (possibly cached) preprocessing artifacts.
pub fn train_with_artifacts(
    g: &Graph,
    cfg: &TrainConfig,
    artifacts: Option<PreprocessArtifacts>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = EncoderParams::init(g.feature_dim(), cfg.hidden_dim, cfg.seed);
    let mut log = Vec::with_capacity(cfg.epochs);

    match cfg.variant {
        Variant::FullSampling => {
            // InfoNCE over all nodes of the original graph views
            let op = g.gcn_propagation_operator();
            let m_full = op.apply(&g.features().view())?;
            let anchor_ids: Vec<usize> = (0..g.num_nodes()).collect();
            for epoch in 0..cfg.epochs {
                let started = Instant::now();
                let views = ViewPair {
                    m_hat: m_full.clone(),
                    m_tilde: m_full.clone(),
                    anchor_ids: anchor_ids.clone(),
                };
                let (loss, grads, terms) = loss_and_gradients(
                    &views,
                    &params,
                    cfg.temperature,
                    cfg.negatives,
                    cfg.threads,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                adam_step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay)?;
                log.push(EpochRecord {
                    epoch,
                    loss,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    rss_bytes: current_rss_bytes(),
                    sim_terms: terms,
                });
            }
            Ok(TrainOutcome {
                params,
                log,
                artifacts: None,
            })
        }
        _ => {
            let artifacts = match artifacts {
                Some(a) => a,
                None => preprocess(g, cfg)?,
            };
            let r = &artifacts.reconstruction;
            let k = r.k();
            if k < 2 {
                return Err(Error::AugmentationNeedsTwoCenters);
            }
            let centers = r.centers();
            let member_sets: Vec<Vec<usize>> =
                r.subgraphs.iter().map(|s| s.members.clone()).collect();
            let x = g.features().view();
            let m_hat = anchor_features(&x, &centers, &member_sets);

            for epoch in 0..cfg.epochs {
                let started = Instant::now();
                // Algorithm step: generate a fresh augmentation per epoch
                let perm = match cfg.variant {
                    Variant::NoAug => (0..k).collect::<Vec<usize>>(),
                    _ => {
                        let mut rng = rng::stage_rng(cfg.seed, Stage::Augment, epoch as u64);
                        topology::sample_derangement(k, &mut rng)?
                    }
                };
                let tilde_centers: Vec<usize> = perm.iter().map(|&p| centers[p]).collect();
                let m_tilde = anchor_features(&x, &tilde_centers, &member_sets);
                let views = ViewPair {
                    m_hat: m_hat.clone(),
                    m_tilde,
                    anchor_ids: centers.clone(),
                };
                let (loss, grads, terms) = loss_and_gradients(
                    &views,
                    &params,
                    cfg.temperature,
                    cfg.negatives,
                    cfg.threads,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                adam_step(&mut params, &grads, cfg.learning_rate, cfg.weight_decay)?;
                log.push(EpochRecord {
                    epoch,
                    loss,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                    rss_bytes: current_rss_bytes(),
                    sim_terms: terms,
                });
            }
            Ok(TrainOutcome {
                params,
                log,
                artifacts: Some(artifacts),
            })
        }
    }
}
