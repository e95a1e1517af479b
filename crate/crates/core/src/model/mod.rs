//! Single-layer GCN encoder, two-layer MLP projector, hand-written
//! gradients, Adam, and the training loop.

mod adam;
pub mod checkpoint;
mod config;
pub mod loss;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use config::{NegativesMode, ProbeSource, TrainConfig, Variant};
pub use loss::{
    center_infonce, center_infonce_with_grads, expected_similarity_terms, infonce_center_loss,
    infonce_center_loss_aligned, LossOutput,
};
pub use train::{train, train_with_artifacts, EpochRecord, PreprocessArtifacts, TrainOutcome};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Stage};
use crate::sparse::SparseOperator;

pub const TENSOR_NAMES: [&str; 5] = ["gcn_w", "w1", "b1", "w2", "b2"];

/// Encoder + projector weights with their optimizer state. Biases are kept
/// as 1 x D rows so every tensor is two-dimensional.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// GCN layer, F x D.
    pub gcn_w: Array2<f64>,
    /// Projector hidden layer, D x D.
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    /// Projector output layer, D x D.
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
    pub adam: AdamState,
}

impl EncoderParams {
    pub fn shapes(feature_dim: usize, hidden_dim: usize) -> [(usize, usize); 5] {
        [
            (feature_dim, hidden_dim),
            (hidden_dim, hidden_dim),
            (1, hidden_dim),
            (hidden_dim, hidden_dim),
            (1, hidden_dim),
        ]
    }

    pub fn zeros(feature_dim: usize, hidden_dim: usize) -> Self {
        let s = Self::shapes(feature_dim, hidden_dim);
        Self {
            gcn_w: Array2::zeros(s[0]),
            w1: Array2::zeros(s[1]),
            b1: Array2::zeros(s[2]),
            w2: Array2::zeros(s[3]),
            b2: Array2::zeros(s[4]),
            adam: AdamState::zeros_like(&s),
        }
    }

    /// Glorot-uniform weights, zero biases, fresh optimizer state.
    pub fn init(feature_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = rng::stage_rng(seed, Stage::Init, 0);
        let s = Self::shapes(feature_dim, hidden_dim);
        Self {
            gcn_w: linalg::glorot_uniform(feature_dim, hidden_dim, &mut rng),
            w1: linalg::glorot_uniform(hidden_dim, hidden_dim, &mut rng),
            b1: Array2::zeros(s[2]),
            w2: linalg::glorot_uniform(hidden_dim, hidden_dim, &mut rng),
            b2: Array2::zeros(s[4]),
            adam: AdamState::zeros_like(&s),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.gcn_w.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gcn_w.ncols()
    }

    pub fn tensors(&self) -> [&Array2<f64>; 5] {
        [&self.gcn_w, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 5] {
        [
            &mut self.gcn_w,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Gradients for every parameter tensor, same order as
/// [`EncoderParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub gcn_w: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

impl ParamGrads {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Self {
            gcn_w: Array2::zeros(params.gcn_w.dim()),
            w1: Array2::zeros(params.w1.dim()),
            b1: Array2::zeros(params.b1.dim()),
            w2: Array2::zeros(params.w2.dim()),
            b2: Array2::zeros(params.b2.dim()),
        }
    }

    pub fn tensors(&self) -> [&Array2<f64>; 5] {
        [&self.gcn_w, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 5] {
        [
            &mut self.gcn_w,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// GCN layer over a propagation operator: relu((op X) W).
pub fn gcn_forward(
    op: &SparseOperator,
    x: &ArrayView2<f64>,
    params: &EncoderParams,
) -> Result<Array2<f64>> {
    if x.ncols() != params.feature_dim() {
        return Err(Error::dim(format!(
            "features have {} columns, gcn weight expects {}",
            x.ncols(),
            params.feature_dim()
        )));
    }
    let m = op.apply(x)?;
    Ok(linalg::relu(&m.dot(&params.gcn_w)))
}

/// Two-layer MLP projector: relu(H W1 + b1) W2 + b2, row-wise.
pub fn project(h: &ArrayView2<f64>, params: &EncoderParams) -> Result<Array2<f64>> {
    if h.ncols() != params.hidden_dim() {
        return Err(Error::dim(format!(
            "projector input has {} columns, expected {}",
            h.ncols(),
            params.hidden_dim()
        )));
    }
    let a1 = h.dot(&params.w1) + &params.b1;
    Ok(linalg::relu(&a1).dot(&params.w2) + &params.b2)
}

/// Mean of the center row and all member rows of X, one row per star.
/// Row c of a star propagation operator applied to X equals exactly this,
/// so the training loop can touch only the anchor rows.
pub fn anchor_features(
    x: &ArrayView2<f64>,
    centers: &[usize],
    member_sets: &[Vec<usize>],
) -> Array2<f64> {
    debug_assert_eq!(centers.len(), member_sets.len());
    let mut out = Array2::zeros((centers.len(), x.ncols()));
    for (i, (&c, members)) in centers.iter().zip(member_sets).enumerate() {
        let mut acc = x.row(c).to_owned();
        for &m in members {
            acc += &x.row(m);
        }
        acc /= (members.len() + 1) as f64;
        out.row_mut(i).assign(&acc);
    }
    out
}

/// Cached activations of encoder + projector over anchor features.
pub struct ForwardCache {
    /// Anchor features (rows x F).
    pub m: Array2<f64>,
    /// Pre-activation of the GCN layer.
    pub s: Array2<f64>,
    /// Encoder output relu(s).
    pub h: Array2<f64>,
    /// Projector hidden pre-activation.
    pub a1: Array2<f64>,
    /// relu(a1).
    pub r: Array2<f64>,
    /// Projector output.
    pub z: Array2<f64>,
}

pub fn forward_anchors(m: Array2<f64>, params: &EncoderParams, threads: usize) -> ForwardCache {
    let s = linalg::matmul(&m.view(), &params.gcn_w.view(), threads);
    let h = linalg::relu(&s);
    let a1 = linalg::matmul(&h.view(), &params.w1.view(), threads) + &params.b1;
    let r = linalg::relu(&a1);
    let z = linalg::matmul(&r.view(), &params.w2.view(), threads) + &params.b2;
    ForwardCache { m, s, h, a1, r, z }
}

/// Reverse pass for one view: accumulates exact parameter gradients given
/// d(loss)/d(z). Linear in the upstream gradient.
pub fn accumulate_param_grads(
    cache: &ForwardCache,
    d_z: &Array2<f64>,
    params: &EncoderParams,
    grads: &mut ParamGrads,
    threads: usize,
) {
    grads.w2 += &linalg::matmul(&cache.r.t(), &d_z.view(), threads);
    grads.b2 += &d_z.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_r = linalg::matmul(&d_z.view(), &params.w2.t(), threads);
    let d_a1 = linalg::relu_backward(&d_r, &cache.a1);
    grads.w1 += &linalg::matmul(&cache.h.t(), &d_a1.view(), threads);
    grads.b1 += &d_a1.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_h = linalg::matmul(&d_a1.view(), &params.w1.t(), threads);
    let d_s = linalg::relu_backward(&d_h, &cache.s);
    grads.gcn_w += &linalg::matmul(&cache.m.t(), &d_s.view(), threads);
}

/// Both views of one training step: anchor feature matrices plus the node
/// ids backing the anchors (diagnostics only).
pub struct ViewPair {
    pub m_hat: Array2<f64>,
    pub m_tilde: Array2<f64>,
    pub anchor_ids: Vec<usize>,
}

/// Scalar loss of the full encoder-projector-InfoNCE composite.
pub fn training_loss(
    views: &ViewPair,
    params: &EncoderParams,
    tau: f64,
    mode: NegativesMode,
) -> Result<f64> {
    let fh = forward_anchors(views.m_hat.clone(), params, 1);
    let ft = forward_anchors(views.m_tilde.clone(), params, 1);
    center_infonce(&fh.z.view(), &ft.z.view(), &views.anchor_ids, tau, mode, 1).map(|(l, _)| l)
}

/// Loss, exact analytic gradients for every parameter tensor, and the
/// similarity-term count of the step.
pub fn loss_and_gradients(
    views: &ViewPair,
    params: &EncoderParams,
    tau: f64,
    mode: NegativesMode,
    threads: usize,
) -> Result<(f64, ParamGrads, u64)> {
    let fh = forward_anchors(views.m_hat.clone(), params, threads);
    let ft = forward_anchors(views.m_tilde.clone(), params, threads);
    let out = center_infonce_with_grads(
        &fh.z.view(),
        &ft.z.view(),
        &views.anchor_ids,
        tau,
        mode,
        threads,
    )?;
    let mut grads = ParamGrads::zeros_like(params);
    accumulate_param_grads(&fh, &out.d_z_hat, params, &mut grads, threads);
    accumulate_param_grads(&ft, &out.d_z_tilde, params, &mut grads, threads);
    Ok((out.loss, grads, out.similarity_terms))
}
