//! Centers-only InfoNCE loss.
//!
//! For star i the positive pair is (view-1 center of star i, view-2 center
//! of star i); negatives for an anchor are the other stars' centers in the
//! opposite view plus the other centers in the anchor's own view. The loss
//! is averaged over anchors and symmetrized across the two views. Only the
//! anchor rows are ever read, so the number of similarity terms is
//! 2 k (2k - 1) regardless of graph size.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::config::NegativesMode;

/// Loss value, gradients with respect to both anchor-embedding matrices,
/// and the exact count of similarity terms that entered the objective.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub d_z_hat: Array2<f64>,
    pub d_z_tilde: Array2<f64>,
    pub similarity_terms: u64,
}

fn row_normalize(z: &ArrayView2<f64>, ids: &[usize]) -> Result<(Array2<f64>, Vec<f64>)> {
    let norms = linalg::row_norms(z);
    for (i, &n) in norms.iter().enumerate() {
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNormEmbedding {
                row: ids.get(i).copied().unwrap_or(i),
            });
        }
    }
    let mut out = z.to_owned();
    for (mut row, &n) in out.rows_mut().into_iter().zip(norms.iter()) {
        row.mapv_inplace(|v| v / n);
    }
    Ok((out, norms.to_vec()))
}

/// One symmetrized direction: anchor rows come from `anchors` and the
/// opposite view is `others`. `cross[i][j]` must hold cos(anchor_i,
/// other_j) and `intra[i][j]` cos(anchor_i, anchor_j). Returns the summed
/// negative log-likelihood and accumulates d(loss)/d(similarity) into the
/// coefficient matrices with `weight` applied.
#[allow(clippy::too_many_arguments)]
fn direction_pass(
    cross: &Array2<f64>,
    intra: &Array2<f64>,
    tau: f64,
    mode: NegativesMode,
    weight: f64,
    g_cross: &mut Array2<f64>,
    g_intra: &mut Array2<f64>,
    terms: &mut u64,
) -> f64 {
    let k = cross.nrows();
    let mut total = 0.0;
    for i in 0..k {
        // stable logsumexp over the denominator terms
        let pos = cross[[i, i]];
        let mut max_e = pos / tau;
        let mut consider = |v: f64| {
            if v > max_e {
                max_e = v;
            }
        };
        for j in 0..k {
            if j == i {
                continue;
            }
            consider(cross[[i, j]] / tau);
            match mode {
                NegativesMode::CrossAndIntra => consider(intra[[i, j]] / tau),
                NegativesMode::CrossOnly => consider(cross[[i, j]] / tau),
            }
        }
        let mut denom = (pos / tau - max_e).exp();
        *terms += 1;
        for j in 0..k {
            if j == i {
                continue;
            }
            denom += (cross[[i, j]] / tau - max_e).exp();
            match mode {
                NegativesMode::CrossAndIntra => denom += (intra[[i, j]] / tau - max_e).exp(),
                NegativesMode::CrossOnly => denom += (cross[[i, j]] / tau - max_e).exp(),
            }
            *terms += 2;
        }
        let log_denom = max_e + denom.ln();
        // -l(i) = log_denom - pos / tau
        total += log_denom - pos / tau;

        // softmax weights give the gradient of log_denom
        let p = |v: f64| (v / tau - max_e).exp() / denom;
        g_cross[[i, i]] += weight * (p(pos) - 1.0) / tau;
        for j in 0..k {
            if j == i {
                continue;
            }
            match mode {
                NegativesMode::CrossAndIntra => {
                    g_cross[[i, j]] += weight * p(cross[[i, j]]) / tau;
                    g_intra[[i, j]] += weight * p(intra[[i, j]]) / tau;
                }
                NegativesMode::CrossOnly => {
                    g_cross[[i, j]] += weight * 2.0 * p(cross[[i, j]]) / tau;
                }
            }
        }
    }
    total
}

/// Loss and gradients over two k x D anchor-embedding matrices (row i of
/// each holds star i's center in that view). `ids` are the node ids behind
/// each row, used only in diagnostics.
pub fn center_infonce_with_grads(
    z_hat: &ArrayView2<f64>,
    z_tilde: &ArrayView2<f64>,
    ids: &[usize],
    tau: f64,
    mode: NegativesMode,
    threads: usize,
) -> Result<LossOutput> {
    let k = z_hat.nrows();
    if k < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("InfoNCE needs at least 2 anchors, got {k}"),
        });
    }
    if tau <= 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("temperature must be > 0, got {tau}"),
        });
    }
    if z_tilde.dim() != z_hat.dim() {
        return Err(Error::dim(format!(
            "view shapes differ: {:?} vs {:?}",
            z_hat.dim(),
            z_tilde.dim()
        )));
    }
    let (nh, norms_h) = row_normalize(z_hat, ids)?;
    let (nt, norms_t) = row_normalize(z_tilde, ids)?;

    let c_ht = linalg::matmul(&nh.view(), &nt.t(), threads); // cos(hat_i, tilde_j)
    let c_hh = linalg::matmul(&nh.view(), &nh.t(), threads);
    let c_tt = linalg::matmul(&nt.view(), &nt.t(), threads);

    let weight = 1.0 / (2 * k) as f64;
    let mut g_ht = Array2::<f64>::zeros((k, k));
    let mut g_hh = Array2::<f64>::zeros((k, k));
    let mut g_tt = Array2::<f64>::zeros((k, k));
    let mut terms = 0u64;

    // hat-anchored direction
    let sum_hat = direction_pass(&c_ht, &c_hh, tau, mode, weight, &mut g_ht, &mut g_hh, &mut terms);
    // tilde-anchored direction: cross matrix is the transpose
    let c_th = c_ht.t().to_owned();
    let mut g_th = Array2::<f64>::zeros((k, k));
    let sum_tilde =
        direction_pass(&c_th, &c_tt, tau, mode, weight, &mut g_th, &mut g_tt, &mut terms);
    g_ht += &g_th.t();

    let loss = weight * (sum_hat + sum_tilde);

    // chain rule through the cosine matrices onto the normalized rows
    let mut d_nh = linalg::matmul(&g_ht.view(), &nt.view(), threads);
    d_nh += &linalg::matmul(&(&g_hh + &g_hh.t()).view(), &nh.view(), threads);
    let mut d_nt = linalg::matmul(&g_ht.t(), &nh.view(), threads);
    d_nt += &linalg::matmul(&(&g_tt + &g_tt.t()).view(), &nt.view(), threads);

    // and through the row normalization
    let unnormalize = |d_n: &Array2<f64>, n: &Array2<f64>, norms: &[f64]| {
        let mut d_z = Array2::<f64>::zeros(d_n.dim());
        for i in 0..k {
            let dni = d_n.row(i);
            let ni = n.row(i);
            let proj = dni.dot(&ni);
            let mut out = d_z.row_mut(i);
            for (o, (dv, nv)) in out.iter_mut().zip(dni.iter().zip(ni.iter())) {
                *o = (dv - proj * nv) / norms[i];
            }
        }
        d_z
    };
    let d_z_hat = unnormalize(&d_nh, &nh, &norms_h);
    let d_z_tilde = unnormalize(&d_nt, &nt, &norms_t);

    Ok(LossOutput {
        loss,
        d_z_hat,
        d_z_tilde,
        similarity_terms: terms,
    })
}

/// Loss value and term count only.
pub fn center_infonce(
    z_hat: &ArrayView2<f64>,
    z_tilde: &ArrayView2<f64>,
    ids: &[usize],
    tau: f64,
    mode: NegativesMode,
    threads: usize,
) -> Result<(f64, u64)> {
    center_infonce_with_grads(z_hat, z_tilde, ids, tau, mode, threads)
        .map(|o| (o.loss, o.similarity_terms))
}

/// InfoNCE over the rows of two full embedding matrices selected by
/// `centers`: row `centers[i]` of each matrix is star i's center in that
/// view. Cross-view and intra-view negatives, symmetrized over views,
/// averaged over anchors.
pub fn infonce_center_loss(
    z_hat: &ArrayView2<f64>,
    z_tilde: &ArrayView2<f64>,
    centers: &[usize],
    tau: f64,
) -> Result<f64> {
    infonce_center_loss_aligned(z_hat, z_tilde, centers, centers, tau, NegativesMode::CrossAndIntra)
}

/// As [`infonce_center_loss`] but with per-view center lists, so the
/// swapped view can pair star i's hat-center with its tilde-center.
pub fn infonce_center_loss_aligned(
    z_hat: &ArrayView2<f64>,
    z_tilde: &ArrayView2<f64>,
    centers_hat: &[usize],
    centers_tilde: &[usize],
    tau: f64,
    mode: NegativesMode,
) -> Result<f64> {
    if centers_hat.len() != centers_tilde.len() {
        return Err(Error::dim(format!(
            "center lists differ in length: {} vs {}",
            centers_hat.len(),
            centers_tilde.len()
        )));
    }
    let gather = |z: &ArrayView2<f64>, ids: &[usize]| -> Result<Array2<f64>> {
        let mut out = Array2::zeros((ids.len(), z.ncols()));
        for (r, &i) in ids.iter().enumerate() {
            if i >= z.nrows() {
                return Err(Error::NodeIdOutOfRange {
                    id: i,
                    num_nodes: z.nrows(),
                });
            }
            out.row_mut(r).assign(&z.row(i));
        }
        Ok(out)
    };
    let zh = gather(z_hat, centers_hat)?;
    let zt = gather(z_tilde, centers_tilde)?;
    center_infonce(&zh.view(), &zt.view(), centers_hat, tau, mode, 1).map(|(l, _)| l)
}

/// Closed form for the similarity-term count of one epoch.
pub fn expected_similarity_terms(k: usize) -> u64 {
    2 * (k as u64) * (2 * k as u64 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn identical_orthogonal_pair_closed_form() {
        // k=2, both views identical, centers orthogonal, tau=1:
        // loss = -ln(e / (e + 2))
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let loss = infonce_center_loss(&z.view(), &z.view(), &[0, 1], 1.0).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 0.5514, epsilon = 1e-4);
    }

    #[test]
    fn large_tau_limit_is_ln_2k_minus_1() {
        let z = array![
            [1.0, 0.2, -0.3],
            [0.4, -1.0, 0.0],
            [0.1, 0.8, 0.5],
            [-0.2, 0.3, 0.9]
        ];
        let k = 4.0;
        let loss = infonce_center_loss(&z.view(), &z.view(), &[0, 1, 2, 3], 1e9).unwrap();
        assert_abs_diff_eq!(loss, (2.0 * k - 1.0f64).ln(), epsilon = 1e-6);
    }

    #[test]
    fn matches_direct_scalar_evaluation() {
        // independent re-evaluation of the formula, scalar arithmetic only
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let k = 8;
        let d = 5;
        let zh = Array2::from_shape_fn((k, d), |_| rng.gen_range(-1.0..1.0));
        let zt = Array2::from_shape_fn((k, d), |_| rng.gen_range(-1.0..1.0));
        let tau = 0.7;

        let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
            a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
        };
        let mut total = 0.0;
        for (anchors, others) in [(&zh, &zt), (&zt, &zh)] {
            for i in 0..k {
                let pos = (cos(anchors.row(i), others.row(i)) / tau).exp();
                let mut denom = pos;
                for j in 0..k {
                    if j != i {
                        denom += (cos(anchors.row(i), others.row(j)) / tau).exp();
                        denom += (cos(anchors.row(i), anchors.row(j)) / tau).exp();
                    }
                }
                total += -(pos / denom).ln();
            }
        }
        let oracle = total / (2 * k) as f64;

        let ids: Vec<usize> = (0..k).collect();
        let loss = infonce_center_loss(&zh.view(), &zt.view(), &ids, tau).unwrap();
        assert_abs_diff_eq!(loss, oracle, epsilon = 1e-10);
    }

    #[test]
    fn term_count_matches_closed_form() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for k in [2usize, 3, 7] {
            let zh = Array2::from_shape_fn((k, 4), |_| rng.gen_range(-1.0..1.0));
            let zt = Array2::from_shape_fn((k, 4), |_| rng.gen_range(-1.0..1.0));
            let ids: Vec<usize> = (0..k).collect();
            for mode in [NegativesMode::CrossAndIntra, NegativesMode::CrossOnly] {
                let (_, terms) =
                    center_infonce(&zh.view(), &zt.view(), &ids, 0.5, mode, 1).unwrap();
                assert_eq!(terms, expected_similarity_terms(k));
            }
        }
    }

    #[test]
    fn zero_norm_row_is_reported() {
        let zh = array![[0.0, 0.0], [1.0, 0.0]];
        let zt = array![[1.0, 0.0], [0.0, 1.0]];
        match infonce_center_loss(&zh.view(), &zt.view(), &[0, 1], 1.0) {
            Err(Error::ZeroNormEmbedding { row }) => assert_eq!(row, 0),
            other => panic!("expected zero-norm error, got {other:?}"),
        }
    }

    #[test]
    fn cross_only_reproduces_duplicated_denominator() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let ids = [0usize, 1];
        let loss = infonce_center_loss_aligned(
            &z.view(),
            &z.view(),
            &ids,
            &ids,
            1.0,
            NegativesMode::CrossOnly,
        )
        .unwrap();
        // identical views: duplicated cross term equals cross + intra here
        let expected = -(1f64.exp() / (1f64.exp() + 2.0)).ln();
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
    }

    #[test]
    fn loss_respects_tau_bounds() {
        // loss in [-2/tau, 2/tau + ln(2k-1)] for all inputs
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = rng.gen_range(2..9);
            let d = rng.gen_range(2..6);
            let tau = [0.2, 0.5, 1.0][rng.gen_range(0..3)];
            let zh = Array2::from_shape_fn((k, d), |_| rng.gen_range(-2.0..2.0));
            let zt = Array2::from_shape_fn((k, d), |_| rng.gen_range(-2.0..2.0));
            let ids: Vec<usize> = (0..k).collect();
            if let Ok((loss, _)) = center_infonce(
                &zh.view(),
                &zt.view(),
                &ids,
                tau,
                NegativesMode::CrossAndIntra,
                1,
            ) {
                let hi = 2.0 / tau + (2.0 * k as f64 - 1.0).ln();
                let lo = -2.0 / tau;
                assert!(loss >= lo && loss <= hi, "loss {loss} outside [{lo}, {hi}]");
            }
        }
    }
}
