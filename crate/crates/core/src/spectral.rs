//! Smallest eigenpairs of the normalized Laplacian, k-means over the
//! eigenvector rows, and centrality-maximal center selection.
//!
//! The eigensolver is Lanczos with full reorthogonalization and explicit
//! deflation: converged eigenvectors are locked and projected out of later
//! sequences, which is what lets repeated eigenvalues (one zero per
//! connected component) come out one copy at a time. A dense solver backs
//! it up for small operators.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;
use crate::sparse::SparseOperator;

/// Operators at or below this size may fall back to the dense solver when
/// the iterative path fails to converge.
pub const DENSE_FALLBACK_MAX: usize = 2000;

/// The k smallest eigenpairs of a symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBundle {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// N x k; column i pairs with `eigenvalues[i]`.
    pub eigenvectors: Array2<f64>,
}

impl SpectralBundle {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// Worst eigen-residual max_i ||L u_i - lambda_i u_i||.
    pub fn max_residual(&self, op: &SparseOperator) -> f64 {
        let mut worst = 0.0f64;
        for (i, &lambda) in self.eigenvalues.iter().enumerate() {
            let u: Vec<f64> = self.eigenvectors.column(i).to_vec();
            let lu = op.matvec(&u);
            let r2: f64 = lu
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum();
            worst = worst.max(r2.sqrt());
        }
        worst
    }

    /// Worst deviation of U^T U from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.k();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in i..k {
                let d = self.eigenvectors.column(i).dot(&self.eigenvectors.column(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((d - target).abs());
            }
        }
        worst
    }
}

/// Node-to-cluster assignments plus one representative center per cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterModel {
    /// Cluster id per node, values in [0, k).
    pub assignments: Vec<usize>,
    /// Node id of each cluster's center; `assignments[centers[j]] == j`.
    pub centers: Vec<usize>,
    pub k: usize,
}

/// Which per-node score picks the cluster center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centrality {
    /// Euclidean norm of the node's eigenvector row (default).
    #[default]
    SpectralNorm,
    /// Euclidean norm of the node's raw feature row.
    RawFeatureNorm,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// w -= sum_i (w . basis_i) basis_i, for every vector in both sets.
fn orthogonalize(w: &mut [f64], locked: &[Vec<f64>], basis: &[Vec<f64>]) {
    for q in locked.iter().chain(basis.iter()) {
        let c = dot(w, q);
        for (wi, qi) in w.iter_mut().zip(q) {
            *wi -= c * qi;
        }
    }
}

struct TridiagEigen {
    values: Vec<f64>,
    /// column i (in Lanczos-basis coordinates) for values[i]
    vectors: Vec<Vec<f64>>,
}

fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> TridiagEigen {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    TridiagEigen {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    }
}

/// Iterative path: Lanczos with full reorthogonalization and deflation of
/// converged pairs. `max_iter` bounds the total number of operator
/// applications. Deterministic for a fixed seed.
pub fn smallest_eigenpairs_lanczos(
    op: &SparseOperator,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralBundle> {
    let n = op.n();
    if k == 0 || tol <= 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("eigensolver needs k >= 1 and tol > 0 (k={k}, tol={tol})"),
        });
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng::split_seed(seed, rng::Stage::Preprocess, 0));
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut matvecs = 0usize;
    let mut worst_residual = f64::INFINITY;
    let mut fail_rounds = 0u32;

    while locked_vals.len() < k {
        let k_rem = k - locked_vals.len();
        let base = (2 * k_rem + 32).max(64);
        let m_cap = (base << fail_rounds.min(8)).min(n - locked_vecs.len());

        // fresh start vector orthogonal to everything locked
        let mut v = vec![0.0; n];
        loop {
            for vi in v.iter_mut() {
                *vi = rng.gen_range(-1.0..1.0);
            }
            orthogonalize(&mut v, &locked_vecs, &[]);
            let nv = norm(&v);
            if nv > 1e-8 {
                for vi in v.iter_mut() {
                    *vi /= nv;
                }
                break;
            }
        }

        let mut basis: Vec<Vec<f64>> = vec![v];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();

        for j in 0..m_cap {
            if matvecs >= max_iter {
                break;
            }
            let mut w = op.matvec(&basis[j]);
            matvecs += 1;
            if j > 0 {
                let b = betas[j - 1];
                for (wi, pi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= b * pi;
                }
            }
            let alpha = dot(&w, &basis[j]);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= alpha * vi;
            }
            alphas.push(alpha);
            // two Gram-Schmidt passes keep the basis orthonormal to
            // machine precision
            orthogonalize(&mut w, &locked_vecs, &basis);
            orthogonalize(&mut w, &locked_vecs, &basis);
            let beta = norm(&w);
            if beta < 1e-12 {
                // invariant subspace exhausted; harvest and restart
                break;
            }
            if j + 1 < m_cap {
                betas.push(beta);
                for wi in w.iter_mut() {
                    *wi /= beta;
                }
                basis.push(w);
                // cheap periodic convergence test on the Ritz residual bound
                if (j + 1) % 8 == 0 {
                    let te = tridiag_eigen(&alphas, &betas[..alphas.len() - 1]);
                    let converged = te
                        .values
                        .iter()
                        .zip(&te.vectors)
                        .take(k_rem)
                        .all(|(_, y)| beta * y[alphas.len() - 1].abs() <= 0.5 * tol);
                    if converged {
                        break;
                    }
                }
            }
        }

        if alphas.is_empty() {
            break;
        }

        // harvest: lock the converged prefix of the ascending Ritz pairs
        let te = tridiag_eigen(&alphas, &betas[..alphas.len().saturating_sub(1)]);
        let mut locked_this_round = 0usize;
        for (lambda, y) in te.values.iter().zip(&te.vectors) {
            if locked_vals.len() >= k {
                break;
            }
            let mut u = vec![0.0; n];
            for (coef, q) in y.iter().zip(&basis) {
                for (ui, qi) in u.iter_mut().zip(q) {
                    *ui += coef * qi;
                }
            }
            orthogonalize(&mut u, &locked_vecs, &[]);
            let nu = norm(&u);
            if nu < 1e-8 {
                continue;
            }
            for ui in u.iter_mut() {
                *ui /= nu;
            }
            let lu = op.matvec(&u);
            matvecs += 1;
            let resid = lu
                .iter()
                .zip(&u)
                .map(|(a, b)| (a - lambda * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if resid <= tol {
                locked_vals.push(*lambda);
                locked_vecs.push(u);
                locked_this_round += 1;
            } else {
                worst_residual = resid;
                break;
            }
        }

        if locked_vals.len() >= k {
            break;
        }
        if locked_this_round == 0 {
            // either the sequence's invariant subspace is spent (a fresh
            // restart explores the complement) or the basis was too
            // small; both cases widen the next round
            fail_rounds = fail_rounds.saturating_add(1);
            if matvecs >= max_iter {
                return Err(Error::NonConvergence {
                    max_iter,
                    worst_residual,
                });
            }
        }
        if matvecs >= max_iter && locked_vals.len() < k {
            return Err(Error::NonConvergence {
                max_iter,
                worst_residual,
            });
        }
    }

    if locked_vals.len() < k {
        return Err(Error::NonConvergence {
            max_iter,
            worst_residual,
        });
    }

    // ascending final order
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| locked_vals[a].total_cmp(&locked_vals[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| locked_vals[i]).collect();
    let mut eigenvectors = Array2::zeros((n, k));
    for (col, &i) in order.iter().enumerate() {
        for (row, &v) in locked_vecs[i].iter().enumerate() {
            eigenvectors[[row, col]] = v;
        }
    }
    Ok(SpectralBundle {
        eigenvalues,
        eigenvectors,
    })
}

/// Dense path: full symmetric eigendecomposition, k smallest kept.
pub fn smallest_eigenpairs_dense(op: &SparseOperator, k: usize) -> Result<SpectralBundle> {
    let n = op.n();
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let dense = op.to_dense();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = dense[[i, j]];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = Array2::zeros((n, k));
    for (col, &i) in order.iter().take(k).enumerate() {
        for row in 0..n {
            eigenvectors[[row, col]] = eig.eigenvectors[(row, i)];
        }
    }
    Ok(SpectralBundle {
        eigenvalues,
        eigenvectors,
    })
}

/// Production entry point: iterative solver, with a dense fallback for
/// operators up to [`DENSE_FALLBACK_MAX`] when the iteration stalls.
pub fn smallest_eigenpairs(
    op: &SparseOperator,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralBundle> {
    match smallest_eigenpairs_lanczos(op, k, tol, max_iter, seed) {
        Ok(b) => Ok(b),
        Err(Error::NonConvergence { .. }) if op.n() <= DENSE_FALLBACK_MAX => {
            smallest_eigenpairs_dense(op, k)
        }
        Err(e) => Err(e),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K-means over the eigenvector rows with distance-weighted seeding.
/// Returns the assignment vector. Deterministic for a fixed seed.
pub fn spectral_kmeans(
    bundle: &SpectralBundle,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Vec<usize>> {
    spectral_kmeans_trace(bundle, k, seed, max_iter).map(|(a, _)| a)
}

/// As [`spectral_kmeans`], also returning the within-cluster
/// sum-of-squares after each Lloyd iteration.
pub fn spectral_kmeans_trace(
    bundle: &SpectralBundle,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = bundle.num_nodes();
    let dim = bundle.k();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig {
            reason: format!("k-means needs 1 <= k <= N (k={k}, N={n})"),
        });
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| bundle.eigenvectors.row(i).to_vec())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng::split_seed(seed, rng::Stage::Preprocess, 1));

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(rows[rng.gen_range(0..n)].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            let distinct = count_distinct(&rows);
            return Err(Error::DegenerateClustering { k, distinct });
        }
        let mut target = rng.gen_range(0.0..total);
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        centroids.push(rows[pick].clone());
        for (i, row) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, centroids.last().unwrap()));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut objective_trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        // assign
        let mut objective = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let mut best = (0usize, sq_dist(row, &centroids[0]));
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(row, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            assignments[i] = best.0;
            objective += best.1;
        }
        objective_trace.push(objective);

        // empty-cluster repair: re-seed at the farthest point
        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        let mut repaired = false;
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = (0usize, -1.0f64);
            for (i, row) in rows.iter().enumerate() {
                if counts[assignments[i]] <= 1 {
                    continue;
                }
                let d = sq_dist(row, &centroids[assignments[i]]);
                if d > far.1 {
                    far = (i, d);
                }
            }
            if far.1 < 0.0 {
                return Err(Error::EmptyCluster { cluster: c, n, k });
            }
            counts[assignments[far.0]] -= 1;
            centroids[c] = rows[far.0].clone();
            assignments[far.0] = c;
            counts[c] = 1;
            repaired = true;
        }

        // update
        let mut next = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (i, row) in rows.iter().enumerate() {
            let a = assignments[i];
            sizes[a] += 1;
            for (acc, &v) in next[a].iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut moved = repaired;
        for c in 0..k {
            if sizes[c] == 0 {
                continue;
            }
            for acc in next[c].iter_mut() {
                *acc /= sizes[c] as f64;
            }
            if sq_dist(&next[c], &centroids[c]) > 0.0 {
                moved = true;
            }
            centroids[c] = std::mem::take(&mut next[c]);
        }
        if !moved {
            break;
        }
    }

    // final guard: every cluster non-empty
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCluster { cluster: c, n, k });
    }
    Ok((assignments, objective_trace))
}

fn count_distinct(rows: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Pick the centrality-maximal node of each cluster; ties break to the
/// lowest node id.
pub fn select_centers(
    g: &Graph,
    bundle: &SpectralBundle,
    assignments: &[usize],
) -> Result<ClusterModel> {
    select_centers_with(g, bundle, assignments, Centrality::SpectralNorm)
}

pub fn select_centers_with(
    g: &Graph,
    bundle: &SpectralBundle,
    assignments: &[usize],
    centrality: Centrality,
) -> Result<ClusterModel> {
    let n = g.num_nodes();
    if assignments.len() != n || bundle.num_nodes() != n {
        return Err(Error::dim(format!(
            "assignments ({}) and bundle rows ({}) must both cover {} nodes",
            assignments.len(),
            bundle.num_nodes(),
            n
        )));
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let score = |v: usize| -> f64 {
        match centrality {
            Centrality::SpectralNorm => {
                let row = bundle.eigenvectors.row(v);
                row.dot(&row).sqrt()
            }
            Centrality::RawFeatureNorm => {
                let row = g.features().row(v);
                row.dot(&row).sqrt()
            }
        }
    };
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for v in 0..n {
        let c = assignments[v];
        let s = score(v);
        match best[c] {
            // strict '>' keeps the lowest node id on ties: nodes are
            // scanned in ascending id order
            Some((_, cur)) if s <= cur => {}
            _ => best[c] = Some((v, s)),
        }
    }
    let mut centers = Vec::with_capacity(k);
    for (c, slot) in best.iter().enumerate() {
        match slot {
            Some((v, _)) => centers.push(*v),
            None => return Err(Error::EmptyCluster { cluster: c, n, k }),
        }
    }
    Ok(ClusterModel {
        assignments: assignments.to_vec(),
        centers,
        k,
    })
}
