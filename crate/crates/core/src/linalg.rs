//! Dense helpers shared by the encoder, loss, and probe.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// C = A B. With `threads > 1` the output rows are computed in a rayon
/// pool; each row is still a sequential reduction, so results stay
/// deterministic, but the single-threaded path is the tested default.
pub fn matmul(a: &ArrayView2<f64>, b: &ArrayView2<f64>, threads: usize) -> Array2<f64> {
    if threads <= 1 {
        return a.dot(b);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("rayon pool");
    let (n, _) = a.dim();
    let m = b.ncols();
    let mut out = Array2::<f64>::zeros((n, m));
    pool.install(|| {
        use rayon::prelude::*;
        let rows: Vec<Array1<f64>> = (0..n)
            .into_par_iter()
            .map(|i| a.row(i).dot(b))
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&row);
        }
    });
    out
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Elementwise gate: keeps `grad` where `pre > 0`.
pub fn relu_backward(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// Uniform Glorot initialization over (-a, a), a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

/// L2 norms of each row.
pub fn row_norms(x: &ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |row| row.dot(&row).sqrt())
}

/// Cosine similarity of two vectors; `None` when either norm is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot / (na.sqrt() * nb.sqrt()))
}
