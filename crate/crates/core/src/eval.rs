//! Inference embeddings, linear-probe classification, and the epoch
//! benchmark harness.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{
    gcn_forward, project, train_with_artifacts, EncoderParams, ProbeSource, TrainConfig,
};
use crate::rng::{self, Stage};

/// Probe hyperparameters: full-batch gradient descent on a multinomial
/// logistic regression.
pub const PROBE_STEPS: usize = 500;
pub const PROBE_LR: f64 = 0.01;
pub const PROBE_L2: f64 = 1e-4;
const SPLIT_RETRIES: usize = 5;

/// Embed all nodes of the original graph: one GCN forward over the
/// symmetrically normalized adjacency with self-loops. Nodes that never
/// joined a star subgraph get embeddings here like everyone else.
pub fn embed_original(g: &Graph, params: &EncoderParams) -> Result<Array2<f64>> {
    if g.feature_dim() != params.feature_dim() {
        return Err(Error::dim(format!(
            "graph features have width {}, encoder expects {}",
            g.feature_dim(),
            params.feature_dim()
        )));
    }
    let op = g.gcn_propagation_operator();
    gcn_forward(&op, &g.features().view(), params)
}

/// [`embed_original`], optionally pushed through the projector.
pub fn embed_with_source(
    g: &Graph,
    params: &EncoderParams,
    source: ProbeSource,
) -> Result<Array2<f64>> {
    let h = embed_original(g, params)?;
    match source {
        ProbeSource::Encoder => Ok(h),
        ProbeSource::Projector => project(&h.view(), params),
    }
}

/// Accuracy statistics over probe seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl ProbeResult {
    fn from_accuracies(accuracies: Vec<f64>) -> Self {
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Stratified train/test split: every class with members contributes at
/// least one training row.
fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    for attempt in 0..SPLIT_RETRIES {
        let mut rng = rng::stage_rng(seed, Stage::Probe, attempt as u64);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for class in 0..num_classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            if members.is_empty() {
                continue;
            }
            members.shuffle(&mut rng);
            let want = ((members.len() as f64 * train_fraction).round() as usize)
                .clamp(1, members.len());
            train.extend_from_slice(&members[..want]);
            test.extend_from_slice(&members[want..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        let mut seen = vec![false; num_classes];
        for &i in &train {
            seen[labels[i]] = true;
        }
        let complete = (0..num_classes)
            .all(|c| seen[c] || !labels.contains(&c));
        if complete && !test.is_empty() {
            return Ok((train, test));
        }
    }
    Err(Error::ClassMissingFromSplit {
        class: 0,
        retries: SPLIT_RETRIES,
    })
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn fit_and_score(
    h: &ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
    train: &[usize],
    test: &[usize],
) -> f64 {
    let d = h.ncols();
    let nt = train.len();
    let mut x = Array2::zeros((nt, d));
    for (r, &i) in train.iter().enumerate() {
        x.row_mut(r).assign(&h.row(i));
    }
    let mut w = Array2::<f64>::zeros((d, num_classes));
    let mut b = Array1::<f64>::zeros(num_classes);
    for _ in 0..PROBE_STEPS {
        let mut p = x.dot(&w) + &b;
        softmax_rows(&mut p);
        for (r, &i) in train.iter().enumerate() {
            p[[r, labels[i]]] -= 1.0;
        }
        p /= nt as f64;
        let grad_w = x.t().dot(&p) + &(&w * PROBE_L2);
        let grad_b = p.sum_axis(Axis(0));
        w.scaled_add(-PROBE_LR, &grad_w);
        b.scaled_add(-PROBE_LR, &grad_b);
    }
    let mut correct = 0usize;
    for &i in test {
        let logits = h.row(i).dot(&w) + &b;
        let mut best = (0usize, f64::NEG_INFINITY);
        for (c, &v) in logits.iter().enumerate() {
            if v > best.1 {
                best = (c, v);
            }
        }
        if best.0 == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

/// Linear probe: per seed, a stratified split and a logistic regression
/// trained by [`PROBE_STEPS`] full-batch gradient steps. Seeds run in
/// parallel when `threads > 1`; results are identical either way.
pub fn linear_probe(
    h: &ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    seeds: &[u64],
    threads: usize,
) -> Result<ProbeResult> {
    if labels.len() != h.nrows() {
        return Err(Error::dim(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            h.nrows()
        )));
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::InvalidConfig {
            reason: format!("train fraction must be in (0, 1), got {train_fraction}"),
        });
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "probe needs at least one seed".into(),
        });
    }
    let run = |&seed: &u64| -> Result<f64> {
        let (train, test) = stratified_split(labels, num_classes, train_fraction, seed)?;
        Ok(fit_and_score(h, labels, num_classes, &train, &test))
    };
    let accuracies: Vec<f64> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("rayon pool");
        pool.install(|| {
            use rayon::prelude::*;
            seeds.par_iter().map(run).collect::<Result<Vec<f64>>>()
        })?
    } else {
        seeds.iter().map(run).collect::<Result<Vec<f64>>>()?
    };
    Ok(ProbeResult::from_accuracies(accuracies))
}

/// Per-epoch timing and memory for one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub variant: String,
    /// Median wall time of the measured epochs, milliseconds.
    pub epoch_time_ms: f64,
    /// Peak resident set sampled across the run, bytes.
    pub peak_rss_bytes: u64,
    /// Exact similarity-term count of one loss stage.
    pub sim_terms_per_epoch: u64,
}

/// Train for `warmup + measured` epochs and report the median per-epoch
/// wall time of the measured span.
pub fn bench_epoch(
    g: &Graph,
    cfg: &TrainConfig,
    warmup: usize,
    measured: usize,
) -> Result<BenchRecord> {
    if measured == 0 {
        return Err(Error::InvalidConfig {
            reason: "bench needs measured >= 1".into(),
        });
    }
    let mut cfg = cfg.clone();
    cfg.epochs = warmup + measured;
    let outcome = train_with_artifacts(g, &cfg, None)?;
    let mut times: Vec<f64> = outcome.log[warmup..].iter().map(|r| r.wall_ms).collect();
    times.sort_by(f64::total_cmp);
    let median = if times.len() % 2 == 1 {
        times[times.len() / 2]
    } else {
        0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2])
    };
    let peak_rss = outcome.log.iter().map(|r| r.rss_bytes).max().unwrap_or(0);
    let sim_terms = outcome.log.last().map(|r| r.sim_terms).unwrap_or(0);
    Ok(BenchRecord {
        variant: cfg.variant.as_str().to_string(),
        epoch_time_ms: median,
        peak_rss_bytes: peak_rss,
        sim_terms_per_epoch: sim_terms,
    })
}

/// Current resident set size in bytes (VmRSS), 0 where unavailable.
pub fn current_rss_bytes() -> u64 {
    if let Ok(status) = fs::read_to_string("/proc/self/status") {
        for line in status.lines() {
            if let Some(rest) = line.strip_prefix("VmRSS:") {
                let kb: u64 = rest
                    .trim()
                    .trim_end_matches("kB")
                    .trim()
                    .parse()
                    .unwrap_or(0);
                return kb * 1024;
            }
        }
    }
    0
}

/// One row of the results CSV shared by probe and bench commands.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: String,
    pub dataset: String,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub epoch_time_ms: Option<f64>,
    pub peak_rss: Option<u64>,
}

pub const RESULTS_CSV_HEADER: &str = "variant,dataset,seed,accuracy,epoch_time_ms,peak_rss";

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut out = String::from(RESULTS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fmt_f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let fmt_u = |v: Option<u64>| v.map(|x| format!("{x}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.variant,
            r.dataset,
            r.seed,
            fmt_f(r.accuracy),
            fmt_f(r.epoch_time_ms),
            fmt_u(r.peak_rss)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_hot_embeddings_probe_perfectly() {
        let labels = vec![0usize, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2];
        let mut h = Array2::zeros((labels.len(), 3));
        for (i, &l) in labels.iter().enumerate() {
            h[[i, l]] = 1.0;
        }
        let res = linear_probe(&h.view(), &labels, 3, 0.4, &[0, 1, 2], 1).unwrap();
        assert_eq!(res.mean, 1.0);
        assert_eq!(res.std, 0.0);
    }

    #[test]
    fn shuffled_labels_probe_at_chance() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 300;
        let h = Array2::from_shape_fn((n, 8), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let seeds: Vec<u64> = (0..20).collect();
        let res = linear_probe(&h.view(), &labels, 3, 0.1, &seeds, 1).unwrap();
        assert!(
            (res.mean - 1.0 / 3.0).abs() <= 0.05,
            "chance-level mean expected, got {}",
            res.mean
        );
    }

    #[test]
    fn probe_is_deterministic_and_thread_count_invariant() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 60;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let h = Array2::from_shape_fn((n, 4), |(i, _)| {
            (i % 2) as f64 + 0.3 * rng.gen_range(-1.0..1.0)
        });
        let seeds = [0u64, 1, 2, 3];
        let a = linear_probe(&h.view(), &labels, 2, 0.2, &seeds, 1).unwrap();
        let b = linear_probe(&h.view(), &labels, 2, 0.2, &seeds, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn untrained_zero_weights_embed_to_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let (g, _) = Graph::from_edges(&[(0, 1)], x, None).unwrap();
        let p = EncoderParams::zeros(2, 3);
        let h = embed_original(&g, &p).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_embedding_is_relu_of_projection() {
        let x = array![[2.0, -1.0]];
        let (g, _) = Graph::from_edges(&[], x, None).unwrap();
        let mut p = EncoderParams::zeros(2, 2);
        p.gcn_w = array![[1.0, -1.0], [0.5, 2.0]];
        let h = embed_original(&g, &p).unwrap();
        // lone node: propagation row is the identity, so h = relu(x W)
        assert_eq!(h[[0, 0]], (2.0f64 * 1.0 + -1.0 * 0.5).max(0.0));
        assert_eq!(h[[0, 1]], (2.0f64 * -1.0 + -1.0 * 2.0).max(0.0));
    }

    #[test]
    fn feature_width_mismatch_is_reported() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let (g, _) = Graph::from_edges(&[(0, 1)], x, None).unwrap();
        let p = EncoderParams::zeros(3, 2);
        assert!(matches!(
            embed_original(&g, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rss_sampling_returns_something_on_linux() {
        let rss = current_rss_bytes();
        if cfg!(target_os = "linux") {
            assert!(rss > 0);
        }
    }
}
