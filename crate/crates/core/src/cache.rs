//! Preprocessing cache sidecar.
//!
//! Training runs on the same dataset and preprocessing parameters can skip
//! the eigensolve/cluster/reconstruct stage by persisting its artifacts.
//! Layout (little-endian): magic `E2NC`, version byte, 32-byte cache key,
//! then the spectral bundle, cluster model, and reconstruction.
//!
//! The key hashes the edge-list bytes together with every parameter that
//! shapes the artifacts, so a stale or foreign sidecar is rejected rather
//! than trusted.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{PreprocessArtifacts, TrainConfig};
use crate::spectral::{ClusterModel, SpectralBundle};
use crate::topology::{ReconstructedGraph, StarSubgraph};

pub const CACHE_MAGIC: &[u8; 4] = b"E2NC";
pub const CACHE_VERSION: u8 = 1;

/// Cache key: edge-list bytes + preprocessing parameters.
pub fn cache_key(edge_bytes: &[u8], cfg: &TrainConfig) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(edge_bytes);
    let params = format!(
        "k={};eig_k={};tol={};max_iter={};hops={};cap={};seed={};variant={};centrality={:?}",
        cfg.clusters,
        cfg.effective_eig_k(),
        cfg.eig_tol,
        cfg.eig_max_iter,
        cfg.hops,
        cfg.neighbor_cap,
        cfg.seed,
        cfg.variant.as_str(),
        cfg.centrality,
    );
    hasher.update(params.as_bytes());
    hasher.finalize().into()
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> Error {
        Error::CacheCorrupt {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(self.corrupt("truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Persist artifacts under the given key.
pub fn write_artifacts(path: &Path, key: &[u8; 32], artifacts: &PreprocessArtifacts) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(CACHE_MAGIC);
    w.buf.push(CACHE_VERSION);
    w.buf.extend_from_slice(key);

    let b = &artifacts.bundle;
    w.u64(b.num_nodes() as u64);
    w.u64(b.k() as u64);
    for &v in &b.eigenvalues {
        w.f64(v);
    }
    for v in b.eigenvectors.iter() {
        w.f64(*v);
    }

    let c = &artifacts.clusters;
    w.u64(c.assignments.len() as u64);
    w.u64(c.k as u64);
    for &a in &c.assignments {
        w.u64(a as u64);
    }
    for &cid in &c.centers {
        w.u64(cid as u64);
    }

    let r = &artifacts.reconstruction;
    w.u64(r.num_nodes as u64);
    w.u64(r.subgraphs.len() as u64);
    for s in &r.subgraphs {
        w.u64(s.center as u64);
        w.u64(s.members.len() as u64);
        for &m in &s.members {
            w.u64(m as u64);
        }
    }

    fs::write(path, &w.buf).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load artifacts, verifying magic, version, and key.
pub fn read_artifacts(path: &Path, expected_key: &[u8; 32]) -> Result<PreprocessArtifacts> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(4)? != CACHE_MAGIC {
        return Err(r.corrupt("missing E2NC magic"));
    }
    if r.take(1)?[0] != CACHE_VERSION {
        return Err(r.corrupt("unsupported version"));
    }
    if r.take(32)? != expected_key {
        return Err(r.corrupt("cache key mismatch (stale parameters or dataset)"));
    }

    let n = r.u64()? as usize;
    let k = r.u64()? as usize;
    let mut eigenvalues = Vec::with_capacity(k);
    for _ in 0..k {
        eigenvalues.push(r.f64()?);
    }
    let mut eigenvectors = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            eigenvectors[[i, j]] = r.f64()?;
        }
    }
    let bundle = SpectralBundle {
        eigenvalues,
        eigenvectors,
    };

    let cn = r.u64()? as usize;
    let ck = r.u64()? as usize;
    let mut assignments = Vec::with_capacity(cn);
    for _ in 0..cn {
        assignments.push(r.u64()? as usize);
    }
    let mut centers = Vec::with_capacity(ck);
    for _ in 0..ck {
        centers.push(r.u64()? as usize);
    }
    let clusters = ClusterModel {
        assignments,
        centers,
        k: ck,
    };

    let rn = r.u64()? as usize;
    let rk = r.u64()? as usize;
    let mut subgraphs = Vec::with_capacity(rk);
    for _ in 0..rk {
        let center = r.u64()? as usize;
        let count = r.u64()? as usize;
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            members.push(r.u64()? as usize);
        }
        subgraphs.push(StarSubgraph { center, members });
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok(PreprocessArtifacts {
        bundle,
        clusters,
        reconstruction: ReconstructedGraph {
            num_nodes: rn,
            subgraphs,
        },
    })
}

/// SHA-256 of a file's bytes, hex-encoded.
pub fn sha256_file_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
