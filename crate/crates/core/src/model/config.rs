//! Training configuration and its flat key-value file format.
//!
//! The on-disk format is one `key = value` per line; `#` starts a comment.
//! Serialization emits keys in a fixed order so a config has exactly one
//! canonical byte representation, which is what gets hashed into
//! checkpoints and manifests.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::Centrality;

/// Which sampling/augmentation scheme the training loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Spectral centrality sampling + center-swap augmentation.
    #[default]
    E2neg,
    /// Ablation: k uniformly random nodes as centers.
    RandomSampling,
    /// Ablation: InfoNCE over all nodes of the original graph views.
    FullSampling,
    /// Ablation: the augmented view equals the base view.
    NoAug,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::E2neg => "e2neg",
            Variant::RandomSampling => "random-sampling",
            Variant::FullSampling => "full-sampling",
            Variant::NoAug => "no-aug",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "e2neg" => Ok(Variant::E2neg),
            "random-sampling" => Ok(Variant::RandomSampling),
            "full-sampling" => Ok(Variant::FullSampling),
            "no-aug" => Ok(Variant::NoAug),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown variant {other:?}"),
            }),
        }
    }
}

/// Which negative sets enter the loss denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativesMode {
    /// Cross-view plus intra-view negatives (default).
    #[default]
    CrossAndIntra,
    /// Cross-view negatives counted twice, intra-view dropped.
    CrossOnly,
}

impl NegativesMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativesMode::CrossAndIntra => "cross-intra",
            NegativesMode::CrossOnly => "cross-only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross-intra" => Ok(NegativesMode::CrossAndIntra),
            "cross-only" => Ok(NegativesMode::CrossOnly),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown negatives mode {other:?}"),
            }),
        }
    }
}

/// Which representation the probe consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeSource {
    #[default]
    Encoder,
    Projector,
}

impl ProbeSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeSource::Encoder => "encoder",
            ProbeSource::Projector => "projector",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(ProbeSource::Encoder),
            "projector" => Ok(ProbeSource::Projector),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown probe source {other:?}"),
            }),
        }
    }
}

fn centrality_str(c: Centrality) -> &'static str {
    match c {
        Centrality::SpectralNorm => "spectral-norm",
        Centrality::RawFeatureNorm => "raw-feature-norm",
    }
}

fn centrality_parse(s: &str) -> Result<Centrality> {
    match s {
        "spectral-norm" => Ok(Centrality::SpectralNorm),
        "raw-feature-norm" => Ok(Centrality::RawFeatureNorm),
        other => Err(Error::InvalidConfig {
            reason: format!("unknown centrality {other:?}"),
        }),
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden_dim: usize,
    pub epochs: usize,
    /// Number of clusters k (and of representative centers).
    pub clusters: usize,
    /// Eigenvector count; defaults to `clusters`.
    pub eig_k: Option<usize>,
    pub eig_tol: f64,
    pub eig_max_iter: usize,
    /// Max members per star subgraph.
    pub neighbor_cap: usize,
    /// BFS radius for member claiming.
    pub hops: usize,
    pub temperature: f64,
    pub seed: u64,
    pub variant: Variant,
    pub negatives: NegativesMode,
    pub centrality: Centrality,
    pub probe_on: ProbeSource,
    /// >1 parallelizes probe seeds; training itself stays sequential.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            weight_decay: 5e-4,
            hidden_dim: 256,
            epochs: 200,
            clusters: 30,
            eig_k: None,
            eig_tol: 1e-8,
            eig_max_iter: 50_000,
            neighbor_cap: 100,
            hops: 2,
            temperature: 0.5,
            seed: 0,
            variant: Variant::E2neg,
            negatives: NegativesMode::CrossAndIntra,
            centrality: Centrality::SpectralNorm,
            probe_on: ProbeSource::Encoder,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn effective_eig_k(&self) -> usize {
        self.eig_k.unwrap_or(self.clusters)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidConfig { reason });
        if self.learning_rate <= 0.0 {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.temperature <= 0.0 {
            return bad(format!("temperature must be > 0, got {}", self.temperature));
        }
        if self.eig_tol <= 0.0 {
            return bad(format!("eig_tol must be > 0, got {}", self.eig_tol));
        }
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("clusters", self.clusters),
            ("neighbor_cap", self.neighbor_cap),
            ("hops", self.hops),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.eig_k == Some(0) {
            return bad("eig_k must be >= 1 when set".into());
        }
        Ok(())
    }

    /// Canonical serialization: fixed key order, one `key = value` per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("learning_rate", format!("{}", self.learning_rate));
        kv("weight_decay", format!("{}", self.weight_decay));
        kv("hidden_dim", format!("{}", self.hidden_dim));
        kv("epochs", format!("{}", self.epochs));
        kv("clusters", format!("{}", self.clusters));
        if let Some(e) = self.eig_k {
            kv("eig_k", format!("{e}"));
        }
        kv("eig_tol", format!("{}", self.eig_tol));
        kv("eig_max_iter", format!("{}", self.eig_max_iter));
        kv("neighbor_cap", format!("{}", self.neighbor_cap));
        kv("hops", format!("{}", self.hops));
        kv("temperature", format!("{}", self.temperature));
        kv("seed", format!("{}", self.seed));
        kv("variant", self.variant.as_str().into());
        kv("negatives", self.negatives.as_str().into());
        kv("centrality", centrality_str(self.centrality).into());
        kv("probe_on", self.probe_on.as_str().into());
        kv("threads", format!("{}", self.threads));
        out
    }

    /// Parse the key-value format. Unknown keys are rejected so typos
    /// cannot silently fall back to defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::InvalidConfig {
                reason: format!("line {}: expected `key = value`, got {raw:?}", i + 1),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::InvalidConfig {
                reason: format!("line {}: {what} {value:?} for key {key}", i + 1),
            };
            match key {
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| bad("bad float"))?,
                "weight_decay" => cfg.weight_decay = value.parse().map_err(|_| bad("bad float"))?,
                "hidden_dim" => cfg.hidden_dim = value.parse().map_err(|_| bad("bad count"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("bad count"))?,
                "clusters" => cfg.clusters = value.parse().map_err(|_| bad("bad count"))?,
                "eig_k" => cfg.eig_k = Some(value.parse().map_err(|_| bad("bad count"))?),
                "eig_tol" => cfg.eig_tol = value.parse().map_err(|_| bad("bad float"))?,
                "eig_max_iter" => cfg.eig_max_iter = value.parse().map_err(|_| bad("bad count"))?,
                "neighbor_cap" => cfg.neighbor_cap = value.parse().map_err(|_| bad("bad count"))?,
                "hops" => cfg.hops = value.parse().map_err(|_| bad("bad count"))?,
                "temperature" => cfg.temperature = value.parse().map_err(|_| bad("bad float"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("bad seed"))?,
                "variant" => cfg.variant = Variant::parse(value)?,
                "negatives" => cfg.negatives = NegativesMode::parse(value)?,
                "centrality" => cfg.centrality = centrality_parse(value)?,
                "probe_on" => cfg.probe_on = ProbeSource::parse(value)?,
                "threads" => cfg.threads = value.parse().map_err(|_| bad("bad count"))?,
                other => {
                    return Err(Error::InvalidConfig {
                        reason: format!("line {}: unknown key {other:?}", i + 1),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.serialize().as_bytes());
        hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_identity() {
        let mut cfg = TrainConfig::default();
        cfg.learning_rate = 1e-4;
        cfg.weight_decay = 5e-5;
        cfg.hidden_dim = 2048;
        cfg.epochs = 1500;
        cfg.clusters = 50;
        cfg.eig_k = Some(12);
        cfg.variant = Variant::RandomSampling;
        let text = cfg.serialize();
        let parsed = TrainConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(parsed.serialize(), text);
    }

    #[test]
    fn appendix_style_config_accepted_verbatim() {
        // CS row: lr 0.0001, wd 0.00005, hidden 2048, 1500 epochs, 50
        // clusters, 100 neighbors
        let text = "learning_rate = 0.0001\nweight_decay = 0.00005\nhidden_dim = 2048\nepochs = 1500\nclusters = 50\nneighbor_cap = 100\n";
        let cfg = TrainConfig::parse(text).unwrap();
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.weight_decay, 5e-5);
        assert_eq!(cfg.hidden_dim, 2048);
        assert_eq!(cfg.epochs, 1500);
        assert_eq!(cfg.clusters, 50);
        assert_eq!(cfg.neighbor_cap, 100);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(TrainConfig::parse("learning_rte = 0.1\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::parse("temperature = 0\n").is_err());
        assert!(TrainConfig::parse("learning_rate = -1\n").is_err());
        assert!(TrainConfig::parse("clusters = 0\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = TrainConfig::default();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), TrainConfig::default().hash());
    }
}
