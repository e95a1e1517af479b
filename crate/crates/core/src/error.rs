use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("node id {id} out of range for {num_nodes} nodes")]
    NodeIdOutOfRange { id: usize, num_nodes: usize },

    #[error("feature matrix has {feature_rows} rows but edges reference node ids up to {max_node_id}")]
    FeatureRowMismatch {
        feature_rows: usize,
        max_node_id: usize,
    },

    #[error("label file has {labels} entries, expected {num_nodes}")]
    LabelCountMismatch { labels: usize, num_nodes: usize },

    #[error("requested k={k} eigenpairs from an operator of size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("eigensolver did not converge within {max_iter} steps (worst residual {worst_residual:.3e})")]
    NonConvergence {
        max_iter: usize,
        worst_residual: f64,
    },

    #[error("cluster {cluster} is empty and could not be repaired (n={n}, k={k})")]
    EmptyCluster { cluster: usize, n: usize, k: usize },

    #[error("k-means needs at least k={k} distinct rows, found {distinct}")]
    DegenerateClustering { k: usize, distinct: usize },

    #[error("augmentation requires >= 2 centers")]
    AugmentationNeedsTwoCenters,

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("zero-norm embedding row {row}: cosine similarity undefined")]
    ZeroNormEmbedding { row: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient in tensor {tensor}")]
    NonFiniteGradient { tensor: &'static str },

    #[error("non-finite parameter in tensor {tensor} after optimizer step {step}")]
    NonFiniteParam { tensor: &'static str, step: u64 },

    #[error("class {class} absent from train split after {retries} resampling attempts")]
    ClassMissingFromSplit { class: usize, retries: usize },

    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },

    #[error("cache file {path} is corrupt: {reason}")]
    CacheCorrupt { path: String, reason: String },

    #[error("checkpoint {path} is invalid: {reason}")]
    BadCheckpoint { path: String, reason: String },

    #[error("{0}")]
    Msg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
        }
    }
}
