use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric (max |A - A^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (off-diagonal residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}; increase the ridge regularization")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("requested {requested} latent components but only {usable} eigenvalues are numerically nonzero")]
    RankDeficient { requested: usize, usable: usize },

    #[error("reference sample {sample} has zero norm; relative error undefined")]
    ZeroReference { sample: usize },

    #[error("query point {point:?} lies outside the output grid bounding box")]
    OutOfDomain { point: Vec<f64> },

    #[error("coordinates do not form an axis-aligned tensor-product grid: {0}")]
    NotTensorGrid(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss {loss}); lower the learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("trial(s) failed for seed(s) {seeds:?}: {messages:?}")]
    TrialsFailed { seeds: Vec<u64>, messages: Vec<String> },

    #[error("bad file magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("model variant mismatch: expected {expected}, file holds {found}")]
    VariantMismatch { expected: String, found: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                found,
            })
        }
    }
}
