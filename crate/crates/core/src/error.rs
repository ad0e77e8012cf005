//! Crate-wide error type.

/// Errors surfaced by the augmentation engine.
///
/// `Config` is reserved for bad run configuration (files, flags, invariant
/// violations); the CLI maps it to exit code 2 and everything else to 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("signed magnitude {0} outside [-1, 1]")]
    MagnitudeOutOfRange(f64),
    #[error("SamplePairing needs a partner image of identical shape")]
    BadPartner,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("cannot select {requested} items from a pool of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("{subsets} subsets exceed the enumeration bound of {bound}")]
    EnumerationBound { subsets: u128, bound: u128 },
    #[error("candidate set has not been scored")]
    Unscored,
    #[error("probability at the true label is zero")]
    ZeroProbability,
    #[error("class index {index} out of range for {classes} classes")]
    BadLabel { index: usize, classes: usize },
    #[error("perturbation deltas must average to zero componentwise")]
    UncenteredDeltas,
    #[error("perturbed point leaves the probability simplex")]
    LeftSimplex,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}, step {step}: loss is not finite")]
    Diverged { epoch: usize, step: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
