//! Diversity-maximizing data augmentation.
//!
//! The training loop expands each input image into `E` candidate
//! augmentations drawn from a stochastic sub-policy search space, scores
//! every candidate with the classifier being trained, keeps the `S`
//! candidates whose probability vectors are most spread out (k-means++
//! seeding on the simplex), and takes the optimizer step on the kept
//! images. Measurement instruments for variance diversity, affinity and
//! loss diversity live in [`metrics`]; the end-to-end loop and the CLI
//! live in [`pipeline`].
//!
//! Numeric code is generic over the floating-point scalar via [`Scalar`];
//! the pipeline and CLI run on `f64`.

pub mod error;
pub mod imageops;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Probability vector over classes, `f32` scalar.
pub type ProbVector32 = oracle::ProbVector<f32>;
/// Probability vector over classes, `f64` scalar (pipeline default).
pub type ProbVector64 = oracle::ProbVector<f64>;
/// Trainable probability oracle, `f32` scalar.
pub type OracleModel32 = oracle::OracleModel<f32>;
/// Trainable probability oracle, `f64` scalar (pipeline default).
pub type OracleModel64 = oracle::OracleModel<f64>;
