//! The stochastic search space: uniform sub-policy sampling and the expand
//! stage that turns one source image into `E` augmented candidates.
//!
//! Sampling draw order per sub-policy is fixed: op1 kind, op2 kind, p1,
//! p2, m1, m2. See [`crate::imageops`] for the per-operation draw order
//! during application.

use crate::error::{Error, Result};
use crate::imageops::{apply_subpolicy, Image, OpKind, Operation};
use crate::oracle::ProbVector;
use crate::rng::Stream;
use crate::scalar::Scalar;
use rand::Rng;

/// Ordered pair of gated operations; the atom of the search space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubPolicy {
    pub op1: Operation,
    pub op2: Operation,
}

impl SubPolicy {
    pub fn new(op1: Operation, op2: Operation) -> Self {
        Self { op1, op2 }
    }
}

/// One candidate of the expand stage.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub sub_policy: SubPolicy,
    pub image: Image,
}

/// The `E` augmented candidates generated for one source image, plus their
/// probability vectors once the oracle has scored them.
#[derive(Debug, Clone)]
pub struct CandidateSet<S: Scalar = f64> {
    pub source_index: usize,
    pub candidates: Vec<Candidate>,
    pub prob_vectors: Option<Vec<ProbVector<S>>>,
}

impl<S: Scalar> CandidateSet<S> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Attach oracle scores; must be one vector per candidate.
    pub fn set_scores(&mut self, vectors: Vec<ProbVector<S>>) -> Result<()> {
        if vectors.len() != self.candidates.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} probability vectors for {} candidates",
                vectors.len(),
                self.candidates.len()
            )));
        }
        self.prob_vectors = Some(vectors);
        Ok(())
    }
}

/// Draw a sub-policy uniformly from the search space: both kinds uniform
/// over the sixteen operations (with replacement), `p` and `m` uniform on
/// `[0, 1]`.
pub fn sample_subpolicy(rng: &mut Stream) -> SubPolicy {
    let kind1 = OpKind::ALL[rng.random_range(0..OpKind::ALL.len())];
    let kind2 = OpKind::ALL[rng.random_range(0..OpKind::ALL.len())];
    let p1: f64 = rng.random();
    let p2: f64 = rng.random();
    let m1: f64 = rng.random();
    let m2: f64 = rng.random();
    SubPolicy {
        op1: Operation::new(kind1, p1, m1).expect("uniform draw is in range"),
        op2: Operation::new(kind2, p2, m2).expect("uniform draw is in range"),
    }
}

/// Expand stage: generate `e` candidates for `image`, each from a freshly
/// sampled sub-policy applied through the given stream. Probability
/// vectors are left unset.
pub fn expand<S: Scalar>(
    image: &Image,
    e: usize,
    rng: &mut Stream,
    partner_pool: &[Image],
) -> Result<CandidateSet<S>> {
    if e == 0 {
        return Err(Error::Config("candidate count E must be at least 1".into()));
    }
    let mut candidates = Vec::with_capacity(e);
    for _ in 0..e {
        let sub_policy = sample_subpolicy(rng);
        let image = apply_subpolicy(&sub_policy, image, rng, partner_pool)?;
        candidates.push(Candidate { sub_policy, image });
    }
    Ok(CandidateSet {
        source_index: 0,
        candidates,
        prob_vectors: None,
    })
}
