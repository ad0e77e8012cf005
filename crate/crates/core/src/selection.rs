//! Variance diversity and the subset-selection stage.
//!
//! [`variance_diversity`] measures how spread out a set of probability
//! vectors is around its centroid. [`kmeanspp_select`] draws a spread-out
//! subset by k-means++ seeding (squared-Euclidean weighting), and
//! [`brute_force_max_variance`] is the exact small-instance oracle that
//! enumerates every subset.

use crate::error::{Error, Result};
use crate::oracle::ProbVector;
use crate::policy::CandidateSet;
use crate::rng::Stream;
use crate::scalar::Scalar;
use rand::Rng;

/// Indices chosen from a candidate pool and their variance diversity.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<S: Scalar = f64> {
    pub chosen_indices: Vec<usize>,
    pub diversity: S,
}

/// Mean squared distance of the vectors from their componentwise mean
/// (population normalizer). Bit-identical inputs return exactly zero.
pub fn variance_diversity<S: Scalar>(vectors: &[ProbVector<S>]) -> Result<S> {
    let first = vectors.first().ok_or(Error::EmptyInput("vector set"))?;
    let d = first.dim();
    for v in vectors {
        if v.dim() != d {
            return Err(Error::ShapeMismatch(
                "probability vectors of mixed dimension".into(),
            ));
        }
    }
    if vectors.iter().all(|v| v.as_slice() == first.as_slice()) {
        return Ok(S::zero());
    }
    let count = S::from_f64_lossy(vectors.len() as f64);
    let mut mean = vec![S::zero(); d];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v.as_slice()) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut total = S::zero();
    for v in vectors {
        let mut sq = S::zero();
        for (&x, &m) in v.as_slice().iter().zip(&mean) {
            let diff = x - m;
            sq += diff * diff;
        }
        total += sq;
    }
    Ok(total / count)
}

fn squared_distance<S: Scalar>(a: &ProbVector<S>, b: &ProbVector<S>) -> S {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// k-means++ seeding over probability vectors: the first index is uniform,
/// each subsequent index is sampled without replacement with probability
/// proportional to its squared Euclidean distance to the nearest chosen
/// vector. When every remaining distance is zero the next index is drawn
/// uniformly from the unchosen ones.
pub fn kmeanspp_select<S: Scalar>(
    vectors: &[ProbVector<S>],
    s: usize,
    rng: &mut Stream,
) -> Result<SelectionResult<S>> {
    let e = vectors.len();
    if e == 0 {
        return Err(Error::EmptyInput("vector set"));
    }
    if s == 0 || s > e {
        return Err(Error::SubsetTooLarge {
            requested: s,
            available: e,
        });
    }
    let d = vectors[0].dim();
    for v in vectors {
        if v.dim() != d {
            return Err(Error::ShapeMismatch(
                "probability vectors of mixed dimension".into(),
            ));
        }
    }

    let mut chosen = Vec::with_capacity(s);
    let mut taken = vec![false; e];
    let first = rng.random_range(0..e);
    chosen.push(first);
    taken[first] = true;

    // nearest-chosen squared distance, updated as centers are added
    let mut nearest: Vec<S> = vectors
        .iter()
        .map(|v| squared_distance(v, &vectors[first]))
        .collect();

    while chosen.len() < s {
        let total: S = nearest
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(_, &w)| w)
            .sum();
        let next = if total > S::zero() {
            let u = S::from_f64_lossy(rng.random::<f64>()) * total;
            let mut acc = S::zero();
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if taken[i] || w == S::zero() {
                    continue;
                }
                acc += w;
                if acc > u {
                    pick = Some(i);
                    break;
                }
            }
            // cumulative rounding can leave u at or past the total
            pick.unwrap_or_else(|| {
                nearest
                    .iter()
                    .enumerate()
                    .rev()
                    .find(|(i, &w)| !taken[*i] && w > S::zero())
                    .map(|(i, _)| i)
                    .expect("positive total implies a positive weight")
            })
        } else {
            let free: Vec<usize> = (0..e).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (i, slot) in nearest.iter_mut().enumerate() {
            let dist = squared_distance(&vectors[i], &vectors[next]);
            if dist < *slot {
                *slot = dist;
            }
        }
    }

    let picked: Vec<ProbVector<S>> = chosen.iter().map(|&i| vectors[i].clone()).collect();
    let diversity = variance_diversity(&picked)?;
    Ok(SelectionResult {
        chosen_indices: chosen,
        diversity,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact maximizer of variance diversity over all size-`s` subsets,
/// enumerated in lexicographic index order; ties keep the first (smallest)
/// tuple. Refuses instances with more than 10^6 subsets.
pub fn brute_force_max_variance<S: Scalar>(
    vectors: &[ProbVector<S>],
    s: usize,
) -> Result<SelectionResult<S>> {
    let e = vectors.len();
    if e == 0 {
        return Err(Error::EmptyInput("vector set"));
    }
    if s == 0 || s > e {
        return Err(Error::SubsetTooLarge {
            requested: s,
            available: e,
        });
    }
    const BOUND: u128 = 1_000_000;
    let subsets = binomial(e, s);
    if subsets > BOUND {
        return Err(Error::EnumerationBound {
            subsets,
            bound: BOUND,
        });
    }

    let mut indices: Vec<usize> = (0..s).collect();
    let mut best: Option<SelectionResult<S>> = None;
    loop {
        let picked: Vec<ProbVector<S>> = indices.iter().map(|&i| vectors[i].clone()).collect();
        let diversity = variance_diversity(&picked)?;
        let better = match &best {
            None => true,
            Some(b) => diversity > b.diversity,
        };
        if better {
            best = Some(SelectionResult {
                chosen_indices: indices.clone(),
                diversity,
            });
        }
        // next combination in lexicographic order
        let mut i = s;
        loop {
            if i == 0 {
                return Ok(best.expect("at least one subset"));
            }
            i -= 1;
            if indices[i] != i + e - s {
                break;
            }
        }
        indices[i] += 1;
        for j in i + 1..s {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

/// Selection stage of the training loop: k-means++ seeding over the
/// candidate set's probability vectors.
pub fn select<S: Scalar>(
    candidate_set: &CandidateSet<S>,
    s: usize,
    rng: &mut Stream,
) -> Result<SelectionResult<S>> {
    let vectors = candidate_set.prob_vectors.as_ref().ok_or(Error::Unscored)?;
    kmeanspp_select(vectors, s, rng)
}
