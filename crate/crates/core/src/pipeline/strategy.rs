//! Augmentation strategies as measurement instruments.
//!
//! These implement [`Augmenter`] for the four run strategies so metrics
//! can be computed for any of them against a fixed model snapshot.

use super::config::Strategy;
use crate::error::Result;
use crate::imageops::{apply_subpolicy, default_augment, DatasetKind, Image};
use crate::metrics::Augmenter;
use crate::oracle::{predict_proba, OracleModel};
use crate::policy::sample_subpolicy;
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::selection::kmeanspp_select;
use rand::Rng;

/// Uniform size-`k` subset of `0..n` by partial Fisher-Yates; order of
/// the result is the draw order.
pub fn uniform_subset(n: usize, k: usize, rng: &mut Stream) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k.min(n));
    indices
}

/// Returns the input unchanged `k` times.
pub struct IdentityAugmenter;

impl Augmenter for IdentityAugmenter {
    fn name(&self) -> &'static str {
        Strategy::Identity.name()
    }

    fn augment_set(
        &self,
        image: &Image,
        k: usize,
        _pool: &[Image],
        _rng: &mut Stream,
    ) -> Result<Vec<Image>> {
        Ok(vec![image.clone(); k])
    }
}

/// `k` independent draws of the dataset's conventional augmentation.
pub struct DefaultOnlyAugmenter {
    pub kind: DatasetKind,
}

impl Augmenter for DefaultOnlyAugmenter {
    fn name(&self) -> &'static str {
        Strategy::DefaultOnly.name()
    }

    fn augment_set(
        &self,
        image: &Image,
        k: usize,
        _pool: &[Image],
        rng: &mut Stream,
    ) -> Result<Vec<Image>> {
        (0..k)
            .map(|_| default_augment(image, self.kind, rng))
            .collect()
    }
}

/// How the expand-select strategies pick `k` of the `e` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// k-means++ seeding on the candidates' probability vectors.
    MaxSpread,
    /// Uniform subset, scores unused.
    Uniform,
}

/// Expand `e` candidates (sub-policy then default augmentation), score
/// them with a model snapshot, and keep `k` by the configured rule.
pub struct ExpandSelectAugmenter<'a, S: Scalar> {
    pub model: &'a OracleModel<S>,
    pub kind: DatasetKind,
    pub candidates: usize,
    pub mode: SelectMode,
}

impl<'a, S: Scalar> ExpandSelectAugmenter<'a, S> {
    pub fn divaug(model: &'a OracleModel<S>, kind: DatasetKind, candidates: usize) -> Self {
        Self {
            model,
            kind,
            candidates,
            mode: SelectMode::MaxSpread,
        }
    }

    pub fn random_select(model: &'a OracleModel<S>, kind: DatasetKind, candidates: usize) -> Self {
        Self {
            model,
            kind,
            candidates,
            mode: SelectMode::Uniform,
        }
    }
}

impl<'a, S: Scalar> Augmenter for ExpandSelectAugmenter<'a, S> {
    fn name(&self) -> &'static str {
        match self.mode {
            SelectMode::MaxSpread => Strategy::DivAug.name(),
            SelectMode::Uniform => Strategy::RandomSelect.name(),
        }
    }

    fn augment_set(
        &self,
        image: &Image,
        k: usize,
        pool: &[Image],
        rng: &mut Stream,
    ) -> Result<Vec<Image>> {
        let e = self.candidates.max(k);
        let mut variants = Vec::with_capacity(e);
        for _ in 0..e {
            let sub_policy = sample_subpolicy(rng);
            let augmented = apply_subpolicy(&sub_policy, image, rng, pool)?;
            variants.push(default_augment(&augmented, self.kind, rng)?);
        }
        let chosen = match self.mode {
            SelectMode::MaxSpread => {
                let scored = predict_proba(self.model, &variants)?;
                kmeanspp_select(&scored, k, rng)?.chosen_indices
            }
            SelectMode::Uniform => uniform_subset(e, k, rng),
        };
        Ok(chosen.into_iter().map(|i| variants[i].clone()).collect())
    }
}

/// Build the augmenter for a named strategy against a model snapshot.
pub fn augmenter_for<'a, S: Scalar>(
    strategy: Strategy,
    model: &'a OracleModel<S>,
    kind: DatasetKind,
    candidates: usize,
) -> Box<dyn Augmenter + 'a> {
    match strategy {
        Strategy::Identity => Box::new(IdentityAugmenter),
        Strategy::DefaultOnly => Box::new(DefaultOnlyAugmenter { kind }),
        Strategy::DivAug => Box::new(ExpandSelectAugmenter::divaug(model, kind, candidates)),
        Strategy::RandomSelect => Box::new(ExpandSelectAugmenter::random_select(
            model, kind, candidates,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, PURPOSE_MEASURE};
    use std::collections::HashSet;

    #[test]
    fn uniform_subset_is_distinct_and_in_range() {
        let mut rng = stream(3, &[PURPOSE_MEASURE, 0]);
        for _ in 0..200 {
            let pick = uniform_subset(8, 4, &mut rng);
            let set: HashSet<usize> = pick.iter().copied().collect();
            assert_eq!(set.len(), 4);
            assert!(pick.iter().all(|&i| i < 8));
        }
    }

    #[test]
    fn uniform_subset_covers_all_positions() {
        let mut rng = stream(4, &[PURPOSE_MEASURE, 1]);
        let mut counts = [0usize; 8];
        let trials = 8000;
        for _ in 0..trials {
            for i in uniform_subset(8, 4, &mut rng) {
                counts[i] += 1;
            }
        }
        for &c in &counts {
            let freq = c as f64 / (trials * 4) as f64;
            assert!((freq - 0.125).abs() < 0.01, "index frequency {freq}");
        }
    }
}
