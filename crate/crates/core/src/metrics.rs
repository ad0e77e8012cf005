//! Measurement instruments: dataset-level variance diversity, affinity,
//! loss diversity, sub-policy statistics, and the metric writers.
//!
//! Per-image measurement streams are keyed by image content, not dataset
//! position, and per-image results are accumulated in sorted order, so the
//! measures do not depend on dataset ordering.

use crate::error::{Error, Result};
use crate::imageops::{Image, OpKind};
use crate::oracle::{ce_loss, OracleModel};
use crate::policy::SubPolicy;
use crate::rng::{content_digest, stream, Stream, PURPOSE_MEASURE};
use crate::scalar::Scalar;
use crate::selection::variance_diversity;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// A named augmentation strategy, as seen by the measurement protocol:
/// it turns one image into `k` augmented variants.
pub trait Augmenter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Produce `k` variants of `image`. `pool` supplies SamplePairing
    /// partners; all randomness comes from `rng`.
    fn augment_set(
        &self,
        image: &Image,
        k: usize,
        pool: &[Image],
        rng: &mut Stream,
    ) -> Result<Vec<Image>>;
}

/// Partner pool in content order, so pool indexing is independent of
/// dataset ordering.
fn canonical_pool(images: &[Image]) -> Vec<Image> {
    let mut pool: Vec<Image> = images.to_vec();
    pool.sort_by_key(|img| content_digest(img.pixels()));
    pool
}

fn measure_stream(seed: u64, image: &Image) -> Stream {
    stream(seed, &[PURPOSE_MEASURE, content_digest(image.pixels())])
}

/// Sum in ascending value order; the result is a pure function of the
/// multiset of values.
fn ordered_mean<S: Scalar>(mut values: Vec<S>) -> S {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric values"));
    let count = S::from_f64_lossy(values.len() as f64);
    values.into_iter().sum::<S>() / count
}

/// Averaged variance diversity over the dataset: for each image, generate
/// `k` variants with the strategy, score them with the model, and measure
/// the spread of the probability vectors.
pub fn dataset_variance_diversity<S: Scalar>(
    model: &OracleModel<S>,
    images: &[Image],
    augmenter: &dyn Augmenter,
    k: usize,
    seed: u64,
) -> Result<S> {
    if k < 2 {
        return Err(Error::Config("diversity protocol needs k >= 2".into()));
    }
    if images.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let pool = canonical_pool(images);
    let mut per_image = Vec::with_capacity(images.len());
    for image in images {
        let mut rng = measure_stream(seed, image);
        let variants = augmenter.augment_set(image, k, &pool, &mut rng)?;
        let scored = crate::oracle::predict_proba(model, &variants)?;
        per_image.push(variance_diversity(&scored)?);
    }
    Ok(ordered_mean(per_image))
}

/// Top-1 accuracy of the model on a labeled set.
pub fn accuracy<S: Scalar>(
    model: &OracleModel<S>,
    images: &[Image],
    labels: &[usize],
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    if images.len() != labels.len() {
        return Err(Error::ShapeMismatch("images vs labels".into()));
    }
    let mut hits = 0usize;
    for (image, &label) in images.iter().zip(labels) {
        if model.predict_one(image)?.argmax() == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}

/// Accuracy shift caused by augmenting the validation set once:
/// `accuracy(augmented) - accuracy(clean)`, in `[-1, 1]`.
pub fn affinity<S: Scalar>(
    model: &OracleModel<S>,
    images: &[Image],
    labels: &[usize],
    augmenter: &dyn Augmenter,
    seed: u64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let pool = canonical_pool(images);
    let mut augmented = Vec::with_capacity(images.len());
    for image in images {
        let mut rng = measure_stream(seed, image);
        let mut variants = augmenter.augment_set(image, 1, &pool, &mut rng)?;
        augmented.push(variants.remove(0));
    }
    let clean = accuracy(model, images, labels)?;
    let shifted = accuracy(model, &augmented, labels)?;
    Ok(shifted - clean)
}

/// Mean cross-entropy of the model over a labeled set of augmented images.
pub fn loss_diversity<S: Scalar>(
    model: &OracleModel<S>,
    augmented_set: &[(Image, usize)],
) -> Result<S> {
    if augmented_set.is_empty() {
        return Err(Error::EmptyInput("augmented set"));
    }
    let mut losses = Vec::with_capacity(augmented_set.len());
    for (image, label) in augmented_set {
        let p = model.predict_one(image)?;
        losses.push(ce_loss(&p, *label)?);
    }
    Ok(ordered_mean(losses))
}

/// Dataset-level loss diversity under a strategy: `k` variants per image
/// (same streams as [`dataset_variance_diversity`]), mean cross-entropy
/// over all variants.
pub fn dataset_loss_diversity<S: Scalar>(
    model: &OracleModel<S>,
    images: &[Image],
    labels: &[usize],
    augmenter: &dyn Augmenter,
    k: usize,
    seed: u64,
) -> Result<S> {
    if images.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if images.len() != labels.len() {
        return Err(Error::ShapeMismatch("images vs labels".into()));
    }
    let pool = canonical_pool(images);
    let mut per_image = Vec::with_capacity(images.len());
    for (image, &label) in images.iter().zip(labels) {
        let mut rng = measure_stream(seed, image);
        let variants = augmenter.augment_set(image, k, &pool, &mut rng)?;
        let set: Vec<(Image, usize)> = variants.into_iter().map(|v| (v, label)).collect();
        per_image.push(loss_diversity(model, &set)?);
    }
    Ok(ordered_mean(per_image))
}

/// One emitted measurement.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub step: usize,
    pub metric_name: String,
    pub value: f64,
    pub context: BTreeMap<String, String>,
}

impl MetricsRecord {
    pub fn new(epoch: usize, step: usize, metric_name: &str, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        Ok(Self {
            epoch,
            step,
            metric_name: metric_name.to_string(),
            value,
            context: BTreeMap::new(),
        })
    }

    pub fn with_context(mut self, key: &str, value: &str) -> Self {
        self.context.insert(key.to_string(), value.to_string());
        self
    }
}

/// Writes each record as one JSON object per line and as one row of the
/// flat CSV export.
pub struct MetricsWriter {
    jsonl: BufWriter<File>,
    csv: BufWriter<File>,
}

impl MetricsWriter {
    /// Create `metrics.jsonl` and `metrics.csv` (with header) in `dir`.
    pub fn create(dir: &Path) -> Result<Self> {
        let jsonl = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        let mut csv = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(csv, "epoch,step,metric,value,context")?;
        Ok(Self { jsonl, csv })
    }

    pub fn emit(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Config(format!("metrics serialization: {e}")))?;
        writeln!(self.jsonl, "{line}")?;
        let context = record
            .context
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            self.csv,
            "{},{},{},{},{}",
            record.epoch, record.step, record.metric_name, record.value, context
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.jsonl.flush()?;
        self.csv.flush()?;
        Ok(())
    }
}

/// Per-epoch statistics of the sub-policies that survived selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SubPolicyStats {
    pub epoch: usize,
    /// Fraction of operations of each kind, aligned with [`OpKind::ALL`].
    pub op_frequency: [f64; 16],
    pub mean_applied_p: f64,
    pub mean_m: f64,
}

impl SubPolicyStats {
    pub fn frequency(&self, kind: OpKind) -> f64 {
        self.op_frequency[kind.index()]
    }
}

/// Aggregate the chosen sub-policies of one epoch: operation-kind
/// frequencies over both slots, and the mean `p` and `m` among chosen
/// operations.
pub fn record_subpolicy_stats(
    selections: &[(SubPolicy, bool)],
    epoch: usize,
) -> Result<SubPolicyStats> {
    let mut counts = [0usize; 16];
    let mut total_ops = 0usize;
    let mut p_sum = 0.0;
    let mut m_sum = 0.0;
    for (sub_policy, chosen) in selections {
        if !chosen {
            continue;
        }
        for op in [&sub_policy.op1, &sub_policy.op2] {
            counts[op.kind().index()] += 1;
            total_ops += 1;
            p_sum += op.p();
            m_sum += op.m();
        }
    }
    if total_ops == 0 {
        return Err(Error::EmptyInput("chosen sub-policies"));
    }
    let mut op_frequency = [0.0f64; 16];
    for (f, &c) in op_frequency.iter_mut().zip(&counts) {
        *f = c as f64 / total_ops as f64;
    }
    Ok(SubPolicyStats {
        epoch,
        op_frequency,
        mean_applied_p: p_sum / total_ops as f64,
        mean_m: m_sum / total_ops as f64,
    })
}

/// Appends one row per epoch to `subpolicy_stats.csv`.
pub struct SubPolicyStatsWriter {
    out: BufWriter<File>,
}

impl SubPolicyStatsWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(dir.join("subpolicy_stats.csv"))?);
        let names: Vec<&str> = OpKind::ALL.iter().map(|k| k.name()).collect();
        writeln!(out, "epoch,{},mean_applied_p,mean_m", names.join(","))?;
        Ok(Self { out })
    }

    pub fn append(&mut self, stats: &SubPolicyStats) -> Result<()> {
        let freqs = stats
            .op_frequency
            .iter()
            .map(|f| f.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(
            self.out,
            "{},{},{},{}",
            stats.epoch, freqs, stats.mean_applied_p, stats.mean_m
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
