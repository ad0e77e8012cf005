//! End-to-end orchestration: configuration, dataset loading, the per-batch
//! expand -> score -> select -> train loop, metric emission, and the CLI.
//!
//! Every optimizer step works on a model snapshot taken at the start of
//! the batch: candidates are generated and scored against the snapshot in
//! parallel across images (per-image streams keep the result independent
//! of the worker count), then the step itself runs serially.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod strategy;

pub use config::{DatasetSpec, RunConfig, Strategy};
pub use dataset::{
    generate_synthetic, load_cifar10_binary, load_image_dir, DatasetSplit, SyntheticSpec,
};

use crate::error::{Error, Result};
use crate::imageops::{apply_subpolicy, default_augment, DatasetKind, Image};
use crate::metrics::{record_subpolicy_stats, MetricsRecord, MetricsWriter, SubPolicyStatsWriter};
use crate::oracle::{
    predict_proba, save_checkpoint, sgd_step, Architecture, Normalization, OracleModel,
};
use crate::policy::{sample_subpolicy, Candidate, CandidateSet, SubPolicy};
use crate::rng::{
    stream, PURPOSE_CANDIDATE, PURPOSE_SELECT, PURPOSE_SELECT_BASELINE, PURPOSE_SHUFFLE,
};
use crate::selection::{select, variance_diversity};
use rand::Rng;
use rayon::prelude::*;
use std::fs;
use std::path::PathBuf;

/// Hidden width of the default oracle.
pub const DEFAULT_HIDDEN: usize = 64;

/// Resolve a dataset spec into images plus the augmentation convention it
/// follows.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(DatasetSplit, DatasetKind)> {
    match spec {
        DatasetSpec::Cifar10Binary(path) => Ok((load_cifar10_binary(path)?, DatasetKind::Cifar)),
        DatasetSpec::ImageDir(path) => Ok((load_image_dir(path)?, DatasetKind::Synthetic)),
        DatasetSpec::Synthetic(spec) => Ok((generate_synthetic(spec)?, DatasetKind::Synthetic)),
    }
}

/// Architecture of the default oracle for a dataset split.
pub fn default_architecture(split: &DatasetSplit) -> Result<Architecture> {
    let first = split
        .images
        .first()
        .ok_or(Error::EmptyInput("dataset split"))?;
    Ok(Architecture {
        input_height: first.height(),
        input_width: first.width(),
        input_channels: first.channels(),
        hidden: Some(DEFAULT_HIDDEN),
        classes: split.class_count,
    })
}

/// Execution knobs that must not change results: the worker count only
/// affects scheduling, and the probe only adds a metric stream.
pub struct TrainOptions {
    pub workers: usize,
    /// Extra frozen model used to emit `batch_diversity_frozen` records,
    /// comparable across runs that trained different models.
    pub diversity_probe: Option<OracleModel<f64>>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            diversity_probe: None,
        }
    }
}

/// Trained model plus instrumentation counters.
pub struct TrainOutcome {
    pub model: OracleModel<f64>,
    /// Oracle forward passes spent scoring candidates.
    pub scoring_forward_passes: u64,
    /// Images that went through the optimizer.
    pub training_images_seen: u64,
    pub optimizer_steps: u64,
    pub mean_loss_last_epoch: f64,
    pub checkpoint_path: PathBuf,
}

struct BatchContext<'a> {
    snapshot: &'a OracleModel<f64>,
    probe: Option<&'a OracleModel<f64>>,
    kind: DatasetKind,
    candidates: usize,
    selected: usize,
    seed: u64,
    epoch: usize,
    strategy: Strategy,
    pool: &'a [Image],
}

struct ImagePlan {
    train_images: Vec<Image>,
    label: usize,
    policy_flags: Vec<(SubPolicy, bool)>,
    live_diversity: Option<f64>,
    probe_diversity: Option<f64>,
    /// Probe diversity of a uniformly-selected subset of the same
    /// candidates; the paired baseline for the selection stage.
    probe_baseline_diversity: Option<f64>,
    scoring_forwards: u64,
}

fn expand_candidates(
    ctx: &BatchContext,
    image: &Image,
    source_index: usize,
) -> Result<Vec<Candidate>> {
    let mut candidates = Vec::with_capacity(ctx.candidates);
    for j in 0..ctx.candidates {
        let mut rng = stream(
            ctx.seed,
            &[
                PURPOSE_CANDIDATE,
                ctx.epoch as u64,
                source_index as u64,
                j as u64,
            ],
        );
        let sub_policy = sample_subpolicy(&mut rng);
        let augmented = apply_subpolicy(&sub_policy, image, &mut rng, ctx.pool)?;
        let image = default_augment(&augmented, ctx.kind, &mut rng)?;
        candidates.push(Candidate { sub_policy, image });
    }
    Ok(candidates)
}

fn probe_diversity(probe: Option<&OracleModel<f64>>, images: &[Image]) -> Result<Option<f64>> {
    match probe {
        None => Ok(None),
        Some(model) => {
            let scored = predict_proba(model, images)?;
            Ok(Some(variance_diversity(&scored)?))
        }
    }
}

fn plan_image(
    ctx: &BatchContext,
    image: &Image,
    label: usize,
    source_index: usize,
) -> Result<ImagePlan> {
    match ctx.strategy {
        Strategy::Identity => Ok(ImagePlan {
            train_images: vec![image.clone()],
            label,
            policy_flags: Vec::new(),
            live_diversity: None,
            probe_diversity: None,
            probe_baseline_diversity: None,
            scoring_forwards: 0,
        }),
        Strategy::DefaultOnly => {
            let mut rng = stream(
                ctx.seed,
                &[PURPOSE_CANDIDATE, ctx.epoch as u64, source_index as u64, 0],
            );
            Ok(ImagePlan {
                train_images: vec![default_augment(image, ctx.kind, &mut rng)?],
                label,
                policy_flags: Vec::new(),
                live_diversity: None,
                probe_diversity: None,
                probe_baseline_diversity: None,
                scoring_forwards: 0,
            })
        }
        Strategy::DivAug => {
            let candidates = expand_candidates(ctx, image, source_index)?;
            let images: Vec<Image> = candidates.iter().map(|c| c.image.clone()).collect();
            let scored = predict_proba(ctx.snapshot, &images)?;
            let set = CandidateSet {
                source_index,
                candidates,
                prob_vectors: Some(scored),
            };
            let mut sel_rng = stream(
                ctx.seed,
                &[PURPOSE_SELECT, ctx.epoch as u64, source_index as u64],
            );
            let sel = select(&set, ctx.selected, &mut sel_rng)?;
            let train_images: Vec<Image> = sel
                .chosen_indices
                .iter()
                .map(|&i| set.candidates[i].image.clone())
                .collect();
            let policy_flags = set
                .candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.sub_policy, sel.chosen_indices.contains(&i)))
                .collect();
            let probe_baseline_diversity = match ctx.probe {
                None => None,
                Some(probe) => {
                    let mut base_rng = stream(
                        ctx.seed,
                        &[
                            PURPOSE_SELECT_BASELINE,
                            ctx.epoch as u64,
                            source_index as u64,
                        ],
                    );
                    let picked =
                        strategy::uniform_subset(ctx.candidates, ctx.selected, &mut base_rng);
                    let images: Vec<Image> = picked
                        .iter()
                        .map(|&i| set.candidates[i].image.clone())
                        .collect();
                    probe_diversity(Some(probe), &images)?
                }
            };
            Ok(ImagePlan {
                probe_diversity: probe_diversity(ctx.probe, &train_images)?,
                probe_baseline_diversity,
                train_images,
                label,
                policy_flags,
                live_diversity: Some(sel.diversity),
                scoring_forwards: ctx.candidates as u64,
            })
        }
        Strategy::RandomSelect => {
            let candidates = expand_candidates(ctx, image, source_index)?;
            let mut sel_rng = stream(
                ctx.seed,
                &[PURPOSE_SELECT, ctx.epoch as u64, source_index as u64],
            );
            let chosen = strategy::uniform_subset(ctx.candidates, ctx.selected, &mut sel_rng);
            let train_images: Vec<Image> = chosen
                .iter()
                .map(|&i| candidates[i].image.clone())
                .collect();
            let scored = predict_proba(ctx.snapshot, &train_images)?;
            let policy_flags = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| (c.sub_policy, chosen.contains(&i)))
                .collect();
            Ok(ImagePlan {
                probe_diversity: probe_diversity(ctx.probe, &train_images)?,
                probe_baseline_diversity: None,
                live_diversity: Some(variance_diversity(&scored)?),
                train_images,
                label,
                policy_flags,
                scoring_forwards: ctx.selected as u64,
            })
        }
    }
}

/// Run the full training loop described by `config`. Returns the trained
/// model; metrics, sub-policy statistics and the final checkpoint are
/// written under `config.output_dir`.
pub fn train_with_divaug(config: &RunConfig, options: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let (split, kind) = load_dataset(&config.dataset)?;
    if split.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let norm = Normalization::from_images(&split.images)?;
    let arch = default_architecture(&split)?;
    let mut model = OracleModel::<f64>::init(arch, norm, config.seed)?;

    fs::create_dir_all(&config.output_dir)?;
    let mut metrics = MetricsWriter::create(&config.output_dir)?;
    let mut stats_writer = SubPolicyStatsWriter::create(&config.output_dir)?;

    let thread_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;

    let n = split.len();
    let mut scoring_forward_passes = 0u64;
    let mut training_images_seen = 0u64;
    let mut optimizer_steps = 0u64;
    let mut mean_loss_last_epoch = f64::NAN;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = stream(config.seed, &[PURPOSE_SHUFFLE, epoch as u64]);
        for i in (1..n).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_flags: Vec<(SubPolicy, bool)> = Vec::new();
        let mut epoch_loss_sum = 0.0;
        let mut epoch_steps = 0u64;

        for (step, batch_indices) in order.chunks(config.batch_size).enumerate() {
            let originals: Vec<Image> = batch_indices
                .iter()
                .map(|&i| split.images[i].clone())
                .collect();
            let snapshot = model.clone();
            let ctx = BatchContext {
                snapshot: &snapshot,
                probe: options.diversity_probe.as_ref(),
                kind,
                candidates: config.candidates_per_image,
                selected: config.selected_per_image,
                seed: config.seed,
                epoch,
                strategy: config.strategy,
                pool: &originals,
            };
            let plans: Vec<ImagePlan> = thread_pool.install(|| {
                batch_indices
                    .par_iter()
                    .enumerate()
                    .map(|(pos, &src)| plan_image(&ctx, &originals[pos], split.labels[src], src))
                    .collect::<Result<Vec<_>>>()
            })?;

            let mut batch: Vec<(Image, usize)> = Vec::new();
            let mut live_divs: Vec<f64> = Vec::new();
            let mut probe_divs: Vec<f64> = Vec::new();
            let mut probe_baseline_divs: Vec<f64> = Vec::new();
            for plan in plans {
                scoring_forward_passes += plan.scoring_forwards;
                if let Some(d) = plan.live_diversity {
                    live_divs.push(d);
                }
                if let Some(d) = plan.probe_diversity {
                    probe_divs.push(d);
                }
                if let Some(d) = plan.probe_baseline_diversity {
                    probe_baseline_divs.push(d);
                }
                epoch_flags.extend(plan.policy_flags);
                let label = plan.label;
                for img in plan.train_images {
                    batch.push((img, label));
                }
            }
            training_images_seen += batch.len() as u64;

            let loss = sgd_step(&mut model, &batch, config.lr, config.weight_decay).map_err(
                |e| match e {
                    Error::NonFiniteLoss => Error::Diverged { epoch, step },
                    other => other,
                },
            )?;
            optimizer_steps += 1;
            epoch_loss_sum += loss;
            epoch_steps += 1;

            metrics.emit(
                &MetricsRecord::new(epoch, step, "loss", loss)?
                    .with_context("strategy", config.strategy.name()),
            )?;
            if !live_divs.is_empty() {
                let mean = live_divs.iter().sum::<f64>() / live_divs.len() as f64;
                metrics.emit(
                    &MetricsRecord::new(epoch, step, "batch_diversity", mean)?
                        .with_context("strategy", config.strategy.name()),
                )?;
            }
            if !probe_divs.is_empty() {
                let mean = probe_divs.iter().sum::<f64>() / probe_divs.len() as f64;
                metrics.emit(
                    &MetricsRecord::new(epoch, step, "batch_diversity_frozen", mean)?
                        .with_context("strategy", config.strategy.name()),
                )?;
            }
            if !probe_baseline_divs.is_empty() {
                let mean =
                    probe_baseline_divs.iter().sum::<f64>() / probe_baseline_divs.len() as f64;
                metrics.emit(
                    &MetricsRecord::new(epoch, step, "batch_diversity_frozen_random", mean)?
                        .with_context("strategy", config.strategy.name()),
                )?;
            }
        }

        mean_loss_last_epoch = epoch_loss_sum / epoch_steps as f64;
        metrics.emit(
            &MetricsRecord::new(epoch, 0, "epoch_mean_loss", mean_loss_last_epoch)?
                .with_context("strategy", config.strategy.name()),
        )?;
        if epoch_flags.iter().any(|(_, chosen)| *chosen) {
            let stats = record_subpolicy_stats(&epoch_flags, epoch)?;
            stats_writer.append(&stats)?;
        }
    }

    metrics.finish()?;
    stats_writer.finish()?;
    let checkpoint_path = config.output_dir.join("checkpoint.dvag");
    save_checkpoint(&model, &checkpoint_path)?;

    Ok(TrainOutcome {
        model,
        scoring_forward_passes,
        training_images_seen,
        optimizer_steps,
        mean_loss_last_epoch,
        checkpoint_path,
    })
}

#[cfg(test)]
mod tests;
