use super::*;
use crate::imageops::{apply_transform, OpKind};
use crate::metrics::{
    affinity, dataset_loss_diversity, dataset_variance_diversity, loss_diversity, Augmenter,
};
use crate::oracle::{ce_loss, OracleModel};
use crate::pipeline::strategy::{augmenter_for, IdentityAugmenter};
use crate::rng::Stream;
use std::fs;
use std::path::Path;

fn quick_dataset(seed: u64) -> DatasetSpec {
    DatasetSpec::Synthetic(SyntheticSpec {
        classes: 2,
        samples_per_class: 24,
        size: 16,
        seed,
    })
}

fn quick_config(strategy: Strategy, seed: u64, out: &Path) -> RunConfig {
    RunConfig {
        dataset: quick_dataset(100),
        candidates_per_image: 4,
        selected_per_image: 2,
        epochs: 2,
        batch_size: 12,
        lr: 0.05,
        weight_decay: 1e-4,
        seed,
        strategy,
        output_dir: out.to_path_buf(),
    }
}

#[test]
fn identity_strategy_matches_plain_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(Strategy::Identity, 5, &dir.path().join("run"));
    let outcome = train_with_divaug(&cfg, &TrainOptions::default()).unwrap();

    // independent plain loop: same shuffles, same init, no augmentation
    let (split, _) = load_dataset(&cfg.dataset).unwrap();
    let norm = Normalization::from_images(&split.images).unwrap();
    let arch = default_architecture(&split).unwrap();
    let mut plain = OracleModel::<f64>::init(arch, norm, cfg.seed).unwrap();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..split.len()).collect();
        let mut rng = stream(cfg.seed, &[PURPOSE_SHUFFLE, epoch as u64]);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Image, usize)> = chunk
                .iter()
                .map(|&i| (split.images[i].clone(), split.labels[i]))
                .collect();
            sgd_step(&mut plain, &batch, cfg.lr, cfg.weight_decay).unwrap();
        }
    }
    assert_eq!(outcome.model.params(), plain.params());
}

#[test]
fn work_accounting_counters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(Strategy::DivAug, 6, &dir.path().join("divaug"));
    let outcome = train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    let n = 48u64;
    // scoring covers batch_size x E per step, training batch_size x S
    assert_eq!(outcome.scoring_forward_passes, n * 4 * 2);
    assert_eq!(outcome.training_images_seen, n * 2 * 2);
    assert_eq!(outcome.optimizer_steps, 8);

    let cfg = quick_config(Strategy::RandomSelect, 6, &dir.path().join("random"));
    let outcome = train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    // the random baseline only scores what it keeps
    assert_eq!(outcome.scoring_forward_passes, n * 2 * 2);
    assert_eq!(outcome.training_images_seen, n * 2 * 2);

    let cfg = quick_config(Strategy::Identity, 6, &dir.path().join("identity"));
    let outcome = train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    assert_eq!(outcome.scoring_forward_passes, 0);
    assert_eq!(outcome.training_images_seen, n * 2);
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes: Vec<Vec<u8>> = Vec::new();
    for (tag, workers) in [(0usize, 1usize), (1, 4), (2, 1)] {
        let out = dir.path().join(format!("run{tag}"));
        let cfg = quick_config(Strategy::DivAug, 42, &out);
        let options = TrainOptions {
            workers,
            diversity_probe: None,
        };
        train_with_divaug(&cfg, &options).unwrap();
        let mut all = fs::read(out.join("metrics.jsonl")).unwrap();
        all.extend(fs::read(out.join("metrics.csv")).unwrap());
        all.extend(fs::read(out.join("subpolicy_stats.csv")).unwrap());
        all.extend(fs::read(out.join("checkpoint.dvag")).unwrap());
        bytes.push(all);
    }
    assert_eq!(bytes[0], bytes[1], "worker count changed the outputs");
    assert_eq!(bytes[0], bytes[2], "a re-run changed the outputs");
}

#[test]
fn invalid_configs_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(Strategy::DivAug, 1, dir.path());
    cfg.epochs = 0;
    assert!(matches!(
        train_with_divaug(&cfg, &TrainOptions::default()),
        Err(Error::Config(_))
    ));
    let mut cfg = quick_config(Strategy::DivAug, 1, dir.path());
    cfg.selected_per_image = 10;
    assert!(train_with_divaug(&cfg, &TrainOptions::default()).is_err());
}

#[test]
fn empty_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("empty.bin");
    fs::write(&bin, b"").unwrap();
    let mut cfg = quick_config(Strategy::Identity, 1, &dir.path().join("out"));
    cfg.dataset = DatasetSpec::Cifar10Binary(bin);
    assert!(matches!(
        train_with_divaug(&cfg, &TrainOptions::default()),
        Err(Error::Config(_))
    ));
}

#[test]
fn stats_csv_has_one_row_per_epoch_summing_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(Strategy::DivAug, 9, &dir.path().join("run"));
    train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    let text = fs::read_to_string(dir.path().join("run/subpolicy_stats.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + cfg.epochs);
    assert!(lines[0].starts_with("epoch,Sharpness,"));
    for row in &lines[1..] {
        let fields: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields.len(), 1 + 16 + 2);
        let sum: f64 = fields[1..17].iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "frequencies sum to {sum}");
    }
}

#[test]
fn identity_strategy_emits_no_stats_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(Strategy::Identity, 9, &dir.path().join("run"));
    train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    let text = fs::read_to_string(dir.path().join("run/subpolicy_stats.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn linear_oracle_learns_the_synthetic_shapes() {
    let split = generate_synthetic(&SyntheticSpec {
        classes: 3,
        samples_per_class: 200,
        size: 32,
        seed: 77,
    })
    .unwrap();
    let norm = Normalization::from_images(&split.images).unwrap();
    let arch = Architecture {
        input_height: 32,
        input_width: 32,
        input_channels: 1,
        hidden: None,
        classes: 3,
    };
    let mut model = OracleModel::<f64>::init(arch, norm, 78).unwrap();
    let data: Vec<(Image, usize)> = split
        .images
        .iter()
        .cloned()
        .zip(split.labels.iter().copied())
        .collect();
    for _ in 0..500 {
        sgd_step(&mut model, &data, 0.5, 0.0).unwrap();
    }
    let acc = crate::metrics::accuracy(&model, &split.images, &split.labels).unwrap();
    assert!(acc >= 0.80, "linear train accuracy only {acc}");
}

fn frozen_model(seed: u64) -> (OracleModel<f64>, DatasetSplit) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(Strategy::Identity, seed, &dir.path().join("frozen"));
    cfg.epochs = 4;
    let outcome = train_with_divaug(&cfg, &TrainOptions::default()).unwrap();
    let (split, _) = load_dataset(&cfg.dataset).unwrap();
    (outcome.model, split)
}

#[test]
fn identity_metrics_are_exactly_zero() {
    let (model, split) = frozen_model(3);
    let augmenter = IdentityAugmenter;
    let vd = dataset_variance_diversity(&model, &split.images, &augmenter, 4, 7).unwrap();
    assert_eq!(vd, 0.0);
    let af = affinity(&model, &split.images, &split.labels, &augmenter, 7).unwrap();
    assert_eq!(af, 0.0);
}

#[test]
fn divaug_measurement_beats_identity_on_a_nonconstant_model() {
    let (model, split) = frozen_model(4);
    let aug = augmenter_for(Strategy::DivAug, &model, DatasetKind::Synthetic, 8);
    let vd = dataset_variance_diversity(&model, &split.images, aug.as_ref(), 4, 7).unwrap();
    assert!(vd > 0.0, "diversity {vd}");
}

#[test]
fn diversity_measure_ignores_dataset_order() {
    let (model, split) = frozen_model(5);
    let aug = augmenter_for(Strategy::DefaultOnly, &model, DatasetKind::Synthetic, 8);
    let forward = dataset_variance_diversity(&model, &split.images, aug.as_ref(), 4, 11).unwrap();
    let mut reversed = split.images.clone();
    reversed.reverse();
    let backward = dataset_variance_diversity(&model, &reversed, aug.as_ref(), 4, 11).unwrap();
    assert_eq!(forward, backward);
}

/// Applies one fixed kernel unconditionally; used as a "destructive"
/// strategy in affinity tests.
struct FixedKernel(OpKind);

impl Augmenter for FixedKernel {
    fn name(&self) -> &'static str {
        "fixed-kernel"
    }

    fn augment_set(
        &self,
        image: &Image,
        k: usize,
        _pool: &[Image],
        _rng: &mut Stream,
    ) -> crate::error::Result<Vec<Image>> {
        (0..k)
            .map(|_| apply_transform(self.0, image, 1.0, None))
            .collect()
    }
}

#[test]
fn destructive_augmenter_has_nonpositive_affinity() {
    // models trained without inversion should not get better on
    // inverted inputs; allow one contrarian seed in ten
    let mut nonpositive = 0;
    for seed in 0..10u64 {
        let (model, split) = frozen_model(20 + seed);
        let af = affinity(
            &model,
            &split.images,
            &split.labels,
            &FixedKernel(OpKind::Invert),
            seed,
        )
        .unwrap();
        assert!((-1.0..=1.0).contains(&af));
        if af <= 0.0 {
            nonpositive += 1;
        }
    }
    assert!(nonpositive >= 9, "only {nonpositive}/10 trials nonpositive");
}

#[test]
fn loss_diversity_of_identity_equals_plain_mean_loss() {
    let (model, split) = frozen_model(6);
    let set: Vec<(Image, usize)> = split
        .images
        .iter()
        .cloned()
        .zip(split.labels.iter().copied())
        .collect();
    let ld = loss_diversity(&model, &set).unwrap();
    let mut losses: Vec<f64> = set
        .iter()
        .map(|(img, y)| ce_loss(&model.predict_one(img).unwrap(), *y).unwrap())
        .collect();
    losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    assert_eq!(ld, mean);
    assert!(ld >= 0.0);
}

fn spearman_rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let ra = rank(a);
    let rb = rank(b);
    let n = a.len() as f64;
    let mean = (n - 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (ra[i] - mean) * (rb[i] - mean);
        va += (ra[i] - mean).powi(2);
        vb += (rb[i] - mean).powi(2);
    }
    cov / (va.sqrt() * vb.sqrt())
}

#[test]
fn loss_diversity_tracks_variance_diversity_across_strategies() {
    let (model, split) = frozen_model(7);
    let mut vd = Vec::new();
    let mut ld = Vec::new();
    for strategy in [
        Strategy::Identity,
        Strategy::DefaultOnly,
        Strategy::RandomSelect,
        Strategy::DivAug,
    ] {
        let aug = augmenter_for(strategy, &model, DatasetKind::Synthetic, 8);
        vd.push(dataset_variance_diversity(&model, &split.images, aug.as_ref(), 4, 13).unwrap());
        ld.push(
            dataset_loss_diversity(&model, &split.images, &split.labels, aug.as_ref(), 4, 13)
                .unwrap(),
        );
    }
    let rho = spearman_rank_correlation(&vd, &ld);
    assert!(rho > 0.0, "rank correlation {rho} (vd {vd:?}, ld {ld:?})");
}
