//! Command-line interface.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 1 runtime error.

use super::config::{DatasetSpec, RunConfig};
use super::dataset::write_pnm;
use super::strategy::{augmenter_for, uniform_subset};
use super::{load_dataset, train_with_divaug, TrainOptions};
use crate::error::{Error, Result};
use crate::imageops::apply_subpolicy;
use crate::metrics::{
    affinity, dataset_loss_diversity, dataset_variance_diversity, MetricsRecord, MetricsWriter,
};
use crate::oracle::{load_checkpoint, OracleModel, ProbVector};
use crate::policy::sample_subpolicy;
use crate::rng::{stream, PURPOSE_CANDIDATE, PURPOSE_SELECT};
use crate::selection::{brute_force_max_variance, kmeanspp_select, variance_diversity};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "divaug",
    version,
    about = "Diversity-maximizing data augmentation engine"
)]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run configuration file (flat key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Dataset spec: cifar10:PATH | dir:PATH | synthetic:k=v,...
    #[arg(long)]
    dataset: Option<String>,

    /// Selection strategy: divaug | random-select | default-only | identity.
    #[arg(long)]
    strategy: Option<String>,

    #[arg(long)]
    epochs: Option<usize>,

    /// Candidates generated per image.
    #[arg(long = "e")]
    candidates: Option<usize>,

    /// Candidates kept per image.
    #[arg(long = "s")]
    selected: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the expand-select training loop.
    Train {
        #[command(flatten)]
        overrides: RunOverrides,

        /// Worker threads for expansion and scoring (does not change
        /// results).
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Write E sub-policy variants of every input image plus a manifest.
    Augment {
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Compute variance diversity, affinity and loss diversity for a
    /// strategy against a checkpointed model.
    Measure {
        #[arg(long)]
        checkpoint: PathBuf,

        #[command(flatten)]
        overrides: RunOverrides,

        /// Augmented variants per image for the diversity protocol.
        #[arg(long, default_value_t = 4)]
        k: usize,
    },
    /// Compare kmeans++, brute-force and random selection on probability
    /// vectors read from a CSV file (one vector per row).
    SelectDemo {
        /// CSV file of probability vectors.
        #[arg(long)]
        vectors: PathBuf,

        /// Subset size.
        #[arg(long = "s", default_value_t = 4)]
        selected: usize,
    },
}

/// Parse and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn build_config(
    config_file: Option<&PathBuf>,
    seed: Option<u64>,
    output_dir: Option<&PathBuf>,
    overrides: &RunOverrides,
) -> Result<RunConfig> {
    let mut cfg = match config_file {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            let spec = overrides
                .dataset
                .as_deref()
                .ok_or_else(|| Error::Config("no --config file and no --dataset flag".into()))?
                .parse::<DatasetSpec>()?;
            RunConfig::with_dataset(spec)
        }
    };
    if let Some(ds) = &overrides.dataset {
        cfg.dataset = ds.parse()?;
    }
    if let Some(s) = &overrides.strategy {
        cfg.strategy = s.parse()?;
    }
    if let Some(v) = overrides.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = overrides.candidates {
        cfg.candidates_per_image = v;
    }
    if let Some(v) = overrides.selected {
        cfg.selected_per_image = v;
    }
    if let Some(v) = overrides.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = overrides.lr {
        cfg.lr = v;
    }
    if let Some(v) = overrides.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { overrides, workers } => {
            let cfg = build_config(
                cli.config.as_ref(),
                cli.seed,
                cli.output_dir.as_ref(),
                &overrides,
            )?;
            let options = TrainOptions {
                workers,
                diversity_probe: None,
            };
            let outcome = train_with_divaug(&cfg, &options)?;
            println!(
                "trained {} epochs ({} steps, {} training images, {} scoring passes)",
                cfg.epochs,
                outcome.optimizer_steps,
                outcome.training_images_seen,
                outcome.scoring_forward_passes
            );
            println!("last epoch mean loss {}", outcome.mean_loss_last_epoch);
            println!(
                "checkpoint written to {}",
                outcome.checkpoint_path.display()
            );
            Ok(())
        }
        Command::Augment { overrides } => {
            let cfg = build_config(
                cli.config.as_ref(),
                cli.seed,
                cli.output_dir.as_ref(),
                &overrides,
            )?;
            augment_command(&cfg)
        }
        Command::Measure {
            checkpoint,
            overrides,
            k,
        } => {
            let cfg = build_config(
                cli.config.as_ref(),
                cli.seed,
                cli.output_dir.as_ref(),
                &overrides,
            )?;
            measure_command(&cfg, &checkpoint, k, cli.output_dir.is_some())
        }
        Command::SelectDemo { vectors, selected } => {
            select_demo_command(&vectors, selected, cli.seed.unwrap_or(0))
        }
    }
}

fn augment_command(cfg: &RunConfig) -> Result<()> {
    let (split, _kind) = load_dataset(&cfg.dataset)?;
    if split.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    fs::create_dir_all(&cfg.output_dir)?;
    let manifest_path = cfg.output_dir.join("manifest.csv");
    let mut manifest = fs::File::create(&manifest_path)?;
    writeln!(manifest, "filename,source_index,label,op1,p1,m1,op2,p2,m2")?;
    let ext = if split.images[0].channels() == 1 {
        "pgm"
    } else {
        "ppm"
    };
    for (i, image) in split.images.iter().enumerate() {
        for j in 0..cfg.candidates_per_image {
            let mut rng = stream(cfg.seed, &[PURPOSE_CANDIDATE, 0, i as u64, j as u64]);
            let sub_policy = sample_subpolicy(&mut rng);
            let out = apply_subpolicy(&sub_policy, image, &mut rng, &split.images)?;
            let filename = format!("aug_{i:05}_{j}.{ext}");
            write_pnm(&out, &cfg.output_dir.join(&filename))?;
            writeln!(
                manifest,
                "{filename},{i},{},{},{},{},{},{},{}",
                split.labels[i],
                sub_policy.op1.kind().name(),
                sub_policy.op1.p(),
                sub_policy.op1.m(),
                sub_policy.op2.kind().name(),
                sub_policy.op2.p(),
                sub_policy.op2.m()
            )?;
        }
    }
    println!(
        "wrote {} variants of {} images to {}",
        split.len() * cfg.candidates_per_image,
        split.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn measure_command(cfg: &RunConfig, checkpoint: &Path, k: usize, write_files: bool) -> Result<()> {
    let model: OracleModel<f64> = load_checkpoint(checkpoint)?;
    let (split, kind) = load_dataset(&cfg.dataset)?;
    if split.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    let augmenter = augmenter_for(cfg.strategy, &model, kind, cfg.candidates_per_image);
    let vd = dataset_variance_diversity(&model, &split.images, augmenter.as_ref(), k, cfg.seed)?;
    let af = affinity(
        &model,
        &split.images,
        &split.labels,
        augmenter.as_ref(),
        cfg.seed,
    )?;
    let ld = dataset_loss_diversity(
        &model,
        &split.images,
        &split.labels,
        augmenter.as_ref(),
        k,
        cfg.seed,
    )?;
    println!("strategy {}", cfg.strategy.name());
    println!("variance_diversity {vd}");
    println!("affinity {af}");
    println!("loss_diversity {ld}");
    if write_files {
        fs::create_dir_all(&cfg.output_dir)?;
        let mut writer = MetricsWriter::create(&cfg.output_dir)?;
        for (name, value) in [
            ("variance_diversity", vd),
            ("affinity", af),
            ("loss_diversity", ld),
        ] {
            writer.emit(
                &MetricsRecord::new(0, 0, name, value)?
                    .with_context("strategy", cfg.strategy.name())
                    .with_context("k", &k.to_string()),
            )?;
        }
        writer.finish()?;
    }
    Ok(())
}

fn select_demo_command(path: &Path, selected: usize, seed: u64) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let mut vectors: Vec<ProbVector<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let values =
            values.map_err(|_| Error::Dataset(format!("line {}: not a number row", lineno + 1)))?;
        vectors.push(
            ProbVector::new(values)
                .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?,
        );
    }
    if vectors.is_empty() {
        return Err(Error::Dataset("no vectors in the CSV".into()));
    }

    let mut kpp_rng = stream(seed, &[PURPOSE_SELECT, 0]);
    let kpp = kmeanspp_select(&vectors, selected, &mut kpp_rng)?;
    let brute = brute_force_max_variance(&vectors, selected)?;
    let mut rnd_rng = stream(seed, &[PURPOSE_SELECT, 1]);
    let random_indices = uniform_subset(vectors.len(), selected, &mut rnd_rng);
    let random_vectors: Vec<ProbVector<f64>> =
        random_indices.iter().map(|&i| vectors[i].clone()).collect();
    let random_diversity = variance_diversity(&random_vectors)?;

    println!(
        "pool: {} vectors of dimension {}",
        vectors.len(),
        vectors[0].dim()
    );
    println!(
        "kmeans++    indices {:?} diversity {}",
        kpp.chosen_indices, kpp.diversity
    );
    println!(
        "brute-force indices {:?} diversity {}",
        brute.chosen_indices, brute.diversity
    );
    println!(
        "random      indices {:?} diversity {}",
        random_indices, random_diversity
    );
    Ok(())
}
