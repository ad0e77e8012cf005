//! Run configuration and the flat key-value config file.
//!
//! Config files hold `key = value` lines with `#` comments. Recognized
//! keys match the run-configuration fields exactly: `dataset`, `E`, `S`,
//! `epochs`, `batch_size`, `lr`, `weight_decay`, `seed`, `strategy`,
//! `output_dir`. Unknown keys are errors.

use super::dataset::SyntheticSpec;
use crate::error::{Error, Result};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// How training data is selected for each optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Expand E candidates, keep the S with maximal prediction spread.
    DivAug,
    /// Expand E candidates, keep S uniformly at random.
    RandomSelect,
    /// Only the dataset's conventional augmentation, one variant per image.
    DefaultOnly,
    /// Train on the raw images.
    Identity,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::DivAug => "divaug",
            Strategy::RandomSelect => "random-select",
            Strategy::DefaultOnly => "default-only",
            Strategy::Identity => "identity",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divaug" => Ok(Strategy::DivAug),
            "random-select" => Ok(Strategy::RandomSelect),
            "default-only" => Ok(Strategy::DefaultOnly),
            "identity" => Ok(Strategy::Identity),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected divaug, random-select, default-only or identity)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    /// `cifar10:PATH` - one CIFAR-10 binary batch file.
    Cifar10Binary(PathBuf),
    /// `dir:PATH` - PPM/PGM directory with manifest.csv.
    ImageDir(PathBuf),
    /// `synthetic:classes=3,samples_per_class=200,size=32,seed=0`.
    Synthetic(SyntheticSpec),
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (scheme, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("dataset {s:?} missing a 'scheme:' prefix")))?;
        match scheme {
            "cifar10" => Ok(DatasetSpec::Cifar10Binary(PathBuf::from(rest))),
            "dir" => Ok(DatasetSpec::ImageDir(PathBuf::from(rest))),
            "synthetic" => {
                let mut spec = SyntheticSpec {
                    classes: 3,
                    samples_per_class: 200,
                    size: 32,
                    seed: 0,
                };
                for part in rest.split(',').filter(|p| !p.is_empty()) {
                    let (key, value) = part.split_once('=').ok_or_else(|| {
                        Error::Config(format!("synthetic option {part:?} is not key=value"))
                    })?;
                    let parse = |v: &str| -> Result<usize> {
                        v.parse()
                            .map_err(|_| Error::Config(format!("bad synthetic value {v:?}")))
                    };
                    match key {
                        "classes" => spec.classes = parse(value)?,
                        "samples_per_class" => spec.samples_per_class = parse(value)?,
                        "size" => spec.size = parse(value)?,
                        "seed" => {
                            spec.seed = value.parse().map_err(|_| {
                                Error::Config(format!("bad synthetic seed {value:?}"))
                            })?
                        }
                        other => {
                            return Err(Error::Config(format!(
                                "unknown synthetic option {other:?}"
                            )))
                        }
                    }
                }
                Ok(DatasetSpec::Synthetic(spec))
            }
            other => Err(Error::Config(format!("unknown dataset scheme {other:?}"))),
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Cifar10Binary(p) => write!(f, "cifar10:{}", p.display()),
            DatasetSpec::ImageDir(p) => write!(f, "dir:{}", p.display()),
            DatasetSpec::Synthetic(s) => write!(
                f,
                "synthetic:classes={},samples_per_class={},size={},seed={}",
                s.classes, s.samples_per_class, s.size, s.seed
            ),
        }
    }
}

/// Everything a training run depends on. Identical configurations
/// reproduce byte-identical outputs at any worker count.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Candidates generated per image (`E`).
    pub candidates_per_image: usize,
    /// Candidates kept per image (`S`).
    pub selected_per_image: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Defaults for everything except the dataset: E=8, S=4, 10 epochs,
    /// batch 32, lr 0.05, weight decay 5e-4, seed 0, divaug.
    pub fn with_dataset(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            candidates_per_image: 8,
            selected_per_image: 4,
            epochs: 10,
            batch_size: 32,
            lr: 0.05,
            weight_decay: 5e-4,
            seed: 0,
            strategy: Strategy::DivAug,
            output_dir: PathBuf::from("divaug-out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected_per_image == 0 || self.selected_per_image > self.candidates_per_image {
            return Err(Error::Config(format!(
                "need 1 <= S <= E, got S={} E={}",
                self.selected_per_image, self.candidates_per_image
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parse the flat key-value format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dataset: Option<DatasetSpec> = None;
        let mut pending: Vec<(String, String)> = Vec::new();
        let mut seen: Vec<String> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {} is not 'key = value'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if seen.contains(&key) {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
            seen.push(key.clone());
            if key == "dataset" {
                dataset = Some(value.parse()?);
            } else {
                pending.push((key, value));
            }
        }

        let dataset =
            dataset.ok_or_else(|| Error::Config("missing required key 'dataset'".into()))?;
        let mut cfg = RunConfig::with_dataset(dataset);
        for (key, value) in pending {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` assignment; used by both the config parser
    /// and the CLI flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "dataset" => self.dataset = value.parse()?,
            "E" => self.candidates_per_image = num(key, value)?,
            "S" => self.selected_per_image = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }
}
