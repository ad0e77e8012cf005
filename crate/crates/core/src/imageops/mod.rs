//! Image transform kernels and their stochastic application layer.
//!
//! [`apply_transform`] is the deterministic kernel table: given an
//! operation kind and a signed magnitude in `[-1, 1]` it produces the
//! transformed image, same shape, channels clamped to `[0, 255]`.
//! [`apply_op`] wraps a kernel in its Bernoulli gate, [`apply_subpolicy`]
//! chains two gated operations, and [`default_augment`] is the dataset's
//! conventional pad-crop/flip/cutout preprocessing.
//!
//! Random draws per gated operation happen in a fixed order: partner index
//! (SamplePairing only), gate, sign (signed kinds only). The order is part
//! of the reproducibility contract and must not change.

mod kernels;

pub use kernels::apply_transform;

use crate::error::{Error, Result};
use crate::policy::SubPolicy;
use crate::rng::Stream;
use rand::Rng;

/// Fixed-shape raster with 8-bit channels, row-major and
/// channel-interleaved: index `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    /// Build an image from a pixel buffer; `channels` must be 1 or 3 and
    /// the buffer length must equal `height * width * channels`.
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("zero-sized image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                height * width * channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Image with every channel value set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.put(x, y, c, self.get(self.width - 1 - x, y, c));
                }
            }
        }
        out
    }
}

/// The sixteen operations of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Color,
    Brightness,
    Cutout,
    SamplePairing,
    Contrast,
}

impl OpKind {
    /// Canonical ordering; sampling and statistics columns both use it.
    pub const ALL: [OpKind; 16] = [
        OpKind::Sharpness,
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Rotate,
        OpKind::AutoContrast,
        OpKind::Invert,
        OpKind::Equalize,
        OpKind::Solarize,
        OpKind::Posterize,
        OpKind::Color,
        OpKind::Brightness,
        OpKind::Cutout,
        OpKind::SamplePairing,
        OpKind::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Sharpness => "Sharpness",
            OpKind::ShearX => "ShearX",
            OpKind::ShearY => "ShearY",
            OpKind::TranslateX => "TranslateX",
            OpKind::TranslateY => "TranslateY",
            OpKind::Rotate => "Rotate",
            OpKind::AutoContrast => "AutoContrast",
            OpKind::Invert => "Invert",
            OpKind::Equalize => "Equalize",
            OpKind::Solarize => "Solarize",
            OpKind::Posterize => "Posterize",
            OpKind::Color => "Color",
            OpKind::Brightness => "Brightness",
            OpKind::Cutout => "Cutout",
            OpKind::SamplePairing => "SamplePairing",
            OpKind::Contrast => "Contrast",
        }
    }

    /// Kinds whose magnitude is directional; the sign is drawn by
    /// [`apply_op`].
    pub fn signed(self) -> bool {
        matches!(
            self,
            OpKind::Rotate
                | OpKind::ShearX
                | OpKind::ShearY
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::Color
                | OpKind::Contrast
                | OpKind::Brightness
                | OpKind::Sharpness
        )
    }

    /// Position in [`OpKind::ALL`].
    pub fn index(self) -> usize {
        OpKind::ALL.iter().position(|&k| k == self).unwrap()
    }
}

/// An operation kind with its application probability `p` and normalized
/// magnitude `m`, both in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operation {
    kind: OpKind,
    p: f64,
    m: f64,
}

impl Operation {
    pub fn new(kind: OpKind, p: f64, m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("probability {p} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::Config(format!("magnitude {m} outside [0, 1]")));
        }
        Ok(Self { kind, p, m })
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn m(&self) -> f64 {
        self.m
    }
}

/// Which dataset convention [`default_augment`] follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// 32x32x3; pad 4, random crop, flip 0.5, cutout 16.
    Cifar,
    /// 32x32x3; same as CIFAR without the flip.
    Svhn,
    /// Any size >= 8, 1 or 3 channels; CIFAR behavior at native size.
    Synthetic,
}

/// Apply `op` through its stochastic gate: with probability `p` run the
/// kernel (drawing a sign for directional kinds), otherwise return the
/// input unchanged.
pub fn apply_op(
    op: &Operation,
    image: &Image,
    rng: &mut Stream,
    partner: Option<&Image>,
) -> Result<Image> {
    let gate = rng.random_bool(op.p);
    if !gate {
        return Ok(image.clone());
    }
    let sm = if op.kind.signed() {
        if rng.random::<bool>() {
            op.m
        } else {
            -op.m
        }
    } else {
        op.m
    };
    apply_transform(op.kind, image, sm, partner)
}

/// Apply a sub-policy: first operation, then the second, each through its
/// gate. SamplePairing partners are drawn uniformly from `partner_pool`
/// before the operation's gate.
pub fn apply_subpolicy(
    t: &SubPolicy,
    image: &Image,
    rng: &mut Stream,
    partner_pool: &[Image],
) -> Result<Image> {
    let mut out = image.clone();
    for op in [&t.op1, &t.op2] {
        let partner = if op.kind() == OpKind::SamplePairing {
            if partner_pool.is_empty() {
                return Err(Error::BadPartner);
            }
            Some(&partner_pool[rng.random_range(0..partner_pool.len())])
        } else {
            None
        };
        out = apply_op(op, &out, rng, partner)?;
    }
    Ok(out)
}

/// The dataset's conventional augmentation: zero-pad 4 on every side,
/// random crop back to the original size, horizontal flip with probability
/// 0.5 (not for SVHN), then zero a 16x16 cutout patch centered at a
/// uniform position. Draw order: crop dx, crop dy, flip, cutout cx, cutout cy.
pub fn default_augment(image: &Image, kind: DatasetKind, rng: &mut Stream) -> Result<Image> {
    match kind {
        DatasetKind::Cifar | DatasetKind::Svhn => {
            if image.height != 32 || image.width != 32 || image.channels != 3 {
                return Err(Error::ShapeMismatch(format!(
                    "{}x{}x{} image for a 32x32x3 dataset",
                    image.height, image.width, image.channels
                )));
            }
        }
        DatasetKind::Synthetic => {
            if image.height < 8 || image.width < 8 {
                return Err(Error::ShapeMismatch(format!(
                    "{}x{} image too small to pad-crop",
                    image.height, image.width
                )));
            }
        }
    }

    const PAD: usize = 4;
    let (h, w, ch) = (image.height, image.width, image.channels);

    let dx = rng.random_range(0..=2 * PAD);
    let dy = rng.random_range(0..=2 * PAD);
    let mut out = Image::filled(h, w, ch, 0)?;
    for y in 0..h {
        for x in 0..w {
            // source coordinate in the original image after zero padding
            let sx = (x + dx) as isize - PAD as isize;
            let sy = (y + dy) as isize - PAD as isize;
            if sx >= 0 && sx < w as isize && sy >= 0 && sy < h as isize {
                for c in 0..ch {
                    out.put(x, y, c, image.get(sx as usize, sy as usize, c));
                }
            }
        }
    }

    if kind != DatasetKind::Svhn && rng.random_bool(0.5) {
        out = out.flip_horizontal();
    }

    const PATCH: usize = 16;
    let cx = rng.random_range(0..w) as isize;
    let cy = rng.random_range(0..h) as isize;
    let half = (PATCH / 2) as isize;
    let x0 = (cx - half).max(0) as usize;
    let x1 = ((cx + half).min(w as isize)) as usize;
    let y0 = (cy - half).max(0) as usize;
    let y1 = ((cy + half).min(h as isize)) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            for c in 0..ch {
                out.put(x, y, c, 0);
            }
        }
    }

    Ok(out)
}
