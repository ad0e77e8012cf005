//! Deterministic transform kernels.
//!
//! Magnitude semantics (signed magnitude `sm` in `[-1, 1]`; unsigned kinds
//! use `|sm|`):
//!
//! | kind                | effect at `sm`                                  |
//! |---------------------|-------------------------------------------------|
//! | Rotate              | rotate by `30 * sm` degrees about the center     |
//! | ShearX / ShearY     | shear factor `0.3 * sm` about the center         |
//! | TranslateX / Y      | shift by `(10/32) * side * sm` pixels            |
//! | Posterize           | keep `8 - round(4 * |sm|)` bits per channel      |
//! | Solarize            | invert channel values `>= 256 * (1 - |sm|)`      |
//! | Color / Contrast /  | enhancement factor `1 + 0.9 * sm` toward or away |
//! | Brightness / Sharp. | from the degenerate image                        |
//! | Cutout              | zero a centered square of side `round(0.625 * |sm| * min(H, W))` |
//! | SamplePairing       | blend `0.4 * |sm|` toward the partner image      |
//! | AutoContrast / Invert / Equalize | magnitude ignored                   |
//!
//! Geometric kernels resample with nearest neighbor and fill out-of-bounds
//! samples with mid-gray 128 on every channel.

use super::{Image, OpKind};
use crate::error::{Error, Result};

/// Run the deterministic kernel for `kind` at `signed_magnitude`.
/// `partner` is required exactly for SamplePairing and must match the
/// input shape. Output shape always equals input shape.
pub fn apply_transform(
    kind: OpKind,
    image: &Image,
    signed_magnitude: f64,
    partner: Option<&Image>,
) -> Result<Image> {
    if !(-1.0..=1.0).contains(&signed_magnitude) {
        return Err(Error::MagnitudeOutOfRange(signed_magnitude));
    }
    let sm = signed_magnitude;
    let m = sm.abs();
    match kind {
        OpKind::Rotate => Ok(rotate(image, 30.0 * sm)),
        OpKind::ShearX => Ok(shear_x(image, 0.3 * sm)),
        OpKind::ShearY => Ok(shear_y(image, 0.3 * sm)),
        OpKind::TranslateX => Ok(translate(
            image,
            10.0 / 32.0 * image.width() as f64 * sm,
            0.0,
        )),
        OpKind::TranslateY => Ok(translate(
            image,
            0.0,
            10.0 / 32.0 * image.height() as f64 * sm,
        )),
        OpKind::Posterize => {
            let kept_bits = 8 - (4.0 * m).round() as u32;
            let mask = 0xffu8 << (8 - kept_bits);
            Ok(map_channels(image, |v| v & mask))
        }
        OpKind::Solarize => {
            let threshold = 256.0 * (1.0 - m);
            Ok(map_channels(image, |v| {
                if f64::from(v) >= threshold {
                    255 - v
                } else {
                    v
                }
            }))
        }
        OpKind::Invert => Ok(map_channels(image, |v| 255 - v)),
        OpKind::AutoContrast => Ok(autocontrast(image)),
        OpKind::Equalize => Ok(equalize(image)),
        OpKind::Brightness => Ok(enhance(image, 1.0 + 0.9 * sm, Degenerate::Black)),
        OpKind::Color => Ok(enhance(image, 1.0 + 0.9 * sm, Degenerate::Gray)),
        OpKind::Contrast => Ok(enhance(image, 1.0 + 0.9 * sm, Degenerate::MeanLuma)),
        OpKind::Sharpness => Ok(enhance(image, 1.0 + 0.9 * sm, Degenerate::Smooth)),
        OpKind::Cutout => {
            let side = (0.625 * m * image.height().min(image.width()) as f64).round() as usize;
            Ok(cutout_centered(image, side))
        }
        OpKind::SamplePairing => {
            let partner = partner.ok_or(Error::BadPartner)?;
            if !image.same_shape(partner) {
                return Err(Error::BadPartner);
            }
            let w = 0.4 * m;
            let mut out = image.clone();
            for (i, o) in out.pixels_mut().iter_mut().enumerate() {
                let a = f64::from(image.pixels()[i]);
                let b = f64::from(partner.pixels()[i]);
                *o = clamp_channel((1.0 - w) * a + w * b);
            }
            Ok(out)
        }
    }
}

fn clamp_channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn map_channels(image: &Image, f: impl Fn(u8) -> u8) -> Image {
    let mut out = image.clone();
    for v in out.pixels_mut() {
        *v = f(*v);
    }
    out
}

/// Inverse-mapped resampling: for each output pixel, `inv` yields the
/// source coordinate; nearest neighbor, fill 128 outside the image.
fn geometric(image: &Image, inv: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv(x as f64, y as f64);
            let rx = sx.round();
            let ry = sy.round();
            let inside = rx >= 0.0 && rx < w as f64 && ry >= 0.0 && ry < h as f64;
            for c in 0..ch {
                let v = if inside {
                    image.get(rx as usize, ry as usize, c)
                } else {
                    128
                };
                out.put(x, y, c, v);
            }
        }
    }
    out
}

fn rotate(image: &Image, degrees: f64) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (image.width() as f64 - 1.0) / 2.0;
    let cy = (image.height() as f64 - 1.0) / 2.0;
    geometric(image, |x, y| {
        let dx = x - cx;
        let dy = y - cy;
        (cx + cos * dx + sin * dy, cy - sin * dx + cos * dy)
    })
}

fn shear_x(image: &Image, factor: f64) -> Image {
    let cy = (image.height() as f64 - 1.0) / 2.0;
    geometric(image, |x, y| (x - factor * (y - cy), y))
}

fn shear_y(image: &Image, factor: f64) -> Image {
    let cx = (image.width() as f64 - 1.0) / 2.0;
    geometric(image, |x, y| (x, y - factor * (x - cx)))
}

fn translate(image: &Image, tx: f64, ty: f64) -> Image {
    geometric(image, |x, y| (x - tx, y - ty))
}

fn cutout_centered(image: &Image, side: usize) -> Image {
    let mut out = image.clone();
    let side = side.min(image.height()).min(image.width());
    if side == 0 {
        return out;
    }
    let x0 = (image.width() - side) / 2;
    let y0 = (image.height() - side) / 2;
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            for c in 0..image.channels() {
                out.put(x, y, c, 0);
            }
        }
    }
    out
}

/// Per-channel linear stretch of `[min, max]` onto `[0, 255]`.
fn autocontrast(image: &Image) -> Image {
    let ch = image.channels();
    let mut lut = vec![[0u8; 256]; ch];
    for (c, table) in lut.iter_mut().enumerate() {
        let mut lo = 255u8;
        let mut hi = 0u8;
        for px in image.pixels().iter().skip(c).step_by(ch) {
            lo = lo.min(*px);
            hi = hi.max(*px);
        }
        for (v, slot) in table.iter_mut().enumerate() {
            *slot = if hi > lo {
                let scaled = (v as f64 - f64::from(lo)) * 255.0 / (f64::from(hi) - f64::from(lo));
                clamp_channel(scaled)
            } else {
                v as u8
            };
        }
    }
    apply_lut(image, &lut)
}

/// Per-channel histogram equalization through the cumulative distribution,
/// offset by the first occupied bin. Values above the darkest occupied bin
/// never map to 0, which makes a second application a fixed point.
fn equalize(image: &Image) -> Image {
    let ch = image.channels();
    let n = image.height() * image.width();
    let mut lut = vec![[0u8; 256]; ch];
    for (c, table) in lut.iter_mut().enumerate() {
        let mut hist = [0usize; 256];
        for px in image.pixels().iter().skip(c).step_by(ch) {
            hist[*px as usize] += 1;
        }
        let vmin = hist.iter().position(|&h| h > 0).unwrap_or(0);
        let cdf_min = hist[vmin];
        if cdf_min == n {
            for (v, slot) in table.iter_mut().enumerate() {
                *slot = v as u8;
            }
            continue;
        }
        let denom = (n - cdf_min) as f64;
        let mut cdf = 0usize;
        for (v, slot) in table.iter_mut().enumerate() {
            cdf += hist[v];
            *slot = if v <= vmin {
                0
            } else {
                let scaled = ((cdf - cdf_min) as f64 * 255.0 / denom).round();
                (scaled.clamp(0.0, 255.0) as u8).max(1)
            };
        }
    }
    apply_lut(image, &lut)
}

fn apply_lut(image: &Image, lut: &[[u8; 256]]) -> Image {
    let ch = image.channels();
    let mut out = image.clone();
    for (i, v) in out.pixels_mut().iter_mut().enumerate() {
        *v = lut[i % ch][*v as usize];
    }
    out
}

enum Degenerate {
    /// All-zero image (brightness).
    Black,
    /// Per-pixel luminance (color/saturation).
    Gray,
    /// Uniform image at the mean luminance (contrast).
    MeanLuma,
    /// 3x3 smoothing, border rows and columns kept (sharpness).
    Smooth,
}

/// `out = degenerate + factor * (image - degenerate)`, clamped. Factor 1
/// reproduces the input exactly.
fn enhance(image: &Image, factor: f64, degenerate: Degenerate) -> Image {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let degen: Vec<f64> = match degenerate {
        Degenerate::Black => vec![0.0; image.pixels().len()],
        Degenerate::Gray => {
            let mut d = Vec::with_capacity(image.pixels().len());
            for y in 0..h {
                for x in 0..w {
                    let l = luminance(image, x, y);
                    for _ in 0..ch {
                        d.push(l);
                    }
                }
            }
            d
        }
        Degenerate::MeanLuma => {
            let mut sum = 0.0;
            for y in 0..h {
                for x in 0..w {
                    sum += luminance(image, x, y);
                }
            }
            let mean = sum / (h * w) as f64;
            vec![mean; image.pixels().len()]
        }
        Degenerate::Smooth => smooth(image),
    };
    let mut out = image.clone();
    for (i, o) in out.pixels_mut().iter_mut().enumerate() {
        let v = f64::from(image.pixels()[i]);
        *o = clamp_channel(degen[i] + factor * (v - degen[i]));
    }
    out
}

fn luminance(image: &Image, x: usize, y: usize) -> f64 {
    if image.channels() == 1 {
        f64::from(image.get(x, y, 0))
    } else {
        0.299 * f64::from(image.get(x, y, 0))
            + 0.587 * f64::from(image.get(x, y, 1))
            + 0.114 * f64::from(image.get(x, y, 2))
    }
}

/// 3x3 kernel [[1,1,1],[1,5,1],[1,1,1]]/13 over the interior; border
/// pixels copy the input.
fn smooth(image: &Image) -> Vec<f64> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let mut out: Vec<f64> = image.pixels().iter().map(|&v| f64::from(v)).collect();
    if h < 3 || w < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for c in 0..ch {
                let mut acc = 0.0;
                for dy in [-1isize, 0, 1] {
                    for dx in [-1isize, 0, 1] {
                        let weight = if dx == 0 && dy == 0 { 5.0 } else { 1.0 };
                        let px = (x as isize + dx) as usize;
                        let py = (y as isize + dy) as usize;
                        acc += weight * f64::from(image.get(px, py, c));
                    }
                }
                out[(y * w + x) * ch + c] = acc / 13.0;
            }
        }
    }
    out
}
