//! Dataset ingestion: CIFAR-10 binary records, binary PPM/PGM image
//! directories with a label manifest, and the deterministic synthetic
//! shape generator.

use crate::error::{Error, Result};
use crate::imageops::Image;
use crate::rng::{stream, PURPOSE_SYNTH};
use rand::Rng;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Labeled images with a known class count.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

const CIFAR_RECORD: usize = 3073;

/// Parse CIFAR-10 binary records: 1 label byte then 3072 channel bytes
/// (red plane, green plane, blue plane, 32x32 each). An empty file yields
/// an empty split; a partial record is an error.
pub fn load_cifar10_binary(path: &Path) -> Result<DatasetSplit> {
    let bytes = fs::read(path)?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Dataset(format!(
            "{} is truncated: {} bytes is not a multiple of {CIFAR_RECORD}",
            path.display(),
            bytes.len()
        )));
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(images.capacity());
    for record in bytes.chunks_exact(CIFAR_RECORD) {
        let label = usize::from(record[0]);
        if label > 9 {
            return Err(Error::Dataset(format!(
                "label byte {label} out of range for CIFAR-10"
            )));
        }
        let planes = &record[1..];
        let mut pixels = vec![0u8; 32 * 32 * 3];
        for y in 0..32 {
            for x in 0..32 {
                for c in 0..3 {
                    pixels[(y * 32 + x) * 3 + c] = planes[c * 1024 + y * 32 + x];
                }
            }
        }
        images.push(Image::new(32, 32, 3, pixels)?);
        labels.push(label);
    }
    Ok(DatasetSplit {
        images,
        labels,
        class_count: 10,
    })
}

/// Parameters of the synthetic shape dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub size: usize,
    pub seed: u64,
}

/// Deterministic grayscale shapes on a black background: one shape family
/// per class (disk, square, triangle, plus, ring), drawn at a jittered
/// position and scale with a random gray level, then partially hidden by
/// a random dark occluder patch. Draw order per image: x jitter, y jitter,
/// scale, gray level, occluder x, occluder y, occluder half-width,
/// occluder half-height.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetSplit> {
    if spec.classes < 2 {
        return Err(Error::Config(
            "synthetic dataset needs at least 2 classes".into(),
        ));
    }
    if spec.classes > 5 {
        return Err(Error::Config(
            "synthetic dataset supports at most 5 shape classes".into(),
        ));
    }
    if spec.size < 12 {
        return Err(Error::Config(format!(
            "synthetic image size {} is degenerate",
            spec.size
        )));
    }
    if spec.samples_per_class == 0 {
        return Err(Error::Config("samples_per_class must be at least 1".into()));
    }
    let mut rng = stream(spec.seed, &[PURPOSE_SYNTH]);
    let s = spec.size as f64;
    let mut images = Vec::with_capacity(spec.classes * spec.samples_per_class);
    let mut labels = Vec::with_capacity(images.capacity());
    for class in 0..spec.classes {
        for _ in 0..spec.samples_per_class {
            let jitter = 0.22 * s;
            let cx = s / 2.0 + (2.0 * rng.random::<f64>() - 1.0) * jitter;
            let cy = s / 2.0 + (2.0 * rng.random::<f64>() - 1.0) * jitter;
            let r = (0.22 + 0.12 * rng.random::<f64>()) * s;
            let level = 130 + rng.random_range(0..126) as u8;
            let mut img = draw_shape(spec.size, class, cx, cy, r, level)?;
            let ox = rng.random_range(0..spec.size);
            let oy = rng.random_range(0..spec.size);
            let ow = rng.random_range(2..=spec.size / 4);
            let oh = rng.random_range(2..=spec.size / 4);
            occlude(&mut img, ox, oy, ow, oh);
            images.push(img);
            labels.push(class);
        }
    }
    Ok(DatasetSplit {
        images,
        labels,
        class_count: spec.classes,
    })
}

/// Zero a `2*half_w x 2*half_h` box around `(x, y)`, clipped at borders.
fn occlude(img: &mut Image, x: usize, y: usize, half_w: usize, half_h: usize) {
    let (h, w) = (img.height(), img.width());
    let x0 = x.saturating_sub(half_w);
    let x1 = (x + half_w).min(w);
    let y0 = y.saturating_sub(half_h);
    let y1 = (y + half_h).min(h);
    for yy in y0..y1 {
        for xx in x0..x1 {
            img.put(xx, yy, 0, 0);
        }
    }
}

fn draw_shape(size: usize, class: usize, cx: f64, cy: f64, r: f64, level: u8) -> Result<Image> {
    let mut img = Image::filled(size, size, 1, 0)?;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let inside = match class {
                0 => dx * dx + dy * dy <= r * r,
                1 => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
                2 => in_triangle(dx, dy, r),
                3 => {
                    (dx.abs() <= 0.35 * r && dy.abs() <= r)
                        || (dy.abs() <= 0.35 * r && dx.abs() <= r)
                }
                _ => {
                    let d2 = dx * dx + dy * dy;
                    d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r)
                }
            };
            if inside {
                img.put(x, y, 0, level);
            }
        }
    }
    Ok(img)
}

/// Upward triangle with apex at `(0, -r)` and base corners at
/// `(+-0.95 r, +0.8 r)`, tested by edge half-planes.
fn in_triangle(dx: f64, dy: f64, r: f64) -> bool {
    let ax = 0.0;
    let ay = -r;
    let bx = -0.95 * r;
    let by = 0.8 * r;
    let cx = 0.95 * r;
    let cy = 0.8 * r;
    let sign = |x1: f64, y1: f64, x2: f64, y2: f64| (dx - x2) * (y1 - y2) - (x1 - x2) * (dy - y2);
    let d1 = sign(ax, ay, bx, by);
    let d2 = sign(bx, by, cx, cy);
    let d3 = sign(cx, cy, ax, ay);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

/// Load an image directory: `manifest.csv` lines of `filename,label`
/// pointing at binary PPM (P6) or PGM (P5) files. All images must share
/// one shape.
pub fn load_image_dir(dir: &Path) -> Result<DatasetSplit> {
    let manifest = dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest)
        .map_err(|e| Error::Dataset(format!("cannot read {}: {e}", manifest.display())))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == "filename,label" {
            continue;
        }
        let (name, label) = line.split_once(',').ok_or_else(|| {
            Error::Dataset(format!(
                "manifest line {} is not 'filename,label'",
                lineno + 1
            ))
        })?;
        let label: usize = label.trim().parse().map_err(|_| {
            Error::Dataset(format!(
                "bad label {:?} on manifest line {}",
                label,
                lineno + 1
            ))
        })?;
        let img = read_pnm(&dir.join(name.trim()))?;
        if let Some(first) = images.first() {
            if !img.same_shape(first) {
                return Err(Error::Dataset(format!(
                    "{} does not match the shape of the first image",
                    name.trim()
                )));
            }
        }
        images.push(img);
        labels.push(label);
    }
    if images.is_empty() {
        return Err(Error::Dataset("manifest lists no images".into()));
    }
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;
    Ok(DatasetSplit {
        images,
        labels,
        class_count,
    })
}

/// Read a binary PPM (P6, 3 channels) or PGM (P5, 1 channel) with 8-bit
/// samples.
pub fn read_pnm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let magic = next_token(&bytes, &mut pos)
        .ok_or_else(|| Error::Dataset(format!("{}: missing magic", path.display())))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::Dataset(format!(
                "{}: unsupported format {other}",
                path.display()
            )))
        }
    };
    let mut dims = [0usize; 3];
    for slot in &mut dims {
        let tok = next_token(&bytes, &mut pos)
            .ok_or_else(|| Error::Dataset(format!("{}: truncated header", path.display())))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::Dataset(format!("{}: bad header token {tok:?}", path.display())))?;
    }
    let [width, height, maxval] = dims;
    if maxval != 255 {
        return Err(Error::Dataset(format!(
            "{}: only 8-bit images are supported (maxval {maxval})",
            path.display()
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height * channels;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Dataset(format!("{}: truncated raster", path.display())))?;
    Image::new(height, width, channels, raster.to_vec())
}

/// Write a binary PGM (1 channel) or PPM (3 channels).
pub fn write_pnm(image: &Image, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    write!(out, "{magic}\n{} {}\n255\n", image.width(), image.height())?;
    out.write_all(image.pixels())?;
    Ok(())
}

/// Skip whitespace and `#` comments, then return the next header token.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_record_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let mut bytes = Vec::new();
        for rec in 0..10u8 {
            bytes.push(rec % 10);
            for i in 0..3072usize {
                bytes.push(((i + rec as usize) % 256) as u8);
            }
        }
        fs::write(&path, &bytes).unwrap();
        let split = load_cifar10_binary(&path).unwrap();
        assert_eq!(split.len(), 10);
        assert_eq!(split.class_count, 10);
        for img in &split.images {
            assert_eq!((img.height(), img.width(), img.channels()), (32, 32, 3));
        }
        // red plane byte 0 of record 0 lands at pixel (0,0,0)
        assert_eq!(split.images[0].get(0, 0, 0), 0);
        // green plane starts 1024 bytes in
        assert_eq!(split.images[0].get(0, 0, 1), (1024 % 256) as u8);
    }

    #[test]
    fn cifar_empty_file_is_empty_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        fs::write(&path, b"").unwrap();
        let split = load_cifar10_binary(&path).unwrap();
        assert!(split.is_empty());
        assert_eq!(split.class_count, 10);
    }

    #[test]
    fn cifar_truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        fs::write(&path, vec![0u8; CIFAR_RECORD + 5]).unwrap();
        assert!(load_cifar10_binary(&path).is_err());
    }

    #[test]
    fn cifar_bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = vec![0u8; CIFAR_RECORD];
        bytes[0] = 10;
        fs::write(&path, &bytes).unwrap();
        assert!(load_cifar10_binary(&path).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            classes: 3,
            samples_per_class: 200,
            size: 32,
            seed: 5,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.len(), 600);
        assert_eq!(a.class_count, 3);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.pixels(), y.pixels());
        }
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn synthetic_validates_spec() {
        let base = SyntheticSpec {
            classes: 3,
            samples_per_class: 10,
            size: 32,
            seed: 0,
        };
        assert!(generate_synthetic(&SyntheticSpec { classes: 1, ..base }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { classes: 6, ..base }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { size: 8, ..base }).is_err());
    }

    #[test]
    fn pnm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::new(4, 6, 1, (0..24).map(|v| v as u8).collect()).unwrap();
        let rgb = Image::new(3, 2, 3, (0..18).map(|v| (v * 3) as u8).collect()).unwrap();
        for (name, img) in [("a.pgm", &gray), ("b.ppm", &rgb)] {
            let path = dir.path().join(name);
            write_pnm(img, &path).unwrap();
            let back = read_pnm(&path).unwrap();
            assert_eq!(back.pixels(), img.pixels());
            assert!(back.same_shape(img));
        }
    }

    #[test]
    fn image_dir_loads_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let img0 = Image::filled(16, 16, 1, 7).unwrap();
        let img1 = Image::filled(16, 16, 1, 201).unwrap();
        write_pnm(&img0, &dir.path().join("zero.pgm")).unwrap();
        write_pnm(&img1, &dir.path().join("one.pgm")).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "filename,label\nzero.pgm,0\none.pgm,1\n",
        )
        .unwrap();
        let split = load_image_dir(dir.path()).unwrap();
        assert_eq!(split.len(), 2);
        assert_eq!(split.class_count, 2);
        assert_eq!(split.labels, vec![0, 1]);
    }
}
