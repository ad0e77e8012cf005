//! The probability oracle: a small trainable softmax classifier plus the
//! numerical machinery that checks the second-order loss expansion used to
//! justify variance-based selection.
//!
//! The model is a flatten -> hidden (rectifier) -> logits perceptron, or a
//! plain linear-softmax when no hidden layer is configured. Scoring is
//! read-only; training mutates parameters through [`sgd_step`] only.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::imageops::Image;
use crate::rng::{stream, PURPOSE_INIT};
use crate::scalar::Scalar;
use rand::Rng;

/// Point on the class-probability simplex: entries nonnegative, summing to
/// one within a scalar-dependent tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<S: Scalar = f64> {
    probs: Vec<S>,
}

impl<S: Scalar> ProbVector<S> {
    /// Validate and wrap a probability vector.
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        let mut sum = S::zero();
        for &p in &probs {
            if p < S::zero() || !p.is_finite() {
                return Err(Error::LeftSimplex);
            }
            sum += p;
        }
        if (sum - S::one()).abs() > simplex_tolerance::<S>(probs.len()) {
            return Err(Error::LeftSimplex);
        }
        Ok(Self { probs })
    }

    /// Numerically stable softmax of arbitrary finite logits.
    pub fn from_logits(logits: &[S]) -> Self {
        let max = max_logit(logits);
        let exps: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: S = exps.iter().cloned().sum();
        Self {
            probs: exps.into_iter().map(|e| e / sum).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> S {
        self.probs[i]
    }

    /// Index of the largest entry; ties go to the smallest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

fn max_logit<S: Scalar>(logits: &[S]) -> S {
    logits
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a })
}

/// `ln sum exp` with max subtraction; finite for any finite logits.
fn log_sum_exp<S: Scalar>(logits: &[S]) -> S {
    let max = max_logit(logits);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln()
}

/// Sum tolerance: 1e-9, widened only as far as the scalar's epsilon
/// demands (relevant for f32).
fn simplex_tolerance<S: Scalar>(dim: usize) -> S {
    let eps_bound = S::epsilon() * S::from_f64_lossy(8.0 * dim as f64);
    S::from_f64_lossy(1e-9).max(eps_bound)
}

/// Layer sizes of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// `None` selects the plain linear-softmax model.
    pub hidden: Option<usize>,
    pub classes: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.input_height * self.input_width * self.input_channels
    }

    pub fn param_count(&self) -> usize {
        let d_in = self.input_dim();
        match self.hidden {
            Some(h) => h * d_in + h + self.classes * h + self.classes,
            None => self.classes * d_in + self.classes,
        }
    }
}

/// Fixed per-channel statistics applied before the first layer: channel
/// values are scaled to `[0, 1]` then standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Per-channel mean and population standard deviation of the training
    /// split, computed once.
    pub fn from_images(images: &[Image]) -> Result<Self> {
        let first = images.first().ok_or(Error::EmptyInput("training split"))?;
        let ch = first.channels();
        let mut sum = vec![0.0f64; ch];
        let mut sum_sq = vec![0.0f64; ch];
        let mut count = vec![0u64; ch];
        for img in images {
            for (i, &v) in img.pixels().iter().enumerate() {
                let c = i % ch;
                let x = f64::from(v) / 255.0;
                sum[c] += x;
                sum_sq[c] += x * x;
                count[c] += 1;
            }
        }
        let mut mean = Vec::with_capacity(ch);
        let mut std = Vec::with_capacity(ch);
        for c in 0..ch {
            let n = count[c] as f64;
            let mu = sum[c] / n;
            let var = (sum_sq[c] / n - mu * mu).max(0.0);
            mean.push(mu);
            std.push(var.sqrt().max(1e-6));
        }
        Ok(Self { mean, std })
    }
}

/// Trainable softmax classifier over images.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel<S: Scalar = f64> {
    arch: Architecture,
    norm: Normalization,
    params: Vec<S>,
}

impl<S: Scalar> OracleModel<S> {
    /// Initialize with uniform fan-in weight scaling derived from the
    /// master seed; biases start at zero.
    pub fn init(arch: Architecture, norm: Normalization, master_seed: u64) -> Result<Self> {
        if arch.classes < 2 {
            return Err(Error::Config("oracle needs at least 2 classes".into()));
        }
        if norm.mean.len() != arch.input_channels || norm.std.len() != arch.input_channels {
            return Err(Error::ShapeMismatch(
                "normalization channel count differs from architecture".into(),
            ));
        }
        let mut rng = stream(master_seed, &[PURPOSE_INIT]);
        let d_in = arch.input_dim();
        let mut params = vec![S::zero(); arch.param_count()];
        match arch.hidden {
            Some(h) => {
                let bound1 = 1.0 / (d_in as f64).sqrt();
                for w in &mut params[..h * d_in] {
                    *w = S::from_f64_lossy((2.0 * rng.random::<f64>() - 1.0) * bound1);
                }
                let bound2 = 1.0 / (h as f64).sqrt();
                let w2_start = h * d_in + h;
                for w in &mut params[w2_start..w2_start + arch.classes * h] {
                    *w = S::from_f64_lossy((2.0 * rng.random::<f64>() - 1.0) * bound2);
                }
            }
            None => {
                let bound = 1.0 / (d_in as f64).sqrt();
                for w in &mut params[..arch.classes * d_in] {
                    *w = S::from_f64_lossy((2.0 * rng.random::<f64>() - 1.0) * bound);
                }
            }
        }
        Ok(Self { arch, norm, params })
    }

    pub fn from_parts(arch: Architecture, norm: Normalization, params: Vec<S>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for an architecture needing {}",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, norm, params })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    /// Standardized feature vector of an image.
    fn features(&self, image: &Image) -> Result<Vec<S>> {
        if image.height() != self.arch.input_height
            || image.width() != self.arch.input_width
            || image.channels() != self.arch.input_channels
        {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} image for a {}x{}x{} oracle",
                image.height(),
                image.width(),
                image.channels(),
                self.arch.input_height,
                self.arch.input_width,
                self.arch.input_channels
            )));
        }
        let ch = self.arch.input_channels;
        Ok(image
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % ch;
                S::from_f64_lossy((f64::from(v) / 255.0 - self.norm.mean[c]) / self.norm.std[c])
            })
            .collect())
    }

    /// Logits plus the post-rectifier hidden activations (for backprop).
    fn forward(&self, x: &[S]) -> (Vec<S>, Option<Vec<S>>) {
        let d_in = self.arch.input_dim();
        let d = self.arch.classes;
        match self.arch.hidden {
            Some(h) => {
                let w1 = &self.params[..h * d_in];
                let b1 = &self.params[h * d_in..h * d_in + h];
                let w2_start = h * d_in + h;
                let w2 = &self.params[w2_start..w2_start + d * h];
                let b2 = &self.params[w2_start + d * h..];
                let mut hidden = vec![S::zero(); h];
                for (j, slot) in hidden.iter_mut().enumerate() {
                    let mut acc = b1[j];
                    let row = &w1[j * d_in..(j + 1) * d_in];
                    for (w, xv) in row.iter().zip(x) {
                        acc += *w * *xv;
                    }
                    *slot = if acc > S::zero() { acc } else { S::zero() };
                }
                let mut logits = vec![S::zero(); d];
                for (k, slot) in logits.iter_mut().enumerate() {
                    let mut acc = b2[k];
                    let row = &w2[k * h..(k + 1) * h];
                    for (w, hv) in row.iter().zip(&hidden) {
                        acc += *w * *hv;
                    }
                    *slot = acc;
                }
                (logits, Some(hidden))
            }
            None => {
                let w = &self.params[..d * d_in];
                let b = &self.params[d * d_in..];
                let mut logits = vec![S::zero(); d];
                for (k, slot) in logits.iter_mut().enumerate() {
                    let mut acc = b[k];
                    let row = &w[k * d_in..(k + 1) * d_in];
                    for (wv, xv) in row.iter().zip(x) {
                        acc += *wv * *xv;
                    }
                    *slot = acc;
                }
                (logits, None)
            }
        }
    }

    /// Probability vector for one image; read-only.
    pub fn predict_one(&self, image: &Image) -> Result<ProbVector<S>> {
        let x = self.features(image)?;
        let (logits, _) = self.forward(&x);
        Ok(ProbVector::from_logits(&logits))
    }
}

/// Score a batch of images; parameters are never touched.
pub fn predict_proba<S: Scalar>(
    model: &OracleModel<S>,
    batch: &[Image],
) -> Result<Vec<ProbVector<S>>> {
    batch.iter().map(|img| model.predict_one(img)).collect()
}

/// Cross-entropy of a probability vector against the true class:
/// `-ln p[y]`.
pub fn ce_loss<S: Scalar>(p: &ProbVector<S>, y: usize) -> Result<S> {
    if y >= p.dim() {
        return Err(Error::BadLabel {
            index: y,
            classes: p.dim(),
        });
    }
    let py = p.get(y);
    if py <= S::zero() {
        return Err(Error::ZeroProbability);
    }
    Ok(-py.ln())
}

/// Hessian of the cross-entropy with respect to the probability vector,
/// row-major `D x D`: a single nonzero entry `1 / p[y]^2` at `(y, y)`.
pub fn ce_hessian<S: Scalar>(p: &ProbVector<S>, y: usize) -> Result<Vec<S>> {
    if y >= p.dim() {
        return Err(Error::BadLabel {
            index: y,
            classes: p.dim(),
        });
    }
    let py = p.get(y);
    if py <= S::zero() {
        return Err(Error::ZeroProbability);
    }
    let d = p.dim();
    let mut h = vec![S::zero(); d * d];
    h[y * d + y] = S::one() / (py * py);
    Ok(h)
}

/// Expansion point, true label, and centered perturbations for probing the
/// second-order behavior of the loss around the averaged prediction.
#[derive(Debug, Clone)]
pub struct LossProbe<S: Scalar = f64> {
    psi: ProbVector<S>,
    label: usize,
    deltas: Vec<Vec<S>>,
}

impl<S: Scalar> LossProbe<S> {
    /// Validate an expansion point with explicit deltas. Deltas must be
    /// centered (componentwise mean ~ 0) and `psi + delta` must stay
    /// strictly inside the simplex.
    pub fn new(psi: ProbVector<S>, label: usize, deltas: Vec<Vec<S>>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::EmptyInput("probe deltas"));
        }
        if label >= psi.dim() {
            return Err(Error::BadLabel {
                index: label,
                classes: psi.dim(),
            });
        }
        let d = psi.dim();
        let tol = simplex_tolerance::<S>(d);
        for c in 0..d {
            let mut mean = S::zero();
            for delta in &deltas {
                if delta.len() != d {
                    return Err(Error::ShapeMismatch("probe delta dimension".into()));
                }
                mean += delta[c];
            }
            mean /= S::from_f64_lossy(deltas.len() as f64);
            if mean.abs() > tol {
                return Err(Error::UncenteredDeltas);
            }
        }
        for delta in &deltas {
            let perturbed: Vec<S> = psi
                .as_slice()
                .iter()
                .zip(delta)
                .map(|(&p, &dv)| p + dv)
                .collect();
            if perturbed.iter().any(|&v| v <= S::zero()) {
                return Err(Error::LeftSimplex);
            }
            ProbVector::new(perturbed)?;
        }
        Ok(Self { psi, label, deltas })
    }

    /// Build a probe from scored samples: the expansion point is their
    /// componentwise mean, so the deltas are centered by construction.
    pub fn from_samples(samples: &[ProbVector<S>], label: usize) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput("probe samples"))?;
        let d = first.dim();
        let count = S::from_f64_lossy(samples.len() as f64);
        let mut mean = vec![S::zero(); d];
        for s in samples {
            if s.dim() != d {
                return Err(Error::ShapeMismatch("probe sample dimension".into()));
            }
            for (m, &v) in mean.iter_mut().zip(s.as_slice()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let deltas: Vec<Vec<S>> = samples
            .iter()
            .map(|s| {
                s.as_slice()
                    .iter()
                    .zip(&mean)
                    .map(|(&v, &m)| v - m)
                    .collect()
            })
            .collect();
        Self::new(ProbVector::new(mean)?, label, deltas)
    }

    pub fn psi(&self) -> &ProbVector<S> {
        &self.psi
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn deltas(&self) -> &[Vec<S>] {
        &self.deltas
    }
}

/// Gap between the exact averaged loss under perturbations scaled by `h`
/// and its second-order expansion around the probe's expansion point. The
/// first-order term vanishes because the deltas are centered, so the gap
/// shrinks like `h^3`.
pub fn taylor_residual<S: Scalar>(probe: &LossProbe<S>, h: S) -> Result<S> {
    if h <= S::zero() || h > S::one() {
        return Err(Error::Config(format!("taylor scale {h} outside (0, 1]")));
    }
    let d = probe.psi.dim();
    let y = probe.label;
    let count = S::from_f64_lossy(probe.deltas.len() as f64);

    let mut exact_mean = S::zero();
    for delta in &probe.deltas {
        let perturbed: Vec<S> = probe
            .psi
            .as_slice()
            .iter()
            .zip(delta)
            .map(|(&p, &dv)| p + h * dv)
            .collect();
        if perturbed.iter().any(|&v| v <= S::zero()) {
            return Err(Error::LeftSimplex);
        }
        let pv = ProbVector::new(perturbed).map_err(|_| Error::LeftSimplex)?;
        exact_mean += ce_loss(&pv, y)?;
    }
    exact_mean /= count;

    let hess = ce_hessian(&probe.psi, y)?;
    let mut quad_mean = S::zero();
    for delta in &probe.deltas {
        let mut quad = S::zero();
        for i in 0..d {
            for j in 0..d {
                quad += h * delta[i] * hess[i * d + j] * h * delta[j];
            }
        }
        quad_mean += quad;
    }
    quad_mean /= count;

    let base = ce_loss(&probe.psi, y)?;
    let half = S::from_f64_lossy(0.5);
    Ok((exact_mean - (base + half * quad_mean)).abs())
}

/// One mini-batch gradient step on the mean cross-entropy with L2 weight
/// decay. Returns the pre-step mean loss; parameters are untouched when
/// `lr` is zero.
pub fn sgd_step<S: Scalar>(
    model: &mut OracleModel<S>,
    batch: &[(Image, usize)],
    lr: S,
    weight_decay: S,
) -> Result<S> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("training batch"));
    }
    if lr < S::zero() {
        return Err(Error::Config("learning rate must be nonnegative".into()));
    }
    let arch = model.arch;
    let d_in = arch.input_dim();
    let d = arch.classes;
    let inv_b = S::one() / S::from_f64_lossy(batch.len() as f64);

    let mut grad = vec![S::zero(); model.params.len()];
    let mut loss_sum = S::zero();

    for (image, label) in batch {
        if *label >= d {
            return Err(Error::BadLabel {
                index: *label,
                classes: d,
            });
        }
        let x = model.features(image)?;
        let (logits, hidden) = model.forward(&x);
        let probs = ProbVector::from_logits(&logits);
        // CE straight from the logits; stays finite however sharp the
        // softmax saturates
        loss_sum += log_sum_exp(&logits) - logits[*label];

        // d(mean CE)/d(logits) for this sample
        let mut dlogits: Vec<S> = probs.as_slice().to_vec();
        dlogits[*label] -= S::one();
        for g in &mut dlogits {
            *g *= inv_b;
        }

        match (&hidden, arch.hidden) {
            (Some(hid), Some(h)) => {
                let w2_start = h * d_in + h;
                // W2, b2
                for k in 0..d {
                    let gk = dlogits[k];
                    let row = &mut grad[w2_start + k * h..w2_start + (k + 1) * h];
                    for (slot, hv) in row.iter_mut().zip(hid) {
                        *slot += gk * *hv;
                    }
                    grad[w2_start + d * h + k] += gk;
                }
                // backprop through the rectifier
                let w2 = &model.params[w2_start..w2_start + d * h];
                let mut dhidden = vec![S::zero(); h];
                for (j, dh) in dhidden.iter_mut().enumerate() {
                    if hid[j] > S::zero() {
                        let mut acc = S::zero();
                        for k in 0..d {
                            acc += w2[k * h + j] * dlogits[k];
                        }
                        *dh = acc;
                    }
                }
                // W1, b1
                for (j, &dh) in dhidden.iter().enumerate() {
                    if dh != S::zero() {
                        let row = &mut grad[j * d_in..(j + 1) * d_in];
                        for (slot, xv) in row.iter_mut().zip(&x) {
                            *slot += dh * *xv;
                        }
                    }
                    grad[h * d_in + j] += dh;
                }
            }
            (None, None) => {
                for k in 0..d {
                    let gk = dlogits[k];
                    let row = &mut grad[k * d_in..(k + 1) * d_in];
                    for (slot, xv) in row.iter_mut().zip(&x) {
                        *slot += gk * *xv;
                    }
                    grad[d * d_in + k] += gk;
                }
            }
            _ => unreachable!("forward hidden state matches architecture"),
        }
    }

    let mean_loss = loss_sum * inv_b;
    if !mean_loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    if weight_decay > S::zero() {
        for (g, &w) in grad.iter_mut().zip(&model.params) {
            *g += weight_decay * w;
        }
    }
    if lr > S::zero() {
        for (w, &g) in model.params.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
    }
    Ok(mean_loss)
}
