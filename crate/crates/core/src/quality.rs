//! Video-quality metrics: pixel and structural scores on full frames or on
//! per-person mask regions, plus scores computed from dumped deep features
//! (Fréchet distances, CLIPScore, LPIPS, DISTS).

use thiserror::Error;

use crate::gaussian::{frechet_from_samples, GaussianError};
use crate::geometry::MaskSequence;
use rayon::prelude::*;

use crate::ssim::{ssim_map_from_stats, SsimError, SsimParams, WindowStats};

/// PSNR reported for a frame with zero error.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Stabiliser of the gradient magnitude similarity for 8-bit luma.
pub const GMS_EPSILON: f64 = 170.0;

/// Temporal extent of an ST-SSIM block.
pub const ST_SSIM_DEPTH: usize = 3;

const LPIPS_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("frame buffer {index} holds {got} bytes, expected {expected}")]
    FrameSize { index: usize, got: usize, expected: usize },
    #[error("sequence has no frames")]
    NoFrames,
    #[error("sequences differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("no person mask has any foreground pixel")]
    EmptyRegion,
    #[error("feature set is malformed: {0}")]
    BadFeatures(String),
    #[error("zero-norm feature vector at index {0}")]
    ZeroNorm(usize),
    #[error(transparent)]
    Ssim(#[from] SsimError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// RGB frames, 8 bits per channel, interleaved and row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    width: usize,
    height: usize,
    frames: Vec<Vec<u8>>,
}

impl FrameSequence {
    pub fn new(width: usize, height: usize, frames: Vec<Vec<u8>>) -> Result<Self, QualityError> {
        if frames.is_empty() {
            return Err(QualityError::NoFrames);
        }
        let expected = width * height * 3;
        if let Some((index, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != expected) {
            return Err(QualityError::FrameSize { index, got: f.len(), expected });
        }
        Ok(Self { width, height, frames })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }

    fn channel(&self, t: usize, c: usize) -> Vec<f64> {
        self.frames[t].iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect()
    }

    /// ITU-R BT.601 luma.
    fn luma(&self, t: usize) -> Vec<f64> {
        self.frames[t]
            .chunks_exact(3)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }
}

/// A score plus notes about parts that could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub flags: Vec<String>,
}

impl Measured {
    fn plain(value: f64) -> Self {
        Self { value, flags: Vec::new() }
    }
}

fn check_pair(gt: &FrameSequence, pred: &FrameSequence) -> Result<(), QualityError> {
    if (gt.width, gt.height, gt.len()) != (pred.width, pred.height, pred.len()) {
        return Err(QualityError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            gt.width,
            gt.height,
            gt.len(),
            pred.width,
            pred.height,
            pred.len()
        )));
    }
    Ok(())
}

/// Row-major foreground buffers, `[person][frame]`.
fn decode_regions(gt: &FrameSequence, masks: &[MaskSequence]) -> Result<Vec<Vec<Vec<bool>>>, QualityError> {
    masks
        .iter()
        .enumerate()
        .map(|(p, seq)| {
            if seq.len() != gt.len() {
                return Err(QualityError::ShapeMismatch(format!("person {p} has {} masks for {} frames", seq.len(), gt.len())));
            }
            seq.masks()
                .iter()
                .map(|m| {
                    if (m.width() as usize, m.height() as usize) != (gt.width, gt.height) {
                        return Err(QualityError::ShapeMismatch(format!(
                            "person {p} mask is {}x{}, frames are {}x{}",
                            m.width(),
                            m.height(),
                            gt.width,
                            gt.height
                        )));
                    }
                    Ok(m.to_row_major())
                })
                .collect()
        })
        .collect()
}

/// Evaluates `score` per person and averages the persons that produced a
/// value; `score` returns `None` when a person's region is empty.
fn over_persons(
    gt: &FrameSequence,
    masks: &[MaskSequence],
    mut score: impl FnMut(&[Vec<bool>]) -> Result<Option<f64>, QualityError>,
) -> Result<Measured, QualityError> {
    let regions = decode_regions(gt, masks)?;
    let mut flags = Vec::new();
    let mut values = Vec::new();
    for (p, region) in regions.iter().enumerate() {
        match score(region)? {
            Some(v) => values.push(v),
            None => flags.push(format!("person_{p}_empty_region")),
        }
    }
    if values.is_empty() {
        return Err(QualityError::EmptyRegion);
    }
    Ok(Measured { value: values.iter().sum::<f64>() / values.len() as f64, flags })
}

/// Mean absolute pixel difference; with masks, over each person's
/// foreground pixels, averaged over persons.
pub fn l1(gt: &FrameSequence, pred: &FrameSequence, masks: Option<&[MaskSequence]>) -> Result<Measured, QualityError> {
    check_pair(gt, pred)?;
    let abs_sum = |t: usize, keep: &dyn Fn(usize) -> bool| -> (f64, usize) {
        let (mut s, mut n) = (0.0, 0usize);
        for (i, (a, b)) in gt.frames[t].chunks_exact(3).zip(pred.frames[t].chunks_exact(3)).enumerate() {
            if keep(i) {
                for c in 0..3 {
                    s += f64::from(a[c].abs_diff(b[c]));
                }
                n += 3;
            }
        }
        (s, n)
    };
    match masks {
        None => {
            let total: f64 = (0..gt.len()).map(|t| abs_sum(t, &|_| true).0).sum();
            Ok(Measured::plain(total / (gt.len() * gt.width * gt.height * 3) as f64))
        }
        Some(masks) => over_persons(gt, masks, |region| {
            let (mut s, mut n) = (0.0, 0usize);
            for (t, m) in region.iter().enumerate() {
                let (fs, fnn) = abs_sum(t, &|i| m[i]);
                s += fs;
                n += fnn;
            }
            Ok((n > 0).then(|| s / n as f64))
        }),
    }
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (20.0 * (255.0 / mse.sqrt()).log10()).min(PSNR_CAP_DB)
}

/// Per-frame PSNR (capped at 100 dB) averaged over frames; with masks the
/// MSE of each frame covers one person's foreground, and frames where that
/// person is absent are skipped.
pub fn psnr(gt: &FrameSequence, pred: &FrameSequence, masks: Option<&[MaskSequence]>) -> Result<Measured, QualityError> {
    check_pair(gt, pred)?;
    let frame_mse = |t: usize, keep: &dyn Fn(usize) -> bool| -> Option<f64> {
        let (mut s, mut n) = (0.0, 0usize);
        for (i, (a, b)) in gt.frames[t].chunks_exact(3).zip(pred.frames[t].chunks_exact(3)).enumerate() {
            if keep(i) {
                for c in 0..3 {
                    s += (f64::from(a[c]) - f64::from(b[c])).powi(2);
                }
                n += 3;
            }
        }
        (n > 0).then(|| s / n as f64)
    };
    match masks {
        None => {
            let total: f64 = (0..gt.len()).map(|t| psnr_from_mse(frame_mse(t, &|_| true).unwrap_or(0.0))).sum();
            Ok(Measured::plain(total / gt.len() as f64))
        }
        Some(masks) => over_persons(gt, masks, |region| {
            let values: Vec<f64> =
                region.iter().enumerate().filter_map(|(t, m)| frame_mse(t, &|i| m[i])).map(psnr_from_mse).collect();
            Ok((!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64))
        }),
    }
}

fn apply_mask(plane: &mut [f64], mask: &[bool]) {
    for (v, &keep) in plane.iter_mut().zip(mask) {
        if !keep {
            *v = 0.0;
        }
    }
}

/// Mean over `entries` of per-(frame or block, channel) SSIM values.
fn mean_or_none(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// SSIM of every `(start frame, channel)` block of `depth` frames; with a
/// region, frames are zeroed outside it and only windows centred on the
/// region of the block's middle frame count.
fn block_ssims(
    gt: &FrameSequence,
    pred: &FrameSequence,
    depth: usize,
    region: Option<&[Vec<bool>]>,
) -> Result<Vec<f64>, QualityError> {
    let params = SsimParams::standard(255.0);
    let stats: Vec<[WindowStats; 3]> = (0..gt.len())
        .into_par_iter()
        .map(|t| -> Result<[WindowStats; 3], SsimError> {
            let plane = |c: usize| {
                let (mut a, mut b) = (gt.channel(t, c), pred.channel(t, c));
                if let Some(region) = region {
                    apply_mask(&mut a, &region[t]);
                    apply_mask(&mut b, &region[t]);
                }
                WindowStats::new(&a, &b, gt.width, gt.height, &params)
            };
            Ok([plane(0)?, plane(1)?, plane(2)?])
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for t in 0..=gt.len() - depth {
        for c in 0..3 {
            let stack: Vec<&WindowStats> = stats[t..t + depth].iter().map(|s| &s[c]).collect();
            let map = ssim_map_from_stats(&stack, &params)?;
            match region {
                None => out.push(map.mean()),
                Some(region) => match map.masked_mean(&region[t + depth / 2], gt.width) {
                    Ok(v) => out.push(v),
                    Err(SsimError::EmptyRegion) => {}
                    Err(e) => return Err(e.into()),
                },
            }
        }
    }
    Ok(out)
}

fn structural(
    gt: &FrameSequence,
    pred: &FrameSequence,
    masks: Option<&[MaskSequence]>,
    depth: usize,
) -> Result<Measured, QualityError> {
    check_pair(gt, pred)?;
    if gt.len() < depth {
        return Err(QualityError::TooFewFrames { need: depth, got: gt.len() });
    }
    match masks {
        None => Ok(Measured::plain(mean_or_none(&block_ssims(gt, pred, depth, None)?).unwrap_or(f64::NAN))),
        Some(masks) => over_persons(gt, masks, |region| Ok(mean_or_none(&block_ssims(gt, pred, depth, Some(region))?))),
    }
}

/// Per-frame, per-channel SSIM (11x11 Gaussian window, sigma 1.5, L = 255)
/// averaged over frames and channels.
pub fn ssim(gt: &FrameSequence, pred: &FrameSequence, masks: Option<&[MaskSequence]>) -> Result<Measured, QualityError> {
    structural(gt, pred, masks, 1)
}

/// SSIM over sliding 3-frame volumes with a 3D Gaussian window, averaged
/// over the `T − 2` block positions and the channels.
pub fn st_ssim(gt: &FrameSequence, pred: &FrameSequence, masks: Option<&[MaskSequence]>) -> Result<Measured, QualityError> {
    structural(gt, pred, masks, ST_SSIM_DEPTH)
}

/// Prewitt gradient magnitude of the interior `(w−2) x (h−2)` pixels.
fn gradient_magnitude(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let at = |x: usize, y: usize| plane[y * width + x];
    let mut out = Vec::with_capacity((width - 2) * (height - 2));
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let gx = (at(x - 1, y - 1) + at(x - 1, y) + at(x - 1, y + 1) - at(x + 1, y - 1) - at(x + 1, y) - at(x + 1, y + 1)) / 3.0;
            let gy = (at(x - 1, y - 1) + at(x, y - 1) + at(x + 1, y - 1) - at(x - 1, y + 1) - at(x, y + 1) - at(x + 1, y + 1)) / 3.0;
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Gradient magnitude similarity map of frame `t` over the interior pixels.
pub fn gms_map(gt: &FrameSequence, pred: &FrameSequence, t: usize) -> Vec<f64> {
    let g = gradient_magnitude(&gt.luma(t), gt.width, gt.height);
    let h = gradient_magnitude(&pred.luma(t), pred.width, pred.height);
    g.iter().zip(&h).map(|(a, b)| (2.0 * a * b + GMS_EPSILON) / (a * a + b * b + GMS_EPSILON)).collect()
}

fn population_variance(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    Some(values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
}

/// Square root of the mean, over frames `2..=T`, of the spatial variance of
/// the gradient magnitude similarity map. With masks the variance covers a
/// person's interior foreground pixels.
pub fn gmsd_temporal(gt: &FrameSequence, pred: &FrameSequence, masks: Option<&[MaskSequence]>) -> Result<Measured, QualityError> {
    check_pair(gt, pred)?;
    if gt.len() < 2 {
        return Err(QualityError::TooFewFrames { need: 2, got: gt.len() });
    }
    if gt.width < 3 || gt.height < 3 {
        return Err(QualityError::ShapeMismatch(format!("{}x{} frames have no interior", gt.width, gt.height)));
    }
    let (w, h) = (gt.width, gt.height);
    let interior = |m: &[bool]| -> Vec<bool> {
        (1..h - 1).flat_map(|y| (1..w - 1).map(move |x| y * w + x)).map(|i| m[i]).collect()
    };
    let maps: Vec<Vec<f64>> = (1..gt.len()).map(|t| gms_map(gt, pred, t)).collect();
    match masks {
        None => {
            let total: f64 = maps.iter().map(|m| population_variance(m.iter().copied()).unwrap_or(0.0)).sum();
            Ok(Measured::plain((total / maps.len() as f64).sqrt()))
        }
        Some(masks) => over_persons(gt, masks, |region| {
            let vars: Vec<f64> = maps
                .iter()
                .enumerate()
                .filter_map(|(k, map)| {
                    let keep = interior(&region[k + 1]);
                    population_variance(map.iter().zip(keep.clone()).filter(|(_, k)| *k).map(|(v, _)| *v))
                })
                .collect();
            Ok(mean_or_none(&vars).map(f64::sqrt))
        }),
    }
}

/// `N` feature vectors of length `dim` with the tag naming their source
/// network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    tag: String,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureSet {
    pub fn new(tag: impl Into<String>, dim: usize, values: Vec<f32>) -> Result<Self, QualityError> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(QualityError::BadFeatures(format!("{} values do not split into rows of {dim}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QualityError::BadFeatures("non-finite value".into()));
        }
        Ok(Self { tag: tag.into(), dim, values })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Fréchet distance between Gaussians fitted to two feature sets (FVD, FID
/// and CLIP-FID differ only in the features supplied).
pub fn feature_frechet(real: &FeatureSet, fake: &FeatureSet) -> Result<f64, QualityError> {
    if real.dim != fake.dim {
        return Err(GaussianError::DimMismatch(real.dim, fake.dim).into());
    }
    Ok(frechet_from_samples(&real.as_f64(), &fake.as_f64(), real.dim)?)
}

/// Mean per-frame cosine similarity of paired embeddings.
pub fn clip_score(gt: &FeatureSet, pred: &FeatureSet) -> Result<f64, QualityError> {
    if gt.dim != pred.dim || gt.count() != pred.count() {
        return Err(QualityError::ShapeMismatch(format!(
            "{}x{} vs {}x{} embeddings",
            gt.count(),
            gt.dim,
            pred.count(),
            pred.dim
        )));
    }
    if gt.count() == 0 {
        return Err(QualityError::NoFrames);
    }
    let mut sum = 0.0;
    for i in 0..gt.count() {
        let (a, b) = (gt.row(i), pred.row(i));
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        let na = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(QualityError::ZeroNorm(i));
        }
        sum += dot / (na * nb);
    }
    Ok(sum / gt.count() as f64)
}

/// One network layer: `C x H x W` activations plus one weight per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub weights: Vec<f32>,
    /// Channel-major values, index `c * H * W + y * W + x`.
    pub values: Vec<f32>,
}

impl FeatureLayer {
    pub fn new(channels: usize, height: usize, width: usize, weights: Vec<f32>, values: Vec<f32>) -> Result<Self, QualityError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(QualityError::BadFeatures("empty layer".into()));
        }
        if weights.len() != channels || values.len() != channels * height * width {
            return Err(QualityError::BadFeatures(format!(
                "layer {channels}x{height}x{width} has {} weights and {} values",
                weights.len(),
                values.len()
            )));
        }
        if weights.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(QualityError::BadFeatures("non-finite value".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(QualityError::BadFeatures("negative channel weight".into()));
        }
        Ok(Self { channels, height, width, weights, values })
    }

    fn spatial(&self) -> usize {
        self.height * self.width
    }

    fn at(&self, c: usize, s: usize) -> f64 {
        f64::from(self.values[c * self.spatial() + s])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatureMaps {
    pub layers: Vec<FeatureLayer>,
}

fn check_layers(a: &LayerFeatureMaps, b: &LayerFeatureMaps) -> Result<(), QualityError> {
    if a.layers.is_empty() || a.layers.len() != b.layers.len() {
        return Err(QualityError::ShapeMismatch(format!("{} vs {} layers", a.layers.len(), b.layers.len())));
    }
    for (i, (x, y)) in a.layers.iter().zip(&b.layers).enumerate() {
        if (x.channels, x.height, x.width) != (y.channels, y.height, y.width) {
            return Err(QualityError::ShapeMismatch(format!("layer {i} shapes differ")));
        }
    }
    Ok(())
}

/// `(1/L) Σ_ℓ (1/(H_ℓ W_ℓ)) ‖w_ℓ ⊙ (φ̂_ℓ(I) − φ̂_ℓ(Î))‖₁`, where `φ̂` divides
/// each spatial position's channel vector by its norm. Channel weights are
/// taken from the ground-truth maps.
pub fn lpips_from_features(gt: &LayerFeatureMaps, pred: &LayerFeatureMaps) -> Result<f64, QualityError> {
    check_layers(gt, pred)?;
    let mut total = 0.0;
    for (a, b) in gt.layers.iter().zip(&pred.layers) {
        let mut layer = 0.0;
        for s in 0..a.spatial() {
            let na = (0..a.channels).map(|c| a.at(c, s).powi(2)).sum::<f64>().sqrt() + LPIPS_EPS;
            let nb = (0..b.channels).map(|c| b.at(c, s).powi(2)).sum::<f64>().sqrt() + LPIPS_EPS;
            for c in 0..a.channels {
                layer += (f64::from(a.weights[c]) * (a.at(c, s) / na - b.at(c, s) / nb)).abs();
            }
        }
        total += layer / a.spatial() as f64;
    }
    Ok(total / gt.layers.len() as f64)
}

/// Per-layer DISTS terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistsLayer {
    pub structure: f64,
    pub texture: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistsScore {
    /// `(1/L) Σ (0.5 structure + 0.5 (1 − texture))`; 1 for identical inputs.
    pub raw: f64,
    /// `1 − raw`, so that lower is better.
    pub oriented: f64,
    pub layers: Vec<DistsLayer>,
}

/// `F Fᵀ / (H W)` for the `C x HW` activation matrix.
fn gram(layer: &FeatureLayer) -> Vec<f64> {
    let (c, s) = (layer.channels, layer.spatial());
    let mut g = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let v = (0..s).map(|k| layer.at(i, k) * layer.at(j, k)).sum::<f64>() / s as f64;
            g[i * c + j] = v;
            g[j * c + i] = v;
        }
    }
    g
}

/// Structure is the cosine between the norm-scaled layer tensors, texture
/// the mean squared difference of their Gram matrices.
pub fn dists_from_features(gt: &LayerFeatureMaps, pred: &LayerFeatureMaps) -> Result<DistsScore, QualityError> {
    check_layers(gt, pred)?;
    let mut layers = Vec::new();
    for (i, (a, b)) in gt.layers.iter().zip(&pred.layers).enumerate() {
        let na = a.values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        let nb = b.values.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(QualityError::ZeroNorm(i));
        }
        let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (f64::from(*x) / na) * (f64::from(*y) / nb)).sum();
        let (ga, gb) = (gram(a), gram(b));
        let texture = ga.iter().zip(&gb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / ga.len() as f64;
        layers.push(DistsLayer { structure: dot, texture });
    }
    let raw = layers.iter().map(|l| 0.5 * l.structure + 0.5 * (1.0 - l.texture)).sum::<f64>() / layers.len() as f64;
    Ok(DistsScore { raw, oriented: 1.0 - raw, layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BinaryMask;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(w: usize, h: usize, t: usize, v: u8) -> FrameSequence {
        FrameSequence::new(w, h, vec![vec![v; w * h * 3]; t]).unwrap()
    }

    fn random_frames(rng: &mut ChaCha8Rng, w: usize, h: usize, t: usize) -> FrameSequence {
        FrameSequence::new(w, h, (0..t).map(|_| (0..w * h * 3).map(|_| rng.random()).collect()).collect()).unwrap()
    }

    fn perturbed(rng: &mut ChaCha8Rng, base: &FrameSequence, amount: u8) -> FrameSequence {
        let frames = base
            .frames()
            .iter()
            .map(|f| f.iter().map(|&v| v.saturating_add(rng.random_range(0..=amount)).saturating_sub(rng.random_range(0..=amount))).collect())
            .collect();
        FrameSequence::new(base.width(), base.height(), frames).unwrap()
    }

    fn full_masks(w: usize, h: usize, t: usize, persons: usize) -> Vec<MaskSequence> {
        (0..persons).map(|_| MaskSequence::new(vec![BinaryMask::full(w as u32, h as u32); t]).unwrap()).collect()
    }

    #[test]
    fn l1_examples() {
        let a = constant(4, 4, 2, 0);
        assert_eq!(l1(&a, &a, None).unwrap().value, 0.0);
        assert_eq!(l1(&a, &constant(4, 4, 2, 255), None).unwrap().value, 255.0);
        let checker: Vec<u8> = (0..16).flat_map(|i| [if (i / 4 + i % 4) % 2 == 0 { 100 } else { 0 }; 3]).collect();
        let b = FrameSequence::new(4, 4, vec![checker.clone(), checker]).unwrap();
        assert_eq!(l1(&a, &b, None).unwrap().value, 50.0);
    }

    #[test]
    fn psnr_examples() {
        let a = constant(4, 4, 2, 0);
        assert_eq!(psnr(&a, &constant(4, 4, 2, 255), None).unwrap().value, 0.0);
        assert_eq!(psnr(&a, &a, None).unwrap().value, PSNR_CAP_DB);
        let v = psnr(&a, &constant(4, 4, 2, 51), None).unwrap().value;
        assert!((v - 20.0 * 5f64.log10()).abs() < 1e-12);
        assert!((v - 13.979).abs() < 1e-3);
    }

    #[test]
    fn ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_frames(&mut rng, 16, 16, 2);
        assert!((ssim(&a, &a, None).unwrap().value - 1.0).abs() < 1e-12);
        let stripes: Vec<u8> = (0..256).flat_map(|i| [if (i % 16) / 2 % 2 == 0 { 255 } else { 0 }; 3]).collect();
        let inverse: Vec<u8> = stripes.iter().map(|v| 255 - v).collect();
        let s = FrameSequence::new(16, 16, vec![stripes]).unwrap();
        let inv = FrameSequence::new(16, 16, vec![inverse]).unwrap();
        let v = ssim(&s, &inv, None).unwrap().value;
        assert!(v < 0.0 && v >= -1.0);
        assert!(matches!(ssim(&constant(8, 8, 1, 0), &constant(8, 8, 1, 0), None), Err(QualityError::Ssim(SsimError::TooSmall { .. }))));
    }

    #[test]
    fn st_ssim_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_frames(&mut rng, 12, 12, 5);
        assert!((st_ssim(&a, &a, None).unwrap().value - 1.0).abs() < 1e-12);
        let one = random_frames(&mut rng, 12, 12, 1);
        let stat = FrameSequence::new(12, 12, vec![one.frames()[0].clone(); 4]).unwrap();
        assert!((st_ssim(&stat, &stat, None).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(st_ssim(&one, &one, None), Err(QualityError::TooFewFrames { need: 3, got: 1 }));
    }

    #[test]
    fn gmsd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_frames(&mut rng, 9, 7, 3);
        assert_eq!(gmsd_temporal(&a, &a, None).unwrap().value, 0.0);
        let flat = constant(9, 7, 3, 80);
        assert_eq!(gmsd_temporal(&flat, &constant(9, 7, 3, 200), None).unwrap().value, 0.0);
        assert!(matches!(gmsd_temporal(&constant(9, 7, 1, 0), &constant(9, 7, 1, 0), None), Err(QualityError::TooFewFrames { .. })));
    }

    #[test]
    fn gmsd_matches_pixel_oracle() {
        let (w, h) = (8usize, 6usize);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_frames(&mut rng, w, h, 3);
        // Distort a 3x3 patch in frames 1 and 2 only.
        let mut frames = gt.frames().to_vec();
        for f in frames.iter_mut().skip(1) {
            for y in 2..5 {
                for x in 3..6 {
                    for c in 0..3 {
                        f[(y * w + x) * 3 + c] = 255 - f[(y * w + x) * 3 + c];
                    }
                }
            }
        }
        let pred = FrameSequence::new(w, h, frames).unwrap();
        let lum = |s: &FrameSequence, t: usize, x: usize, y: usize| {
            let p = &s.frames()[t][(y * w + x) * 3..];
            0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
        };
        let grad = |s: &FrameSequence, t: usize, x: usize, y: usize| {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for d in [-1i64, 0, 1] {
                let yy = (y as i64 + d) as usize;
                let xx = (x as i64 + d) as usize;
                gx += (lum(s, t, x - 1, yy) - lum(s, t, x + 1, yy)) / 3.0;
                gy += (lum(s, t, xx, y - 1) - lum(s, t, xx, y + 1)) / 3.0;
            }
            (gx * gx + gy * gy).sqrt()
        };
        let mut var_sum = 0.0;
        for t in 1..3 {
            let mut vals = Vec::new();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let (a, b) = (grad(&gt, t, x, y), grad(&pred, t, x, y));
                    vals.push((2.0 * a * b + 170.0) / (a * a + b * b + 170.0));
                }
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            var_sum += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
        }
        let oracle = (var_sum / 2.0).sqrt();
        let got = gmsd_temporal(&gt, &pred, None).unwrap().value;
        assert!(oracle > 0.01);
        assert!((got - oracle).abs() < 1e-10);
    }

    #[test]
    fn masked_scores_average_the_persons() {
        let (w, h) = (20usize, 16usize);
        let gt = constant(w, h, 2, 10);
        // Left half differs by 20, right half by 40.
        let row: Vec<u8> = (0..w * h).flat_map(|i| [if i % w < 10 { 30 } else { 50 }; 3]).collect();
        let pred = FrameSequence::new(w, h, vec![row.clone(), row]).unwrap();
        let left = MaskSequence::new(vec![BinaryMask::from_fn(w as u32, h as u32, |x, _| x < 10); 2]).unwrap();
        let right = MaskSequence::new(vec![BinaryMask::from_fn(w as u32, h as u32, |x, _| x >= 10); 2]).unwrap();
        let empty = MaskSequence::new(vec![BinaryMask::empty(w as u32, h as u32); 2]).unwrap();
        let m = l1(&gt, &pred, Some(&[left.clone(), right.clone()])).unwrap();
        assert_eq!(m.value, 30.0);
        let m = l1(&gt, &pred, Some(&[left, empty.clone()])).unwrap();
        assert_eq!(m.value, 20.0);
        assert_eq!(m.flags, vec!["person_1_empty_region".to_string()]);
        assert_eq!(l1(&gt, &pred, Some(&[empty])), Err(QualityError::EmptyRegion));
        let p = psnr(&gt, &pred, Some(&[right])).unwrap().value;
        assert!((p - 20.0 * (255.0f64 / 40.0).log10()).abs() < 1e-12);
    }

    #[test]
    fn masked_with_full_masks_equals_full_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let a = random_frames(&mut rng, 14, 12, 4);
            let b = perturbed(&mut rng, &a, 30);
            let masks = full_masks(14, 12, 4, 2);
            type Metric = fn(&FrameSequence, &FrameSequence, Option<&[MaskSequence]>) -> Result<Measured, QualityError>;
            for f in [l1 as Metric, psnr, ssim, st_ssim, gmsd_temporal] {
                let full = f(&a, &b, None).unwrap().value;
                let masked = f(&a, &b, Some(&masks)).unwrap().value;
                assert!((full - masked).abs() < 1e-10, "{full} vs {masked}");
            }
        }
    }

    #[test]
    fn clip_score_cases() {
        let a = FeatureSet::new("clip", 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        assert!((clip_score(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let orth = FeatureSet::new("clip", 2, vec![0.0, 3.0, 5.0, 0.0]).unwrap();
        assert_eq!(clip_score(&a, &orth).unwrap(), 0.0);
        let anti = FeatureSet::new("clip", 2, vec![-2.0, 0.0, 0.0, -1.0]).unwrap();
        assert!((clip_score(&a, &anti).unwrap() + 1.0).abs() < 1e-15);
        let zero = FeatureSet::new("clip", 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(clip_score(&a, &zero), Err(QualityError::ZeroNorm(0)));
    }

    #[test]
    fn feature_frechet_cases() {
        let a = FeatureSet::new("inception", 1, vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let b = FeatureSet::new("inception", 1, vec![2.0, 4.0, 2.0, 4.0]).unwrap();
        assert!(feature_frechet(&a, &a).unwrap() < 1e-6);
        assert!((feature_frechet(&a, &b).unwrap() - 9.0).abs() < 1e-12);
        let c = FeatureSet::new("i3d", 2, vec![0.0; 4]).unwrap();
        assert!(matches!(feature_frechet(&a, &c), Err(QualityError::Gaussian(GaussianError::DimMismatch(1, 2)))));
        assert!(FeatureSet::new("x", 3, vec![0.0; 4]).is_err());
        assert!(FeatureSet::new("x", 1, vec![f32::NAN]).is_err());
    }

    fn layer(c: usize, h: usize, w: usize, weights: Vec<f32>, values: Vec<f32>) -> LayerFeatureMaps {
        LayerFeatureMaps { layers: vec![FeatureLayer::new(c, h, w, weights, values).unwrap()] }
    }

    #[test]
    fn lpips_cases() {
        let a = layer(2, 1, 1, vec![1.0, 1.0], vec![3.0, 4.0]);
        let b = layer(2, 1, 1, vec![1.0, 1.0], vec![1.0, 0.0]);
        assert_eq!(lpips_from_features(&a, &a).unwrap(), 0.0);
        let expected = (3.0f64 / (5.0 + 1e-10) - 1.0 / (1.0 + 1e-10)).abs() + (4.0 / (5.0 + 1e-10) - 0.0f64).abs();
        assert!((lpips_from_features(&a, &b).unwrap() - expected).abs() < 1e-12);
        let zero_w = layer(2, 1, 1, vec![0.0, 0.0], vec![3.0, 4.0]);
        assert_eq!(lpips_from_features(&zero_w, &b).unwrap(), 0.0);
        let other = layer(2, 1, 2, vec![1.0, 1.0], vec![0.0; 4]);
        assert!(matches!(lpips_from_features(&a, &other), Err(QualityError::ShapeMismatch(_))));
    }

    #[test]
    fn dists_cases() {
        let a = layer(1, 1, 2, vec![1.0], vec![1.0, 0.0]);
        let same = dists_from_features(&a, &a).unwrap();
        assert!((same.raw - 1.0).abs() < 1e-15);
        assert!(same.oriented.abs() < 1e-15);
        let b = layer(1, 1, 2, vec![1.0], vec![0.0, 1.0]);
        let orth = dists_from_features(&a, &b).unwrap();
        assert_eq!(orth.layers[0], DistsLayer { structure: 0.0, texture: 0.0 });
        assert!((orth.raw - 0.5).abs() < 1e-15);
        // Two channels over two positions, expanded by hand.
        let x = layer(2, 1, 2, vec![1.0, 1.0], vec![1.0, 2.0, 0.0, 1.0]);
        let y = layer(2, 1, 2, vec![1.0, 1.0], vec![2.0, 0.0, 1.0, 1.0]);
        let dot = (2.0 + 0.0 + 0.0 + 1.0) / (6f64.sqrt() * 6f64.sqrt());
        let gx = [2.5, 1.0, 1.0, 0.5];
        let gy = [2.0, 1.0, 1.0, 1.0];
        let tex = gx.iter().zip(gy).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / 4.0;
        let d = dists_from_features(&x, &y).unwrap();
        assert!((d.raw - (0.5 * dot + 0.5 * (1.0 - tex))).abs() < 1e-12);
        let z = layer(1, 1, 2, vec![1.0], vec![0.0, 0.0]);
        assert_eq!(dists_from_features(&a, &z), Err(QualityError::ZeroNorm(0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ssim_and_psnr_are_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_frames(&mut rng, 13, 11, 2);
            let b = perturbed(&mut rng, &a, 60);
            prop_assert!((ssim(&a, &b, None).unwrap().value - ssim(&b, &a, None).unwrap().value).abs() < 1e-12);
            prop_assert_eq!(psnr(&a, &b, None).unwrap().value, psnr(&b, &a, None).unwrap().value);
        }

        #[test]
        fn clip_score_ignores_positive_scaling(seed in any::<u64>(), s in 0.01f32..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f32> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f32> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = FeatureSet::new("clip", 8, v.clone()).unwrap();
            let b = FeatureSet::new("clip", 8, u).unwrap();
            let scaled = FeatureSet::new("clip", 8, v.iter().map(|x| x * s).collect()).unwrap();
            let base = clip_score(&a, &b).unwrap();
            prop_assert!((base - clip_score(&scaled, &b).unwrap()).abs() < 1e-6);
        }
    }
}
