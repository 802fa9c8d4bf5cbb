//! Interaction-coherence metrics over multi-person whole-body pose
//! sequences: aligned joint error, keypoint similarity, heatmap SSIM,
//! finite-difference smoothness and the velocity-distribution Fréchet
//! distance (FVMD).

use log::debug;
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{frechet_distance_2d, GaussianError, GaussianSummary};
use crate::geometry::{estimate_similarity, KeypointSet, Point2, SimilarityTransform, NUM_KEYPOINTS};
use crate::sigmas::WHOLEBODY_SIGMAS;
use crate::ssim::{ssim_map, SsimError, SsimParams};

/// Heatmap bump width in pixels.
pub const HEATMAP_SIGMA: f64 = 4.0;

/// Area assumed for a person box when only the box is known (COCO ratio of
/// segment area to box area).
pub const BOX_AREA_RATIO: f64 = 0.53;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("pose sequence has no frames")]
    NoFrames,
    #[error("frame rate must be finite and positive, got {0}")]
    BadFrameRate(f64),
    #[error("frame {frame} has {got} persons, expected {expected}")]
    PersonCount { frame: usize, got: usize, expected: usize },
    #[error("sequences differ in shape: {0} vs {1} frames, {2} vs {3} persons")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("no keypoint is valid in both sequences")]
    NoValidKeypoints,
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("no area for person {person} in frame {frame}")]
    MissingArea { frame: usize, person: usize },
    #[error("person area must be finite and positive, got {0}")]
    BadArea(f64),
    #[error("area table does not cover {0} frames x {1} persons")]
    AreaShape(usize, usize),
    #[error("raster of {0}x{1} pixels is too small")]
    RasterSize(usize, usize),
    #[error("need at least 2 velocity samples, got {0}")]
    TooFewVelocities(usize),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// `T` frames of `P` persons each, sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    fps: f64,
    frames: Vec<Vec<KeypointSet>>,
}

impl PoseSequence {
    pub fn new(fps: f64, frames: Vec<Vec<KeypointSet>>) -> Result<Self, PoseError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(PoseError::BadFrameRate(fps));
        }
        let expected = frames.first().ok_or(PoseError::NoFrames)?.len();
        if let Some((frame, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != expected) {
            return Err(PoseError::PersonCount { frame, got: f.len(), expected });
        }
        Ok(Self { fps, frames })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[Vec<KeypointSet>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn persons(&self) -> usize {
        self.frames[0].len()
    }

    /// Applies `f` to every valid keypoint.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Self {
        Self {
            fps: self.fps,
            frames: self.frames.iter().map(|fr| fr.iter().map(|k| k.map_points(&f)).collect()).collect(),
        }
    }

    fn joint(&self, t: usize, p: usize, j: usize) -> Option<Point2> {
        self.frames[t][p].get(j)
    }
}

fn check_shapes(a: &PoseSequence, b: &PoseSequence) -> Result<(), PoseError> {
    if a.len() != b.len() || a.persons() != b.persons() {
        return Err(PoseError::ShapeMismatch(a.len(), b.len(), a.persons(), b.persons()));
    }
    Ok(())
}

/// `(ground truth, prediction)` pairs of every keypoint valid in both.
fn shared_points(gt: &[KeypointSet], pred: &[KeypointSet]) -> (Vec<Point2>, Vec<Point2>) {
    let mut g = Vec::new();
    let mut p = Vec::new();
    for (gs, ps) in gt.iter().zip(pred) {
        for j in 0..NUM_KEYPOINTS {
            if let (Some(a), Some(b)) = (gs.get(j), ps.get(j)) {
                g.push(a);
                p.push(b);
            }
        }
    }
    (g, p)
}

/// Mean joint error in pixels after aligning each predicted frame onto its
/// ground-truth frame with the least-squares similarity over the keypoints
/// valid in both. Frames that cannot be aligned keep the identity transform.
pub fn mpjpe_2d(gt: &PoseSequence, pred: &PoseSequence) -> Result<f64, PoseError> {
    check_shapes(gt, pred)?;
    let (mut total, mut count) = (0.0, 0usize);
    for (t, (gf, pf)) in gt.frames.iter().zip(&pred.frames).enumerate() {
        let (g, p) = shared_points(gf, pf);
        if g.is_empty() {
            continue;
        }
        let transform = estimate_similarity(&p, &g).unwrap_or_else(|e| {
            debug!("frame {t}: alignment skipped ({e})");
            SimilarityTransform::identity()
        });
        total += p.iter().zip(&g).map(|(a, b)| transform.apply(*a).distance(b)).sum::<f64>();
        count += g.len();
    }
    if count == 0 {
        return Err(PoseError::NoValidKeypoints);
    }
    Ok(total / count as f64)
}

/// Where a person's area comes from: an explicit value wins over the mask
/// pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PersonArea {
    pub explicit: Option<f64>,
    pub mask_pixels: Option<f64>,
}

impl PersonArea {
    pub fn known(area: f64) -> Self {
        Self { explicit: Some(area), mask_pixels: None }
    }

    fn resolve(&self, frame: usize, person: usize) -> Result<f64, PoseError> {
        let a = self.explicit.or(self.mask_pixels).ok_or(PoseError::MissingArea { frame, person })?;
        if !(a.is_finite() && a > 0.0) {
            return Err(PoseError::BadArea(a));
        }
        Ok(a)
    }
}

/// One OKS term: `exp(−d² / (2 σ² (A + 1e−6)))`.
pub fn oks_term(d2: f64, sigma: f64, area: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma * (area + 1e-6))).exp()
}

/// Object keypoint similarity averaged over frames. Each frame averages the
/// terms of every keypoint valid in both sequences; frames without any such
/// keypoint are left out. `areas[t][p]` gives the area of person `p`.
pub fn oks(gt: &PoseSequence, pred: &PoseSequence, areas: &[Vec<PersonArea>]) -> Result<f64, PoseError> {
    check_shapes(gt, pred)?;
    if areas.len() != gt.len() || areas.iter().any(|a| a.len() != gt.persons()) {
        return Err(PoseError::AreaShape(gt.len(), gt.persons()));
    }
    let (mut sum, mut frames) = (0.0, 0usize);
    for t in 0..gt.len() {
        let (mut frame_sum, mut k) = (0.0, 0usize);
        for p in 0..gt.persons() {
            let mut area = None;
            for (j, sigma) in WHOLEBODY_SIGMAS.iter().enumerate() {
                if let (Some(a), Some(b)) = (gt.joint(t, p, j), pred.joint(t, p, j)) {
                    let area = match area {
                        Some(v) => v,
                        None => *area.insert(areas[t][p].resolve(t, p)?),
                    };
                    let d2 = (a.x - b.x).powi(2) + (a.y - b.y).powi(2);
                    frame_sum += oks_term(d2, *sigma, area);
                    k += 1;
                }
            }
        }
        if k > 0 {
            sum += frame_sum / k as f64;
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(PoseError::NoValidKeypoints);
    }
    Ok(sum / frames as f64)
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PixelRect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl PixelRect {
    fn width(&self) -> usize {
        self.x1 - self.x0
    }

    fn height(&self) -> usize {
        self.y1 - self.y0
    }

    fn union(self, other: PixelRect) -> PixelRect {
        PixelRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major values in `[0, 1]`.
    pub values: Vec<f64>,
}

fn raster_radius(sigma: f64) -> f64 {
    (3.0 * sigma).ceil()
}

/// Pixels (clamped to the frame) that a bump at `p` touches.
fn footprint(p: Point2, sigma: f64, width: usize, height: usize) -> Option<PixelRect> {
    let r = raster_radius(sigma);
    let lo = |c: f64| (c - r).ceil().max(0.0);
    let hi = |c: f64, n: usize| ((c + r).floor() + 1.0).min(n as f64);
    let (x0, x1) = (lo(p.x), hi(p.x, width));
    let (y0, y1) = (lo(p.y), hi(p.y, height));
    (x0 < x1 && y0 < y1).then(|| PixelRect { x0: x0 as usize, y0: y0 as usize, x1: x1 as usize, y1: y1 as usize })
}

/// Max-combines unit-amplitude Gaussian bumps into the `region` buffer.
fn rasterize_region(points: &[Point2], sigma: f64, width: usize, height: usize, region: PixelRect) -> Vec<f64> {
    let mut out = vec![0.0f64; region.width() * region.height()];
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut column = Vec::new();
    for &p in points {
        let Some(fp) = footprint(p, sigma, width, height) else { continue };
        let (x0, x1) = (fp.x0.max(region.x0), fp.x1.min(region.x1));
        let (y0, y1) = (fp.y0.max(region.y0), fp.y1.min(region.y1));
        column.clear();
        column.extend((x0..x1).map(|x| (-(x as f64 - p.x).powi(2) * inv).exp()));
        for y in y0..y1 {
            let ey = (-(y as f64 - p.y).powi(2) * inv).exp();
            let start = (y - region.y0) * region.width() + x0 - region.x0;
            for (cell, ex) in out[start..start + column.len()].iter_mut().zip(&column) {
                *cell = cell.max(ey * ex);
            }
        }
    }
    out
}

/// Rasterises `points` into a `width x height` heatmap: one Gaussian bump of
/// amplitude 1 per point, truncated at 3 sigma, combined by per-pixel max.
pub fn rasterize_keypoints(points: &[Point2], width: usize, height: usize, sigma: f64) -> Heatmap {
    let full = PixelRect { x0: 0, y0: 0, x1: width, y1: height };
    Heatmap { width, height, values: rasterize_region(points, sigma, width, height, full) }
}

fn frame_points(frame: &[KeypointSet]) -> Vec<Point2> {
    frame.iter().flat_map(|k| k.valid_points().map(|(_, p)| p)).collect()
}

/// Mean SSIM of two frame heatmaps.
///
/// Windows whose footprint holds no bump pixel in either raster compare two
/// all-zero patches and score exactly 1, so only the region around the
/// keypoints is rasterised and filtered.
fn heatmap_ssim(a: &[Point2], b: &[Point2], width: usize, height: usize, params: &SsimParams) -> Result<f64, SsimError> {
    let k = params.window;
    let total = ((width + 1 - k) * (height + 1 - k)) as f64;
    let touched = a
        .iter()
        .chain(b)
        .filter_map(|&p| footprint(p, HEATMAP_SIGMA, width, height))
        .reduce(PixelRect::union);
    let Some(core) = touched else { return Ok(1.0) };
    let pad = k - 1;
    let crop = PixelRect {
        x0: core.x0.saturating_sub(pad),
        y0: core.y0.saturating_sub(pad),
        x1: (core.x1 + pad).min(width),
        y1: (core.y1 + pad).min(height),
    };
    let ra = rasterize_region(a, HEATMAP_SIGMA, width, height, crop);
    let rb = rasterize_region(b, HEATMAP_SIGMA, width, height, crop);
    let map = ssim_map(&ra, &rb, crop.width(), crop.height(), params)?;
    let inside: f64 = map.values.iter().sum();
    Ok((inside + (total - map.values.len() as f64)) / total)
}

/// Per-frame SSIM between keypoint heatmaps (all valid keypoints of all
/// persons, sigma 4 px, data range 1), averaged over frames.
pub fn pose_heat_ssim(gt: &PoseSequence, pred: &PoseSequence, width: usize, height: usize) -> Result<f64, PoseError> {
    if gt.len() != pred.len() {
        return Err(PoseError::ShapeMismatch(gt.len(), pred.len(), gt.persons(), pred.persons()));
    }
    let params = SsimParams::standard(1.0);
    if width < params.window || height < params.window {
        return Err(PoseError::RasterSize(width, height));
    }
    let per_frame = gt
        .frames
        .par_iter()
        .zip(&pred.frames)
        .map(|(gf, pf)| heatmap_ssim(&frame_points(pf), &frame_points(gf), width, height, &params))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| PoseError::RasterSize(width, height))?;
    Ok(per_frame.iter().sum::<f64>() / gt.len() as f64)
}

/// Forward difference of `order` scaled by `fps^order` for every
/// `(t, p, j)` whose stencil frames `t ..= t + order` all hold joint `j`.
fn derivatives(seq: &PoseSequence, order: usize) -> Vec<(usize, usize, usize, Point2)> {
    let coeffs: &[f64] = match order {
        1 => &[-1.0, 1.0],
        2 => &[1.0, -2.0, 1.0],
        3 => &[-1.0, 3.0, -3.0, 1.0],
        _ => unreachable!("unsupported difference order"),
    };
    let scale = seq.fps.powi(order as i32);
    let mut out = Vec::new();
    for t in 0..seq.len().saturating_sub(order) {
        for p in 0..seq.persons() {
            'joint: for j in 0..NUM_KEYPOINTS {
                let (mut x, mut y) = (0.0, 0.0);
                for (s, c) in coeffs.iter().enumerate() {
                    let Some(q) = seq.joint(t + s, p, j) else { continue 'joint };
                    x += c * q.x;
                    y += c * q.y;
                }
                out.push((t, p, j, Point2::new(x * scale, y * scale)));
            }
        }
    }
    out
}

fn rms(values: impl Iterator<Item = Point2>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v.x * v.x + v.y * v.y;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn require_frames(seq: &PoseSequence, need: usize) -> Result<(), PoseError> {
    if seq.len() < need {
        return Err(PoseError::TooFewFrames { need, got: seq.len() });
    }
    Ok(())
}

/// RMS jerk magnitude (third difference times `fps³`).
pub fn smooth_rms(seq: &PoseSequence) -> Result<f64, PoseError> {
    require_frames(seq, 4)?;
    rms(derivatives(seq, 3).into_iter().map(|d| d.3)).ok_or(PoseError::NoValidKeypoints)
}

/// RMS acceleration magnitude (second difference times `fps²`) of the
/// prediction.
pub fn time_dyn_rmse(pred: &PoseSequence, gt: &PoseSequence) -> Result<f64, PoseError> {
    require_frames(pred, 3)?;
    require_frames(gt, 3)?;
    rms(derivatives(pred, 2).into_iter().map(|d| d.3)).ok_or(PoseError::NoValidKeypoints)
}

/// RMS of the acceleration difference between prediction and ground truth
/// over stencils valid in both.
pub fn time_dyn_rmse_diff(pred: &PoseSequence, gt: &PoseSequence) -> Result<f64, PoseError> {
    check_shapes(gt, pred)?;
    require_frames(pred, 3)?;
    let gt_acc: std::collections::HashMap<(usize, usize, usize), Point2> =
        derivatives(gt, 2).into_iter().map(|(t, p, j, a)| ((t, p, j), a)).collect();
    let diffs = derivatives(pred, 2)
        .into_iter()
        .filter_map(|(t, p, j, a)| gt_acc.get(&(t, p, j)).map(|g| Point2::new(a.x - g.x, a.y - g.y)));
    rms(diffs).ok_or(PoseError::NoValidKeypoints)
}

/// Velocity samples (first difference times `fps`) as a flat `n x 2` buffer.
pub fn velocity_samples(seq: &PoseSequence) -> Vec<f64> {
    derivatives(seq, 1).into_iter().flat_map(|d| [d.3.x, d.3.y]).collect()
}

fn velocity_gaussian(seq: &PoseSequence) -> Result<GaussianSummary, PoseError> {
    require_frames(seq, 2)?;
    let v = velocity_samples(seq);
    if v.len() < 4 {
        return Err(PoseError::TooFewVelocities(v.len() / 2));
    }
    Ok(GaussianSummary::fit(&v, 2)?)
}

/// Fréchet distance between 2D Gaussians fitted to the keypoint velocities.
pub fn fvmd(gt: &PoseSequence, pred: &PoseSequence) -> Result<f64, PoseError> {
    let g = velocity_gaussian(gt)?;
    let p = velocity_gaussian(pred)?;
    Ok(frechet_distance_2d(&p, &g)?)
}
