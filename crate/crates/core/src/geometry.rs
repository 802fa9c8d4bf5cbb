//! Geometric primitives shared by every metric family: points, boxes,
//! run-length-encoded masks, whole-body keypoint sets and 2D similarity
//! alignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of whole-body keypoints per person (body, feet, face, hands).
pub const NUM_KEYPOINTS: usize = 133;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid box: ({0}, {1}, {2}, {3})")]
    InvalidBox(f64, f64, f64, f64),
    #[error("mask run lengths sum to {got}, expected {expected}")]
    MaskLength { got: u64, expected: u64 },
    #[error("mask has a zero-length run at position {0}")]
    ZeroRun(usize),
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    MaskDims(u32, u32, u32, u32),
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("keypoint set needs exactly {NUM_KEYPOINTS} slots, got {0}")]
    KeypointCount(usize),
    #[error("need at least 2 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("correspondence lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate correspondence set: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned box in pixel coordinates. Pixel boxes derived from masks use
/// the half-open convention: `x_max`/`y_max` are one past the last pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Tight box around a set of points; `None` when the set is empty.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point2>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self { x_min: first.x, y_min: first.y, x_max: first.x, y_max: first.y };
        for p in it {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x_min: self.x_min * factor,
            y_min: self.y_min * factor,
            x_max: self.x_max * factor,
            y_max: self.y_max * factor,
        }
    }
}

/// Intersection over union. Zero-area boxes always score 0, including two
/// identical zero-area boxes.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Binary mask stored as uncompressed COCO run lengths in column-major order:
/// runs alternate background/foreground starting with background, and pixel
/// `(x, y)` sits at linear index `y + height * x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

impl BinaryMask {
    /// Validates run lengths. Only the leading background run may be zero.
    pub fn from_counts(width: u32, height: u32, counts: Vec<u32>) -> Result<Self, GeometryError> {
        let expected = u64::from(width) * u64::from(height);
        let got: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if got != expected {
            return Err(GeometryError::MaskLength { got, expected });
        }
        if let Some(pos) = counts.iter().enumerate().skip(1).find(|(_, &c)| c == 0).map(|(i, _)| i) {
            return Err(GeometryError::ZeroRun(pos));
        }
        Ok(Self { width, height, counts })
    }

    /// Encodes a column-major pixel buffer.
    pub fn encode(width: u32, height: u32, column_major: &[bool]) -> Self {
        let n = width as usize * height as usize;
        assert_eq!(column_major.len(), n, "mask buffer must hold width*height pixels");
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &v in column_major {
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
        if n > 0 {
            counts.push(run);
        }
        Self { width, height, counts }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut buf = Vec::with_capacity(width as usize * height as usize);
        for x in 0..width {
            for y in 0..height {
                buf.push(f(x, y));
            }
        }
        Self::encode(width, height, &buf)
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::from_fn(width, height, |_, _| true)
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::from_fn(width, height, |_, _| false)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Column-major pixel buffer.
    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.width as usize * self.height as usize);
        let mut v = false;
        for &c in &self.counts {
            out.extend(std::iter::repeat_n(v, c as usize));
            v = !v;
        }
        out
    }

    /// Row-major pixel buffer, the layout used by frame buffers.
    pub fn to_row_major(&self) -> Vec<bool> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut out = vec![false; w * h];
        for (start, end) in self.foreground_runs() {
            for idx in start..end {
                let (x, y) = (idx / h, idx % h);
                out[y * w + x] = true;
            }
        }
        out
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| u64::from(c)).sum()
    }

    /// Half-open `[start, end)` linear index ranges of foreground runs.
    fn foreground_runs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut pos = 0usize;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as usize;
            (i % 2 == 1 && c > 0).then_some((start, pos))
        })
    }

    /// Tight half-open box around the foreground.
    pub fn bbox(&self) -> Result<BoundingBox, GeometryError> {
        let h = self.height as usize;
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for (start, end) in self.foreground_runs() {
            let (x0, x1) = (start / h, (end - 1) / h);
            // A run that wraps into the next column touches both the last and
            // the first row.
            let (y0, y1) = if x0 == x1 { (start % h, (end - 1) % h) } else { (0, h - 1) };
            bounds = Some(match bounds {
                None => (x0, y0, x1, y1),
                Some((a, b, c, d)) => (a.min(x0), b.min(y0), c.max(x1), d.max(y1)),
            });
        }
        let (x0, y0, x1, y1) = bounds.ok_or(GeometryError::EmptyMask)?;
        Ok(BoundingBox {
            x_min: x0 as f64,
            y_min: y0 as f64,
            x_max: (x1 + 1) as f64,
            y_max: (y1 + 1) as f64,
        })
    }

    /// Number of foreground pixels shared with `other`.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64, GeometryError> {
        self.check_dims(other)?;
        let a: Vec<_> = self.foreground_runs().collect();
        let b: Vec<_> = other.foreground_runs().collect();
        let (mut i, mut j, mut inter) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                inter += (hi - lo) as u64;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(inter)
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<(), GeometryError> {
        if self.width != other.width || self.height != other.height {
            return Err(GeometryError::MaskDims(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }
}

/// Mask IoU; two empty masks are defined to match perfectly.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// One person's masks over a clip, one per frame, all of the same size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    masks: Vec<BinaryMask>,
}

impl MaskSequence {
    pub fn new(masks: Vec<BinaryMask>) -> Result<Self, GeometryError> {
        if let Some(first) = masks.first() {
            for m in &masks[1..] {
                first.check_dims(m)?;
            }
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

pub fn bbox_from_mask(mask: &BinaryMask) -> Result<BoundingBox, GeometryError> {
    mask.bbox()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Point2,
    pub confidence: f64,
    pub valid: bool,
}

/// One person's whole-body pose in one frame. Always holds
/// [`NUM_KEYPOINTS`] slots; invalid slots never enter a metric sum.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    keypoints: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(keypoints: Vec<Keypoint>) -> Result<Self, GeometryError> {
        if keypoints.len() != NUM_KEYPOINTS {
            return Err(GeometryError::KeypointCount(keypoints.len()));
        }
        if keypoints.iter().any(|k| k.valid && !k.position.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self { keypoints })
    }

    /// Builds a set from `(x, y, confidence)` triples, marking slots valid when
    /// the confidence reaches `min_confidence`.
    pub fn from_triples(triples: &[[f64; 3]], min_confidence: f64) -> Result<Self, GeometryError> {
        if triples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Self::new(
            triples
                .iter()
                .map(|&[x, y, c]| Keypoint {
                    position: Point2::new(x, y),
                    confidence: c,
                    valid: c >= min_confidence,
                })
                .collect(),
        )
    }

    /// A set with no valid keypoints.
    pub fn invisible() -> Self {
        Self { keypoints: vec![Keypoint::default(); NUM_KEYPOINTS] }
    }

    /// Valid keypoints at the given slots, everything else invisible.
    pub fn from_points(points: &[(usize, Point2)]) -> Self {
        let mut set = Self::invisible();
        for &(j, p) in points {
            set.keypoints[j] = Keypoint { position: p, confidence: 1.0, valid: true };
        }
        set
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.keypoints
    }

    pub fn get(&self, j: usize) -> Option<Point2> {
        let k = &self.keypoints[j];
        k.valid.then_some(k.position)
    }

    pub fn valid_points(&self) -> impl Iterator<Item = (usize, Point2)> + '_ {
        self.keypoints.iter().enumerate().filter(|(_, k)| k.valid).map(|(j, k)| (j, k.position))
    }

    pub fn valid_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.valid).count()
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        let pts: Vec<Point2> = self.valid_points().map(|(_, p)| p).collect();
        BoundingBox::enclosing(&pts)
    }

    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Self {
        Self {
            keypoints: self
                .keypoints
                .iter()
                .map(|k| Keypoint { position: if k.valid { f(k.position) } else { k.position }, ..*k })
                .collect(),
        }
    }
}

/// `p -> scale * rotation * p + translation` with a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 2]; 2],
    pub translation: Point2,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: [[1.0, 0.0], [0.0, 1.0]], translation: Point2::new(0.0, 0.0) }
    }

    pub fn from_parts(scale: f64, angle: f64, translation: Point2) -> Self {
        let (s, c) = angle.sin_cos();
        Self { scale, rotation: [[c, -s], [s, c]], translation }
    }

    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let r = &self.rotation;
        Point2::new(
            self.scale * (r[0][0] * p.x + r[0][1] * p.y) + self.translation.x,
            self.scale * (r[1][0] * p.x + r[1][1] * p.y) + self.translation.y,
        )
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SimilarityTransform) -> Self {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 2]; 2];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { scale: self.scale * other.scale, rotation, translation: self.apply(other.translation) }
    }

    /// Sum of squared distances between transformed source and target.
    pub fn residual(&self, source: &[Point2], target: &[Point2]) -> f64 {
        source
            .iter()
            .zip(target)
            .map(|(s, t)| {
                let p = self.apply(*s);
                (p.x - t.x).powi(2) + (p.y - t.y).powi(2)
            })
            .sum()
    }
}

/// Least-squares similarity mapping `source` onto `target`.
///
/// This is orthogonal Procrustes with scale restricted to proper rotations.
/// In 2D the SVD of the cross-covariance reduces to the angle of the summed
/// dot/cross products of the centred point pairs, which is the
/// reflection-corrected optimum.
pub fn estimate_similarity(source: &[Point2], target: &[Point2]) -> Result<SimilarityTransform, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::LengthMismatch(source.len(), target.len()));
    }
    if source.len() < 2 {
        return Err(GeometryError::TooFewPoints(source.len()));
    }
    if source.iter().chain(target).any(|p| !p.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let n = source.len() as f64;
    let centroid = |pts: &[Point2]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point2::new(sx / n, sy / n)
    };
    let (ms, mt) = (centroid(source), centroid(target));

    let (mut dot, mut cross, mut var_s) = (0.0, 0.0, 0.0);
    for (s, t) in source.iter().zip(target) {
        let (ax, ay) = (s.x - ms.x, s.y - ms.y);
        let (bx, by) = (t.x - mt.x, t.y - mt.y);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        var_s += ax * ax + ay * ay;
    }
    let spread = source.iter().map(|p| p.distance(&ms)).fold(0.0, f64::max);
    if var_s <= 0.0 || spread <= 1e-12 * (1.0 + ms.x.abs().max(ms.y.abs())) {
        return Err(GeometryError::Degenerate("all source points coincide"));
    }
    let norm = dot.hypot(cross);
    if norm <= f64::EPSILON * var_s {
        return Err(GeometryError::Degenerate("target carries no alignable structure"));
    }
    let (c, s) = (dot / norm, cross / norm);
    let scale = norm / var_s;
    let rotation = [[c, -s], [s, c]];
    let rotated = Point2::new(c * ms.x - s * ms.y, s * ms.x + c * ms.y);
    let translation = Point2::new(mt.x - scale * rotated.x, mt.y - scale * rotated.y);
    Ok(SimilarityTransform { scale, rotation, translation })
}
