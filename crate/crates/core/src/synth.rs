//! Deterministic synthetic fixtures: evaluation corpora with known answers
//! and a curation suite with one clip per acceptance rule.
//!
//! Every keypoint moves on a quadratic path `p0 + v τ + a τ² / 2` with
//! `τ = t / fps` and one acceleration `a` per person, so jerk is zero and
//! the RMS acceleration of a clip is `sqrt(mean_p |a_p|²)`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curation::{Detection, FilterRule, REID_DIM};
use crate::formats::{
    detections_to_jsonl, encode_features, encode_layer_maps, write_bytes, write_frames_png, write_json, write_json_compact, write_mask_dir,
    ClipManifest, CorpusFile, FeaturePaths, FormatError, PoseDump, PoseFile, TrackFile, SCHEMA_VERSION,
};
use crate::geometry::{BinaryMask, BoundingBox, KeypointSet, MaskSequence, Point2, NUM_KEYPOINTS};
use crate::pose::PoseSequence;
use crate::quality::{FeatureLayer, FeatureSet, FrameSequence, LayerFeatureMaps};
use crate::tracking::{TrackSet, TrackedBox};

/// Shape of a synthetic evaluation corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub clips: usize,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    /// Predictions identical to the ground truth.
    pub perfect: bool,
    /// Write RGB frames and feature files (track 3 inputs).
    pub video: bool,
    /// Write per-person masks.
    pub masks: bool,
}

impl CorpusSpec {
    /// Ten small clips with every input present.
    pub fn fixture() -> Self {
        Self { clips: 10, frames: 24, width: 96, height: 72, fps: 24.0, perfect: false, video: true, masks: true }
    }

    /// A hundred two-person clips of 300 frames with tracks and poses only.
    pub fn throughput() -> Self {
        Self { clips: 100, frames: 300, width: 320, height: 180, fps: 30.0, perfect: false, video: false, masks: false }
    }
}

/// Closed-form values for one generated clip, before report scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipTruth {
    pub clip_id: String,
    /// RMS acceleration of the prediction, px/s².
    pub time_dyn_rmse: f64,
    /// RMS jerk of the prediction, px/s³.
    pub smooth_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub schema_version: u32,
    pub seed: u64,
    pub clips: Vec<ClipTruth>,
}

/// In-memory content of one synthetic clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub gt_poses: PoseSequence,
    pub pred_poses: PoseSequence,
    pub gt_tracks: TrackSet,
    pub pred_tracks: TrackSet,
    pub masks: Vec<MaskSequence>,
    pub gt_frames: Option<FrameSequence>,
    pub pred_frames: Option<FrameSequence>,
    pub truth_accelerations: Vec<Point2>,
}

/// Seed of clip `index` in a corpus generated from `seed`.
pub fn clip_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

struct Person {
    offsets: Vec<Point2>,
    origin: Point2,
    velocity: Point2,
    acceleration: Point2,
}

impl Person {
    fn random(rng: &mut ChaCha8Rng, index: usize, persons: usize, w: f64, h: f64, duration: f64) -> Self {
        let (rx, ry) = (w * 0.07, h * 0.28);
        let offsets = (0..NUM_KEYPOINTS)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let r = rng.random_range(0.15..1.0);
                Point2::new(rx * r * angle.cos(), ry * r * angle.sin())
            })
            .collect();
        let slot = (index as f64 + 0.5) / persons as f64;
        let origin = Point2::new(w * (0.1 + 0.8 * slot) + rng.random_range(-2.0..2.0), h * 0.5 + rng.random_range(-2.0..2.0));
        let reach = w * 0.04;
        let velocity = Point2::new(rng.random_range(-reach..reach) / duration, rng.random_range(-reach..reach) / duration);
        let amax = 2.0 * reach / (duration * duration);
        let acceleration = Point2::new(rng.random_range(-amax..amax), rng.random_range(-amax..amax));
        Self { offsets, origin, velocity, acceleration }
    }

    fn centre(&self, tau: f64) -> Point2 {
        Point2::new(
            self.origin.x + self.velocity.x * tau + 0.5 * self.acceleration.x * tau * tau,
            self.origin.y + self.velocity.y * tau + 0.5 * self.acceleration.y * tau * tau,
        )
    }

    fn pose(&self, tau: f64, jitter: &[Point2]) -> KeypointSet {
        let c = self.centre(tau);
        let points: Vec<(usize, Point2)> = self
            .offsets
            .iter()
            .zip(jitter)
            .enumerate()
            .map(|(j, (o, d))| (j, Point2::new(c.x + o.x + d.x, c.y + o.y + d.y)))
            .collect();
        KeypointSet::from_points(&points)
    }
}

fn ellipse_mask(b: &BoundingBox, w: u32, h: u32) -> BinaryMask {
    let (cx, cy) = ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0);
    let (ax, ay) = (b.width() / 2.0, b.height() / 2.0);
    BinaryMask::from_fn(w, h, |x, y| {
        let dx = (f64::from(x) + 0.5 - cx) / ax;
        let dy = (f64::from(y) + 0.5 - cy) / ay;
        dx * dx + dy * dy <= 1.0
    })
}

const PERSON_COLOURS: [[u8; 3]; 3] = [[200, 60, 50], [40, 90, 210], [60, 180, 80]];

fn render(width: usize, height: usize, texture: &[u8], t: usize, masks: &[MaskSequence]) -> Vec<u8> {
    let regions: Vec<Vec<bool>> = masks.iter().map(|m| m.masks()[t].to_row_major()).collect();
    let mut out = vec![0u8; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let tex = texture[(y * width + (x + t) % width) % texture.len()];
            let mut rgb = [
                (x * 255 / width.max(1)) as u8 / 2 + tex / 4,
                (y * 255 / height.max(1)) as u8 / 2 + tex / 4,
                96 + tex / 3,
            ];
            for (p, region) in regions.iter().enumerate() {
                if region[i] {
                    let c = PERSON_COLOURS[p % PERSON_COLOURS.len()];
                    let stripe = if (x + y + t) % 6 < 3 { 30 } else { 0 };
                    rgb = [c[0].saturating_add(stripe), c[1].saturating_add(tex / 8), c[2].saturating_sub(stripe)];
                }
            }
            out[i * 3..i * 3 + 3].copy_from_slice(&rgb);
        }
    }
    out
}

fn poses_to_boxes(seq: &PoseSequence, ids: &[u64]) -> TrackSet {
    let frames = seq
        .frames()
        .iter()
        .map(|persons| {
            persons.iter().zip(ids).filter_map(|(k, &id)| k.bbox().map(|bbox| TrackedBox { id, bbox })).collect()
        })
        .collect();
    TrackSet::new(frames).expect("generated ids are distinct")
}

/// Generates one two-person clip.
pub fn synth_clip(spec: &CorpusSpec, seed: u64) -> SynthClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let duration = (spec.frames.max(2) - 1) as f64 / spec.fps;
    let persons: Vec<Person> = (0..2).map(|p| Person::random(&mut rng, p, 2, w, h, duration)).collect();
    let zero = vec![Point2::new(0.0, 0.0); NUM_KEYPOINTS];
    let gt_frames: Vec<Vec<KeypointSet>> = (0..spec.frames)
        .map(|t| persons.iter().map(|p| p.pose(t as f64 / spec.fps, &zero)).collect())
        .collect();
    let gt_poses = PoseSequence::new(spec.fps, gt_frames).expect("positive fps");

    let (pred_poses, truth_accelerations) = if spec.perfect {
        (gt_poses.clone(), persons.iter().map(|p| p.acceleration).collect())
    } else {
        let noise = Normal::new(0.0, 1.5).expect("valid sigma");
        let pred_persons: Vec<(Person, Vec<Point2>)> = persons
            .iter()
            .map(|p| {
                let jitter = (0..NUM_KEYPOINTS).map(|_| Point2::new(noise.sample(&mut rng), noise.sample(&mut rng))).collect();
                let scale = rng.random_range(0.5..1.5);
                let person = Person {
                    offsets: p.offsets.clone(),
                    origin: Point2::new(p.origin.x + rng.random_range(-3.0..3.0), p.origin.y + rng.random_range(-3.0..3.0)),
                    velocity: p.velocity,
                    acceleration: Point2::new(p.acceleration.x * scale, p.acceleration.y * scale),
                };
                (person, jitter)
            })
            .collect();
        let frames = (0..spec.frames)
            .map(|t| pred_persons.iter().map(|(p, j)| p.pose(t as f64 / spec.fps, j)).collect())
            .collect();
        (PoseSequence::new(spec.fps, frames).expect("positive fps"), pred_persons.iter().map(|(p, _)| p.acceleration).collect())
    };

    let gt_tracks = poses_to_boxes(&gt_poses, &[1, 2]);
    let pred_tracks = if spec.perfect { gt_tracks.clone() } else { poses_to_boxes(&pred_poses, &[7, 9]) };

    let masks: Vec<MaskSequence> = if spec.masks || spec.video {
        (0..2)
            .map(|p| {
                let seq = gt_poses
                    .frames()
                    .iter()
                    .map(|f| f[p].bbox().map_or_else(|| BinaryMask::empty(spec.width, spec.height), |b| ellipse_mask(&b, spec.width, spec.height)))
                    .collect();
                MaskSequence::new(seq).expect("masks share the frame size")
            })
            .collect()
    } else {
        Vec::new()
    };

    let (gt_video, pred_video) = if spec.video {
        let (wu, hu) = (spec.width as usize, spec.height as usize);
        let texture: Vec<u8> = (0..wu * hu).map(|_| rng.random_range(0..=255u8)).collect();
        let gt: Vec<Vec<u8>> = (0..spec.frames).map(|t| render(wu, hu, &texture, t, &masks)).collect();
        let pred = if spec.perfect {
            gt.clone()
        } else {
            gt.iter()
                .map(|f| f.iter().map(|&v| (i16::from(v) + rng.random_range(-12i16..=12)).clamp(0, 255) as u8).collect())
                .collect()
        };
        let seq = |frames| FrameSequence::new(wu, hu, frames).expect("rendered frames match the size");
        (Some(seq(gt)), Some(seq(pred)))
    } else {
        (None, None)
    };

    SynthClip { gt_poses, pred_poses, gt_tracks, pred_tracks, masks, gt_frames: gt_video, pred_frames: pred_video, truth_accelerations }
}

impl SynthClip {
    /// RMS acceleration of the prediction when every keypoint is valid.
    pub fn time_dyn_rmse(&self) -> f64 {
        let n = self.truth_accelerations.len() as f64;
        (self.truth_accelerations.iter().map(|a| a.x * a.x + a.y * a.y).sum::<f64>() / n).sqrt()
    }
}

fn random_features(rng: &mut ChaCha8Rng, tag: &str, count: usize, dim: usize, unit: bool) -> FeatureSet {
    let normal = Normal::new(0.0f32, 1.0).expect("valid sigma");
    let mut values: Vec<f32> = (0..count * dim).map(|_| normal.sample(rng)).collect();
    if unit {
        for row in values.chunks_mut(dim) {
            let n = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    FeatureSet::new(tag, dim, values).expect("consistent feature shape")
}

fn perturb(rng: &mut ChaCha8Rng, set: &FeatureSet, unit: bool) -> FeatureSet {
    let normal = Normal::new(0.0f32, 0.3).expect("valid sigma");
    let mut values: Vec<f32> = set.values().iter().map(|v| v + normal.sample(rng)).collect();
    if unit {
        for row in values.chunks_mut(set.dim()) {
            let n = row.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    FeatureSet::new(set.tag(), set.dim(), values).expect("consistent feature shape")
}

fn random_layers(rng: &mut ChaCha8Rng) -> LayerFeatureMaps {
    let layers = [(4usize, 6usize), (8, 3)]
        .iter()
        .map(|&(c, s)| {
            let weights = (0..c).map(|_| rng.random_range(0.1f32..1.0)).collect();
            let values = (0..c * s * s).map(|_| rng.random_range(0.0f32..2.0)).collect();
            FeatureLayer::new(c, s, s, weights, values).expect("consistent layer shape")
        })
        .collect();
    LayerFeatureMaps { layers }
}

fn perturb_layers(rng: &mut ChaCha8Rng, maps: &LayerFeatureMaps) -> LayerFeatureMaps {
    let layers = maps
        .layers
        .iter()
        .map(|l| {
            let values = l.values.iter().map(|v| (v + rng.random_range(-0.3f32..0.3)).max(0.0)).collect();
            FeatureLayer::new(l.channels, l.height, l.width, l.weights.clone(), values).expect("same shape")
        })
        .collect();
    LayerFeatureMaps { layers }
}

/// Writes gt and pred feature files for one bundle under `dir` and returns
/// their manifest-relative paths.
fn write_feature_bundle(dir: &Path, rel: &Path, rng: &mut ChaCha8Rng, frames: usize, perfect: bool) -> Result<FeaturePaths, FormatError> {
    let mut paths = FeaturePaths::default();
    let sets = [
        ("i3d", (frames / 16).max(4), 16, false),
        ("inception", frames, 32, false),
        ("clip", frames, 16, true),
    ];
    for (tag, count, dim, unit) in sets {
        let gt = random_features(rng, tag, count, dim, unit);
        let pred = if perfect { gt.clone() } else { perturb(rng, &gt, unit) };
        let (g, p) = (rel.join(format!("gt_{tag}.tvbf")), rel.join(format!("pred_{tag}.tvbf")));
        write_bytes(&dir.join(&g), &encode_features(&gt))?;
        write_bytes(&dir.join(&p), &encode_features(&pred))?;
        match tag {
            "i3d" => (paths.gt_i3d, paths.pred_i3d) = (Some(g), Some(p)),
            "inception" => (paths.gt_inception, paths.pred_inception) = (Some(g), Some(p)),
            _ => (paths.gt_clip, paths.pred_clip) = (Some(g), Some(p)),
        }
    }
    let gt = random_layers(rng);
    let pred = if perfect { gt.clone() } else { perturb_layers(rng, &gt) };
    let (g, p) = (rel.join("gt_vgg.tvlf"), rel.join("pred_vgg.tvlf"));
    write_bytes(&dir.join(&g), &encode_layer_maps(&gt))?;
    write_bytes(&dir.join(&p), &encode_layer_maps(&pred))?;
    (paths.gt_vgg, paths.pred_vgg) = (Some(g), Some(p));
    Ok(paths)
}

/// Writes one clip directory with its manifest; returns the manifest path.
pub fn write_clip(dir: &Path, clip_id: &str, spec: &CorpusSpec, seed: u64) -> Result<(PathBuf, SynthClip), FormatError> {
    let clip = synth_clip(spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFEA7_0000);
    let mut m = ClipManifest::new(clip_id, spec.fps);
    m.frame_size = Some([spec.width, spec.height]);
    let rel = |s: &str| PathBuf::from(s);
    write_json_compact(&dir.join("gt_tracks.json"), &TrackFile::from_track_set(&clip.gt_tracks))?;
    write_json_compact(&dir.join("pred_tracks.json"), &TrackFile::from_track_set(&clip.pred_tracks))?;
    write_json_compact(&dir.join("gt_poses.json"), &PoseFile::from_sequence(&clip.gt_poses, &[1, 2]))?;
    write_json_compact(&dir.join("pred_poses.json"), &PoseFile::from_sequence(&clip.pred_poses, &[1, 2]))?;
    m.gt_tracks = Some(rel("gt_tracks.json"));
    m.pred_tracks = Some(rel("pred_tracks.json"));
    m.gt_poses = Some(rel("gt_poses.json"));
    m.pred_poses = Some(rel("pred_poses.json"));
    for (p, seq) in clip.masks.iter().enumerate() {
        let name = format!("masks/person_{p}");
        write_mask_dir(&dir.join(&name), seq)?;
        m.masks.push(rel(&name));
    }
    if let (Some(gt), Some(pred)) = (&clip.gt_frames, &clip.pred_frames) {
        write_frames_png(&dir.join("gt_frames"), gt)?;
        write_frames_png(&dir.join("pred_frames"), pred)?;
        m.gt_frames = Some(rel("gt_frames"));
        m.pred_frames = Some(rel("pred_frames"));
        m.features = write_feature_bundle(dir, Path::new("features"), &mut rng, spec.frames, spec.perfect)?;
        for p in 0..clip.masks.len() {
            let sub = PathBuf::from(format!("features/masked_{p}"));
            m.masked_features.push(write_feature_bundle(dir, &sub, &mut rng, spec.frames, spec.perfect)?);
        }
    }
    let path = dir.join("manifest.json");
    write_json(&path, &m)?;
    Ok((path, clip))
}

/// Writes `spec.clips` clips plus `corpus.json` and `truth.json` under
/// `dir`; returns the corpus path and the closed-form values.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, seed: u64) -> Result<(PathBuf, CorpusTruth), FormatError> {
    let mut clips = Vec::new();
    let mut truth = Vec::new();
    for i in 0..spec.clips {
        let id = format!("clip_{i:03}");
        let (_, clip) = write_clip(&dir.join(&id), &id, spec, clip_seed(seed, i))?;
        clips.push(PathBuf::from(format!("{id}/manifest.json")));
        truth.push(ClipTruth { clip_id: id, time_dyn_rmse: clip.time_dyn_rmse(), smooth_rms: 0.0 });
    }
    let corpus = dir.join("corpus.json");
    write_json(&corpus, &CorpusFile { schema_version: SCHEMA_VERSION, clips })?;
    let truth = CorpusTruth { schema_version: SCHEMA_VERSION, seed, clips: truth };
    write_json(&dir.join("truth.json"), &truth)?;
    Ok((corpus, truth))
}

/// One subject of a curation scene: a box that may drift and may be
/// present in only part of the clip.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Subject {
    start: BoundingBox,
    /// Displacement of the box over the whole clip.
    drift: (f64, f64),
    /// Frames `[0, present)` contain the subject.
    present: usize,
}

/// A curation-suite clip and the verdict the rules must give it.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationCase {
    pub name: &'static str,
    pub accept: bool,
    /// Rules expected among the rejection reasons.
    pub rules: Vec<FilterRule>,
    subjects: Vec<Subject>,
}

pub const CURATION_FRAMES: usize = 60;
pub const CURATION_SIZE: (u32, u32) = (320, 240);
pub const CURATION_FPS: f64 = 30.0;

fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, x + w, y + h).expect("valid fixture box")
}

fn still(b: BoundingBox) -> Subject {
    Subject { start: b, drift: (0.0, 0.0), present: CURATION_FRAMES }
}

fn partial(b: BoundingBox, present: usize) -> Subject {
    Subject { present, ..still(b) }
}

/// Twelve scenes that exercise each acceptance rule on its own, at the
/// default thresholds (IoU 0.1, area 2%..80%, coverage 40%, tracking 90%).
pub fn curation_suite() -> Vec<CurationCase> {
    use FilterRule::*;
    let a = bx(40.0, 60.0, 60.0, 120.0);
    let b = bx(200.0, 60.0, 60.0, 120.0);
    let case = |name, accept, rules: Vec<FilterRule>, subjects| CurationCase { name, accept, rules, subjects };
    vec![
        case("two_subjects", true, vec![], vec![still(a), still(b)]),
        case("brief_distractor", true, vec![], vec![still(a), still(b), partial(bx(130.0, 20.0, 40.0, 80.0), 15)]),
        case("single_subject", false, vec![ExactTwoSubjects], vec![still(a)]),
        case("three_subjects", false, vec![ExactTwoSubjects], vec![still(bx(10.0, 60.0, 60.0, 120.0)), still(bx(130.0, 60.0, 60.0, 120.0)), still(bx(250.0, 60.0, 60.0, 120.0))]),
        case("sparse_second_subject", false, vec![ExactTwoSubjects], vec![still(a), partial(b, 18)]),
        case(
            "crossing_subjects",
            false,
            vec![BboxOverlap],
            vec![still(a), Subject { start: bx(160.0, 60.0, 60.0, 120.0), drift: (-90.0, 0.0), present: CURATION_FRAMES }],
        ),
        // Boxes 60 wide sharing a 6 px strip: IoU = 720 / 13680 ≈ 0.053.
        case("touching_subjects", true, vec![], vec![still(a), still(bx(94.0, 60.0, 60.0, 120.0))]),
        // 20 x 60 = 1200 px, 1.6% of the frame.
        case("tiny_subject", false, vec![BboxArea], vec![still(a), still(bx(220.0, 100.0, 20.0, 60.0))]),
        // 260 x 240 = 62400 px, 81.25% of the frame.
        case("huge_subject", false, vec![BboxArea], vec![still(bx(0.0, 0.0, 260.0, 240.0)), still(bx(275.0, 70.0, 40.0, 100.0))]),
        case("tracking_85", false, vec![TrackingSuccess], vec![still(a), partial(b, 51)]),
        case("tracking_90", false, vec![TrackingSuccess], vec![still(a), partial(b, 54)]),
        case("tracking_95", true, vec![], vec![still(a), partial(b, 57)]),
    ]
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid sigma");
    let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Raw inputs of a curation clip: detections, unassigned poses and one
/// mask sequence per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationInputs {
    pub detections: Vec<Vec<Detection>>,
    pub poses: Vec<Vec<KeypointSet>>,
    pub masks: Vec<MaskSequence>,
}

impl CurationCase {
    fn box_at(s: &Subject, t: usize) -> BoundingBox {
        let f = t as f64 / (CURATION_FRAMES - 1) as f64;
        let (dx, dy) = (s.drift.0 * f, s.drift.1 * f);
        BoundingBox::new(s.start.x_min + dx, s.start.y_min + dy, s.start.x_max + dx, s.start.y_max + dy).expect("shifted box")
    }

    pub fn inputs(&self, seed: u64) -> CurationInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = CURATION_SIZE;
        let identities: Vec<Vec<f64>> = self.subjects.iter().map(|_| unit_vector(&mut rng, REID_DIM)).collect();
        let layouts: Vec<Vec<(f64, f64)>> = self
            .subjects
            .iter()
            .map(|_| (0..NUM_KEYPOINTS).map(|_| (rng.random_range(0.1..0.9), rng.random_range(0.05..0.95))).collect())
            .collect();
        let mut detections = Vec::with_capacity(CURATION_FRAMES);
        let mut poses = Vec::with_capacity(CURATION_FRAMES);
        let mut masks = vec![Vec::with_capacity(CURATION_FRAMES); self.subjects.len()];
        for t in 0..CURATION_FRAMES {
            let mut frame_dets = Vec::new();
            let mut frame_poses = Vec::new();
            for (s, subject) in self.subjects.iter().enumerate() {
                if t >= subject.present {
                    masks[s].push(BinaryMask::empty(w, h));
                    continue;
                }
                let b = Self::box_at(subject, t);
                let noise = unit_vector(&mut rng, REID_DIM);
                let reid: Vec<f64> = identities[s].iter().zip(&noise).map(|(a, n)| a + 0.1 * n).collect();
                frame_dets.push(Detection::new(t, b, reid, 0.9).expect("valid fixture detection"));
                let points: Vec<(usize, Point2)> = layouts[s]
                    .iter()
                    .enumerate()
                    .map(|(j, &(u, v))| (j, Point2::new(b.x_min + u * b.width(), b.y_min + v * b.height())))
                    .collect();
                frame_poses.push(KeypointSet::from_points(&points));
                masks[s].push(BinaryMask::from_fn(w, h, |x, y| {
                    let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                    px >= b.x_min && px < b.x_max && py >= b.y_min && py < b.y_max
                }));
            }
            detections.push(frame_dets);
            poses.push(frame_poses);
        }
        let masks = masks.into_iter().map(|m| MaskSequence::new(m).expect("masks share the frame size")).collect();
        CurationInputs { detections, poses, masks }
    }
}

/// Writes the suite as `detections/<name>.jsonl`, `poses/<name>.json` and
/// `masks/<name>/subject_<k>/`.
pub fn write_curation_suite(dir: &Path, seed: u64) -> Result<Vec<CurationCase>, FormatError> {
    let cases = curation_suite();
    for (i, case) in cases.iter().enumerate() {
        let inputs = case.inputs(clip_seed(seed, i));
        write_bytes(&dir.join("detections").join(format!("{}.jsonl", case.name)), &detections_to_jsonl(&inputs.detections))?;
        write_json_compact(&dir.join("poses").join(format!("{}.json", case.name)), &PoseDump::from_frames(CURATION_FPS, &inputs.poses))?;
        for (k, seq) in inputs.masks.iter().enumerate() {
            write_mask_dir(&dir.join("masks").join(case.name).join(format!("subject_{k}")), seq)?;
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::{curate_clip, AssociationParams, FilterThresholds};
    use crate::pose::{smooth_rms, time_dyn_rmse};

    #[test]
    fn clips_are_deterministic() {
        let spec = CorpusSpec { clips: 1, frames: 12, ..CorpusSpec::fixture() };
        assert_eq!(synth_clip(&spec, 5), synth_clip(&spec, 5));
        assert_ne!(synth_clip(&spec, 5).gt_poses, synth_clip(&spec, 6).gt_poses);
    }

    #[test]
    fn trajectories_have_closed_form_derivatives() {
        let spec = CorpusSpec { frames: 40, ..CorpusSpec::throughput() };
        for seed in 0..5 {
            let clip = synth_clip(&spec, seed);
            let rms = time_dyn_rmse(&clip.pred_poses, &clip.gt_poses).unwrap();
            assert!((rms - clip.time_dyn_rmse()).abs() <= 1e-6 * clip.time_dyn_rmse().max(1.0), "{rms} vs {}", clip.time_dyn_rmse());
            assert!(smooth_rms(&clip.pred_poses).unwrap() < 1e-3);
        }
    }

    #[test]
    fn keypoints_stay_in_frame() {
        let spec = CorpusSpec::throughput();
        let clip = synth_clip(&spec, 11);
        for frame in clip.gt_poses.frames().iter().chain(clip.pred_poses.frames()) {
            for person in frame {
                let b = person.bbox().unwrap();
                assert!(b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= 320.0 && b.y_max <= 180.0, "{b:?}");
            }
        }
    }

    #[test]
    fn curation_suite_verdicts() {
        let cases = curation_suite();
        assert_eq!(cases.len(), 12);
        for (i, case) in cases.iter().enumerate() {
            let inputs = case.inputs(i as u64);
            let out = curate_clip(
                &inputs.detections,
                &inputs.poses,
                &inputs.masks,
                CURATION_FPS,
                CURATION_SIZE,
                &AssociationParams::default(),
                &FilterThresholds::default(),
            )
            .unwrap();
            assert_eq!(out.verdict.accepted, case.accept, "{}: {:?}", case.name, out.verdict.reasons);
            let rules: Vec<FilterRule> = out.verdict.reasons.iter().map(|r| r.rule).collect();
            for rule in &case.rules {
                assert!(rules.contains(rule), "{}: {rules:?}", case.name);
            }
            assert!(rules.iter().all(|r| case.rules.contains(r)), "{}: extra {rules:?}", case.name);
            if case.accept {
                let poses = out.poses.unwrap();
                assert_eq!(poses.persons(), 2);
                assert_eq!(out.dropped_poses, 0, "{}", case.name);
                let [a, b] = out.verdict.selected.unwrap();
                for (t, frame) in poses.frames().iter().enumerate() {
                    for (k, id) in [a, b].into_iter().enumerate() {
                        let track = out.tracks.iter().find(|tr| tr.id == id).unwrap();
                        let pose_box = frame[k].bbox();
                        assert_eq!(pose_box.is_some(), track.box_at(t).is_some(), "{} frame {t}", case.name);
                        if let (Some(p), Some(tb)) = (pose_box, track.box_at(t)) {
                            assert!(crate::geometry::box_iou(&p, &tb) > 0.5, "{} frame {t}", case.name);
                        }
                    }
                }
            }
        }
    }
}
