//! On-disk formats: JSON clip manifests and corpus lists, track, pose,
//! mask and detection files, frame directories, and the binary feature
//! containers written by the feature extractor.
//!
//! Every JSON document carries `"schema_version": 1`. Binary files are
//! little-endian:
//!
//! * feature set: `"TVBF"`, version byte `1`, `u32` N, `u32` dim, `u32` tag
//!   length, tag bytes (UTF-8), then `N * dim` `f32` values;
//! * layer maps: `"TVLF1"`, `u32` L, then per layer `u32` C, H, W, `C`
//!   `f32` channel weights and `C * H * W` `f32` values.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{ClipVerdict, CurationOutcome, Detection, SubjectScore};
use crate::geometry::{BinaryMask, BoundingBox, KeypointSet, MaskSequence, NUM_KEYPOINTS};
use crate::pose::PoseSequence;
use crate::quality::{FeatureLayer, FeatureSet, FrameSequence, LayerFeatureMaps};
use crate::tracking::{TrackSet, TrackedBox};

pub const SCHEMA_VERSION: u32 = 1;

const FEATURE_MAGIC: &[u8; 4] = b"TVBF";
const FEATURE_VERSION: u8 = 1;
const LAYER_MAGIC: &[u8; 5] = b"TVLF1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: schema error at `{field}`: {message}")]
    Schema { path: PathBuf, field: String, message: String },
    #[error("{path}: invalid `{field}`: {message}")]
    Invalid { path: PathBuf, field: String, message: String },
    #[error("{path}: malformed binary data: {message}")]
    Binary { path: PathBuf, message: String },
    #[error("{path}: cannot decode image: {message}")]
    Image { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> FormatError {
    FormatError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn invalid(path: &Path, field: impl Into<String>, message: impl std::fmt::Display) -> FormatError {
    FormatError::Invalid { path: path.to_path_buf(), field: field.into(), message: message.to_string() }
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, FormatError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| FormatError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    parse_json(path, &read_text(path)?)
}

fn check_version(path: &Path, version: u32) -> Result<(), FormatError> {
    if version != SCHEMA_VERSION {
        return Err(invalid(path, "schema_version", format!("unsupported version {version}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}

fn check_finite(path: &Path, field: &str, values: impl IntoIterator<Item = f64>) -> Result<(), FormatError> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(invalid(path, field, "non-finite number"));
    }
    Ok(())
}

/// Serialises `value` as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("in-memory JSON serialisation cannot fail");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, to_json_bytes(value)).map_err(|e| io_err(path, e))
}

/// Writes single-line JSON, for bulk data such as pose and track files.
pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut bytes = serde_json::to_vec(value).expect("in-memory JSON serialisation cannot fail");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// Feature files of one clip, per source network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_i3d: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_i3d: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_inception: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_inception: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_clip: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_clip: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_vgg: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_vgg: Option<PathBuf>,
}

impl FeaturePaths {
    fn fields_mut(&mut self) -> [(&'static str, &mut Option<PathBuf>); 8] {
        [
            ("gt_i3d", &mut self.gt_i3d),
            ("pred_i3d", &mut self.pred_i3d),
            ("gt_inception", &mut self.gt_inception),
            ("pred_inception", &mut self.pred_inception),
            ("gt_clip", &mut self.gt_clip),
            ("pred_clip", &mut self.pred_clip),
            ("gt_vgg", &mut self.gt_vgg),
            ("pred_vgg", &mut self.pred_vgg),
        ]
    }
}

/// Everything the evaluator needs to score one clip. Paths are relative to
/// the manifest's directory on disk and absolute after [`load_manifest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipManifest {
    pub schema_version: u32,
    pub clip_id: String,
    pub fps: f64,
    /// `[width, height]` of the video; needed for heatmaps when no frames
    /// are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_size: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_frames: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_poses: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_poses: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_tracks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_tracks: Option<PathBuf>,
    /// One directory of per-frame mask files per performer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<PathBuf>,
    #[serde(default)]
    pub features: FeaturePaths,
    /// Features extracted from background-zeroed frames, one set per
    /// performer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masked_features: Vec<FeaturePaths>,
}

impl ClipManifest {
    pub fn new(clip_id: impl Into<String>, fps: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            clip_id: clip_id.into(),
            fps,
            frame_size: None,
            gt_frames: None,
            pred_frames: None,
            gt_poses: None,
            pred_poses: None,
            gt_tracks: None,
            pred_tracks: None,
            masks: Vec::new(),
            features: FeaturePaths::default(),
            masked_features: Vec::new(),
        }
    }
}

fn resolve(path: &Path, base: &Path, field: &str, slot: &mut Option<PathBuf>) -> Result<(), FormatError> {
    if let Some(p) = slot.as_mut() {
        let full = base.join(&*p);
        if !full.exists() {
            return Err(invalid(path, field, format!("{} does not exist", full.display())));
        }
        *p = full;
    }
    Ok(())
}

fn absolute_dir(path: &Path) -> Result<PathBuf, FormatError> {
    let abs = std::path::absolute(path).map_err(|e| io_err(path, e))?;
    Ok(abs.parent().map(Path::to_path_buf).unwrap_or_default())
}

pub fn load_manifest(path: &Path) -> Result<ClipManifest, FormatError> {
    let mut m: ClipManifest = read_json(path)?;
    check_version(path, m.schema_version)?;
    if !(m.fps.is_finite() && m.fps > 0.0) {
        return Err(invalid(path, "fps", format!("must be positive, got {}", m.fps)));
    }
    if m.clip_id.is_empty() {
        return Err(invalid(path, "clip_id", "must not be empty"));
    }
    if let Some([w, h]) = m.frame_size {
        if w == 0 || h == 0 {
            return Err(invalid(path, "frame_size", "dimensions must be positive"));
        }
    }
    let base = absolute_dir(path)?;
    resolve(path, &base, "gt_frames", &mut m.gt_frames)?;
    resolve(path, &base, "pred_frames", &mut m.pred_frames)?;
    resolve(path, &base, "gt_poses", &mut m.gt_poses)?;
    resolve(path, &base, "pred_poses", &mut m.pred_poses)?;
    resolve(path, &base, "gt_tracks", &mut m.gt_tracks)?;
    resolve(path, &base, "pred_tracks", &mut m.pred_tracks)?;
    for (i, dir) in m.masks.iter_mut().enumerate() {
        let mut slot = Some(std::mem::take(dir));
        resolve(path, &base, &format!("masks[{i}]"), &mut slot)?;
        *dir = slot.unwrap_or_default();
    }
    for (name, slot) in m.features.fields_mut() {
        resolve(path, &base, &format!("features.{name}"), slot)?;
    }
    for (i, set) in m.masked_features.iter_mut().enumerate() {
        for (name, slot) in set.fields_mut() {
            resolve(path, &base, &format!("masked_features[{i}].{name}"), slot)?;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub schema_version: u32,
    pub clips: Vec<PathBuf>,
}

/// Manifest paths listed by a corpus file, resolved against its directory.
pub fn load_corpus(path: &Path) -> Result<Vec<PathBuf>, FormatError> {
    let c: CorpusFile = read_json(path)?;
    check_version(path, c.schema_version)?;
    let base = absolute_dir(path)?;
    Ok(c.clips.iter().map(|p| base.join(p)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFile {
    pub schema_version: u32,
    pub frames: Vec<TrackFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackFrame {
    pub t: usize,
    pub detections: Vec<TrackEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackEntry {
    pub id: u64,
    pub bbox: [f64; 4],
}

impl TrackFile {
    pub fn from_track_set(set: &TrackSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            frames: set
                .frames()
                .iter()
                .enumerate()
                .map(|(t, dets)| TrackFrame {
                    t,
                    detections: dets
                        .iter()
                        .map(|d| TrackEntry { id: d.id, bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max] })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn parse_box(path: &Path, field: &str, b: [f64; 4]) -> Result<BoundingBox, FormatError> {
    BoundingBox::new(b[0], b[1], b[2], b[3]).map_err(|e| invalid(path, field, e))
}

pub fn load_tracks(path: &Path) -> Result<TrackSet, FormatError> {
    let f: TrackFile = read_json(path)?;
    check_version(path, f.schema_version)?;
    let mut frames = Vec::with_capacity(f.frames.len());
    for (i, frame) in f.frames.iter().enumerate() {
        if frame.t != i {
            return Err(invalid(path, format!("frames[{i}].t"), format!("expected {i}, got {}", frame.t)));
        }
        let mut dets = Vec::with_capacity(frame.detections.len());
        for (k, d) in frame.detections.iter().enumerate() {
            dets.push(TrackedBox { id: d.id, bbox: parse_box(path, &format!("frames[{i}].detections[{k}].bbox"), d.bbox)? });
        }
        frames.push(dets);
    }
    TrackSet::new(frames).map_err(|e| invalid(path, "frames", e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub schema_version: u32,
    pub fps: f64,
    pub persons: Vec<PersonPoses>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonPoses {
    pub id: u64,
    pub frames: Vec<PoseFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFrame {
    pub t: usize,
    /// `[x, y, confidence]` for each of the 133 keypoints.
    pub keypoints: Vec<[f64; 3]>,
}

fn keypoint_triples(set: &KeypointSet) -> Vec<[f64; 3]> {
    set.keypoints().iter().map(|k| [k.position.x, k.position.y, if k.valid { k.confidence } else { 0.0 }]).collect()
}

impl PoseFile {
    /// Person `p` of `seq` gets id `ids[p]`.
    pub fn from_sequence(seq: &PoseSequence, ids: &[u64]) -> Self {
        let persons = (0..seq.persons())
            .map(|p| PersonPoses {
                id: ids[p],
                frames: seq
                    .frames()
                    .iter()
                    .enumerate()
                    .map(|(t, f)| PoseFrame { t, keypoints: keypoint_triples(&f[p]) })
                    .collect(),
            })
            .collect();
        Self { schema_version: SCHEMA_VERSION, fps: seq.fps(), persons }
    }

    /// Persons ordered by id; frames a person lacks are invisible.
    pub fn to_sequence(&self, path: &Path, min_confidence: f64) -> Result<(PoseSequence, Vec<u64>), FormatError> {
        check_version(path, self.schema_version)?;
        let mut persons: Vec<&PersonPoses> = self.persons.iter().collect();
        persons.sort_by_key(|p| p.id);
        if let Some(w) = persons.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(invalid(path, "persons", format!("duplicate person id {}", w[0].id)));
        }
        let frames = persons.iter().flat_map(|p| p.frames.iter().map(|f| f.t + 1)).max().unwrap_or(0);
        if frames == 0 || persons.is_empty() {
            return Err(invalid(path, "persons", "no pose frames"));
        }
        let mut grid = vec![vec![KeypointSet::invisible(); persons.len()]; frames];
        for (p, person) in persons.iter().enumerate() {
            for (k, f) in person.frames.iter().enumerate() {
                let field = format!("persons[id={}].frames[{k}]", person.id);
                if f.keypoints.len() != NUM_KEYPOINTS {
                    return Err(invalid(path, field, format!("{} keypoints, expected {NUM_KEYPOINTS}", f.keypoints.len())));
                }
                check_finite(path, &field, f.keypoints.iter().flatten().copied())?;
                grid[f.t][p] = KeypointSet::from_triples(&f.keypoints, min_confidence).map_err(|e| invalid(path, field, e))?;
            }
        }
        let seq = PoseSequence::new(self.fps, grid).map_err(|e| invalid(path, "fps", e))?;
        Ok((seq, persons.iter().map(|p| p.id).collect()))
    }
}

pub fn load_poses(path: &Path, min_confidence: f64) -> Result<(PoseSequence, Vec<u64>), FormatError> {
    let f: PoseFile = read_json(path)?;
    f.to_sequence(path, min_confidence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub schema_version: u32,
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl MaskFile {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self { schema_version: SCHEMA_VERSION, width: mask.width(), height: mask.height(), counts: mask.counts().to_vec() }
    }
}

pub fn load_mask(path: &Path) -> Result<BinaryMask, FormatError> {
    let f: MaskFile = read_json(path)?;
    check_version(path, f.schema_version)?;
    BinaryMask::from_counts(f.width, f.height, f.counts).map_err(|e| invalid(path, "counts", e))
}

/// Files in `dir` with one of `extensions`, ordered by the number in their
/// stem (then by name).
fn numbered_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>, FormatError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()).is_some_and(|e| extensions.iter().any(|x| e.eq_ignore_ascii_case(x)))
        })
        .collect();
    let key = |p: &PathBuf| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        (digits.parse::<u64>().unwrap_or(u64::MAX), stem.to_string())
    };
    files.sort_by_key(key);
    Ok(files)
}

/// One performer's masks: a directory with one mask file per frame.
pub fn load_mask_dir(dir: &Path) -> Result<MaskSequence, FormatError> {
    let masks = numbered_files(dir, &["json"])?.iter().map(|p| load_mask(p)).collect::<Result<Vec<_>, _>>()?;
    if masks.is_empty() {
        return Err(invalid(dir, "masks", "directory holds no mask files"));
    }
    MaskSequence::new(masks).map_err(|e| invalid(dir, "masks", e))
}

pub fn write_mask_dir(dir: &Path, masks: &MaskSequence) -> Result<(), FormatError> {
    for (t, m) in masks.masks().iter().enumerate() {
        write_json_compact(&dir.join(format!("{t:05}.json")), &MaskFile::from_mask(m))?;
    }
    Ok(())
}

/// Frames from a directory of numbered PNG or PPM images.
pub fn load_frames(dir: &Path) -> Result<FrameSequence, FormatError> {
    let files = numbered_files(dir, &["png", "ppm", "pnm"])?;
    if files.is_empty() {
        return Err(invalid(dir, "frames", "directory holds no PNG/PPM frames"));
    }
    let mut size = None;
    let mut frames = Vec::with_capacity(files.len());
    for f in &files {
        let img = image::open(f).map_err(|e| FormatError::Image { path: f.clone(), message: e.to_string() })?.to_rgb8();
        let dims = img.dimensions();
        if *size.get_or_insert(dims) != dims {
            return Err(invalid(f, "frames", format!("size {dims:?} differs from first frame {:?}", size.unwrap_or(dims))));
        }
        frames.push(img.into_raw());
    }
    let (w, h) = size.unwrap_or_default();
    FrameSequence::new(w as usize, h as usize, frames).map_err(|e| invalid(dir, "frames", e))
}

/// Width and height of the first frame in a frame directory, without
/// decoding the rest.
pub fn frame_dims(dir: &Path) -> Result<(u32, u32), FormatError> {
    let files = numbered_files(dir, &["png", "ppm", "pnm"])?;
    let first = files.first().ok_or_else(|| invalid(dir, "frames", "directory holds no PNG/PPM frames"))?;
    image::image_dimensions(first).map_err(|e| FormatError::Image { path: first.clone(), message: e.to_string() })
}

pub fn write_frames_png(dir: &Path, frames: &FrameSequence) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (t, f) in frames.frames().iter().enumerate() {
        let path = dir.join(format!("{t:05}.png"));
        image::save_buffer(&path, f, frames.width() as u32, frames.height() as u32, image::ColorType::Rgb8)
            .map_err(|e| FormatError::Image { path: path.clone(), message: e.to_string() })?;
    }
    Ok(())
}

/// One line of a detection dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub t: usize,
    pub detections: Vec<DetectionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    pub bbox: [f64; 4],
    pub confidence: f64,
    pub reid: Vec<f64>,
}

/// Per-frame detections from a JSON-lines dump; line `k` must describe
/// frame `k`. Blank lines are ignored.
pub fn load_detections(path: &Path) -> Result<Vec<Vec<Detection>>, FormatError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut frames = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DetectionLine = parse_json(path, &line).map_err(|e| match e {
            FormatError::Schema { path, field, message } => {
                FormatError::Schema { path, field: format!("line {}: {field}", n + 1), message }
            }
            other => other,
        })?;
        if let Some(v) = parsed.schema_version {
            check_version(path, v)?;
        }
        if parsed.t != frames.len() {
            return Err(invalid(path, format!("line {}: t", n + 1), format!("expected {}, got {}", frames.len(), parsed.t)));
        }
        let mut dets = Vec::with_capacity(parsed.detections.len());
        for (k, d) in parsed.detections.into_iter().enumerate() {
            let field = format!("line {}: detections[{k}]", n + 1);
            let bbox = parse_box(path, &field, d.bbox)?;
            dets.push(Detection::new(parsed.t, bbox, d.reid, d.confidence).map_err(|e| invalid(path, field, e))?);
        }
        frames.push(dets);
    }
    Ok(frames)
}

pub fn detections_to_jsonl(frames: &[Vec<Detection>]) -> Vec<u8> {
    let mut out = Vec::new();
    for (t, dets) in frames.iter().enumerate() {
        let line = DetectionLine {
            schema_version: None,
            t,
            detections: dets
                .iter()
                .map(|d| DetectionEntry {
                    bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
                    confidence: d.confidence,
                    reid: d.reid.clone(),
                })
                .collect(),
        };
        out.extend(serde_json::to_vec(&line).expect("in-memory JSON serialisation cannot fail"));
        out.push(b'\n');
    }
    out
}

/// Unassigned poses of a clip, as produced by a whole-body estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDump {
    pub schema_version: u32,
    pub fps: f64,
    pub frames: Vec<PoseDumpFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDumpFrame {
    pub t: usize,
    pub poses: Vec<Vec<[f64; 3]>>,
}

impl PoseDump {
    pub fn from_frames(fps: f64, frames: &[Vec<KeypointSet>]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            fps,
            frames: frames
                .iter()
                .enumerate()
                .map(|(t, f)| PoseDumpFrame { t, poses: f.iter().map(keypoint_triples).collect() })
                .collect(),
        }
    }
}

/// Frame rate and per-frame pose lists of a pose dump.
pub fn load_pose_dump(path: &Path, min_confidence: f64) -> Result<(f64, Vec<Vec<KeypointSet>>), FormatError> {
    let d: PoseDump = read_json(path)?;
    check_version(path, d.schema_version)?;
    if !(d.fps.is_finite() && d.fps > 0.0) {
        return Err(invalid(path, "fps", format!("must be positive, got {}", d.fps)));
    }
    let mut frames = Vec::with_capacity(d.frames.len());
    for (i, f) in d.frames.iter().enumerate() {
        if f.t != i {
            return Err(invalid(path, format!("frames[{i}].t"), format!("expected {i}, got {}", f.t)));
        }
        let mut sets = Vec::with_capacity(f.poses.len());
        for (k, pose) in f.poses.iter().enumerate() {
            let field = format!("frames[{i}].poses[{k}]");
            check_finite(path, &field, pose.iter().flatten().copied())?;
            sets.push(KeypointSet::from_triples(pose, min_confidence).map_err(|e| invalid(path, field, e))?);
        }
        frames.push(sets);
    }
    Ok((d.fps, frames))
}

/// One curated track: frame indices and boxes `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuratedTrack {
    pub id: u64,
    pub frames: Vec<usize>,
    pub boxes: Vec<[f64; 4]>,
}

/// Curation result of one clip: tracks, subject scores, verdict and, for
/// accepted clips, the subjects' poses in the pose-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationManifest {
    pub schema_version: u32,
    pub clip_id: String,
    pub total_frames: usize,
    pub tracks: Vec<CuratedTrack>,
    pub subjects: Vec<SubjectScore>,
    pub verdict: ClipVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject_masks: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<PoseFile>,
    pub dropped_poses: usize,
}

impl CurationManifest {
    pub fn from_outcome(clip_id: impl Into<String>, total_frames: usize, outcome: &CurationOutcome) -> Self {
        let tracks = outcome
            .tracks
            .iter()
            .map(|t| CuratedTrack {
                id: t.id,
                frames: t.members.iter().map(|m| m.frame).collect(),
                boxes: t.members.iter().map(|m| [m.bbox.x_min, m.bbox.y_min, m.bbox.x_max, m.bbox.y_max]).collect(),
            })
            .collect();
        let poses = match (&outcome.poses, outcome.verdict.selected) {
            (Some(seq), Some(ids)) => Some(PoseFile::from_sequence(seq, &ids)),
            _ => None,
        };
        Self {
            schema_version: SCHEMA_VERSION,
            clip_id: clip_id.into(),
            total_frames,
            tracks,
            subjects: outcome.scores.clone(),
            verdict: outcome.verdict.clone(),
            subject_masks: outcome.subject_masks,
            poses,
            dropped_poses: outcome.dropped_poses,
        }
    }
}

pub fn load_curation_manifest(path: &Path) -> Result<CurationManifest, FormatError> {
    let m: CurationManifest = read_json(path)?;
    check_version(path, m.schema_version)?;
    Ok(m)
}

struct Reader<'a> {
    path: &'a Path,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| FormatError::Binary {
            path: self.path.to_path_buf(),
            message: format!("truncated at byte {} (needed {n} more)", self.pos),
        })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.error(format!("{what} count overflows")))?)?;
        let out: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(self.error(format!("non-finite value in {what}")));
        }
        Ok(out)
    }

    fn error(&self, message: String) -> FormatError {
        FormatError::Binary { path: self.path.to_path_buf(), message }
    }

    fn finish(&self) -> Result<(), FormatError> {
        if self.pos != self.data.len() {
            return Err(self.error(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_features(path: &Path, data: &[u8]) -> Result<FeatureSet, FormatError> {
    let mut r = Reader { path, data, pos: 0 };
    if r.take(4)? != FEATURE_MAGIC {
        return Err(r.error("missing TVBF magic".into()));
    }
    let version = r.take(1)?[0];
    if version != FEATURE_VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let tag_len = r.u32()? as usize;
    let tag = std::str::from_utf8(r.take(tag_len)?).map_err(|e| r.error(format!("tag is not UTF-8: {e}")))?.to_string();
    let count = n.checked_mul(dim).ok_or_else(|| r.error("size overflows".into()))?;
    let values = r.f32s(count, "values")?;
    r.finish()?;
    if dim == 0 {
        return Err(r.error("dim must be positive".into()));
    }
    FeatureSet::new(tag, dim, values).map_err(|e| r.error(e.to_string()))
}

pub fn encode_features(set: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + set.tag().len() + 4 * set.values().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.push(FEATURE_VERSION);
    out.extend_from_slice(&(set.count() as u32).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(set.tag().len() as u32).to_le_bytes());
    out.extend_from_slice(set.tag().as_bytes());
    for v in set.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_features(path: &Path) -> Result<FeatureSet, FormatError> {
    decode_features(path, &fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn decode_layer_maps(path: &Path, data: &[u8]) -> Result<LayerFeatureMaps, FormatError> {
    let mut r = Reader { path, data, pos: 0 };
    if r.take(5)? != LAYER_MAGIC {
        return Err(r.error("missing TVLF1 magic".into()));
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(r.error("no layers".into()));
    }
    let mut layers = Vec::new();
    for l in 0..count {
        let (c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let weights = r.f32s(c, "weights")?;
        let size = c.checked_mul(h).and_then(|v| v.checked_mul(w)).ok_or_else(|| r.error("size overflows".into()))?;
        let values = r.f32s(size, "values")?;
        layers.push(FeatureLayer::new(c, h, w, weights, values).map_err(|e| r.error(format!("layer {l}: {e}")))?);
    }
    r.finish()?;
    Ok(LayerFeatureMaps { layers })
}

pub fn encode_layer_maps(maps: &LayerFeatureMaps) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(LAYER_MAGIC);
    out.extend_from_slice(&(maps.layers.len() as u32).to_le_bytes());
    for l in &maps.layers {
        for v in [l.channels, l.height, l.width] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in l.weights.iter().chain(&l.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_layer_maps(path: &Path) -> Result<LayerFeatureMaps, FormatError> {
    decode_layer_maps(path, &fs::read(path).map_err(|e| io_err(path, e))?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}
