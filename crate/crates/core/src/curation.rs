//! Data-curation core: association of per-frame person detections into
//! tracks, primary-subject scoring and selection, pose-to-identity
//! assignment through masks, and the clip acceptance rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, threshold_match, CostMatrix};
use crate::geometry::{box_iou, BoundingBox, KeypointSet, MaskSequence};
use crate::pose::{PoseError, PoseSequence};

/// Length of a re-identification embedding.
pub const REID_DIM: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurationError {
    #[error("re-identification vector has {0} entries, expected {REID_DIM}")]
    ReidDim(usize),
    #[error("non-finite value in detection")]
    NonFinite,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("track {0} has no members")]
    EmptyTrack(u64),
    #[error("clip has no frames")]
    NoFrames,
    #[error("{eligible} tracks reach the coverage threshold, need at least 2")]
    Selection { eligible: usize },
    #[error("masks cover {masks} frames, poses {poses}")]
    FrameMismatch { masks: usize, poses: usize },
    #[error("detections cover {detections} frames, poses {poses}")]
    DetectionFrames { detections: usize, poses: usize },
    #[error("{0} person masks given, the two subjects need at least 2")]
    MaskCount(usize),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub reid: Vec<f64>,
    pub confidence: f64,
}

impl Detection {
    pub fn new(frame: usize, bbox: BoundingBox, reid: Vec<f64>, confidence: f64) -> Result<Self, CurationError> {
        if reid.len() != REID_DIM {
            return Err(CurationError::ReidDim(reid.len()));
        }
        if reid.iter().any(|v| !v.is_finite()) || !confidence.is_finite() {
            return Err(CurationError::NonFinite);
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(CurationError::Confidence(confidence));
        }
        Ok(Self { frame, bbox, reid, confidence })
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / n).collect()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationParams {
    pub spatial_weight: f64,
    pub reid_weight: f64,
    pub max_cost: f64,
    pub max_gap: usize,
}

impl Default for AssociationParams {
    fn default() -> Self {
        Self { spatial_weight: 0.4, reid_weight: 0.6, max_cost: 0.7, max_gap: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub members: Vec<Detection>,
    /// Unit-norm mean of the members' unit-normalised embeddings.
    pub centroid: Vec<f64>,
    embedding_sum: Vec<f64>,
}

impl Track {
    fn start(id: u64, det: Detection) -> Self {
        let embedding_sum = unit(&det.reid);
        Self { id, centroid: unit(&embedding_sum), embedding_sum, members: vec![det] }
    }

    fn push(&mut self, det: Detection) {
        for (s, v) in self.embedding_sum.iter_mut().zip(unit(&det.reid)) {
            *s += v;
        }
        self.centroid = unit(&self.embedding_sum);
        self.members.push(det);
    }

    fn last(&self) -> &Detection {
        self.members.last().expect("tracks are created with one member")
    }

    /// Box of this track in frame `t`, if present.
    pub fn box_at(&self, t: usize) -> Option<BoundingBox> {
        self.members.binary_search_by_key(&t, |d| d.frame).ok().map(|i| self.members[i].bbox)
    }
}

/// Cost of extending `track` with `det`.
pub fn association_cost(track: &Track, det: &Detection, params: &AssociationParams) -> f64 {
    params.spatial_weight * (1.0 - box_iou(&track.last().bbox, &det.bbox))
        + params.reid_weight * (1.0 - cosine(&det.reid, &track.centroid))
}

/// Links detections frame by frame. Each frame's detections are matched to
/// the open tracks by gated optimal assignment on [`association_cost`];
/// leftovers open new tracks, and a track closes once it has gone unmatched
/// for more than `max_gap` frames. `frames[t]` holds the detections of
/// frame `t`; their `frame` field is overwritten with `t`.
pub fn associate(frames: &[Vec<Detection>], params: &AssociationParams) -> Vec<Track> {
    let mut tracks: Vec<Track> = Vec::new();
    for (t, dets) in frames.iter().enumerate() {
        let open: Vec<usize> = (0..tracks.len()).filter(|&i| t - tracks[i].last().frame - 1 <= params.max_gap).collect();
        let cost = CostMatrix::from_fn(open.len(), dets.len(), |i, j| association_cost(&tracks[open[i]], &dets[j], params));
        let matching = threshold_match(&cost, params.max_cost);
        let mut taken = vec![false; dets.len()];
        for &(i, j) in &matching.pairs {
            tracks[open[i]].push(Detection { frame: t, ..dets[j].clone() });
            taken[j] = true;
        }
        for (j, det) in dets.iter().enumerate() {
            if !taken[j] {
                let id = tracks.len() as u64;
                tracks.push(Track::start(id, Detection { frame: t, ..det.clone() }));
            }
        }
    }
    tracks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub track_id: u64,
    pub coverage: f64,
    pub consistency: f64,
    pub quality: f64,
}

/// `Q = 0.7 coverage + 0.3 consistency`.
pub fn quality_score(coverage: f64, consistency: f64) -> f64 {
    0.7 * coverage + 0.3 * consistency
}

/// Coverage is the share of the clip's frames in which the track appears;
/// consistency is the mean member-to-centroid cosine mapped to `[0, 1]`.
pub fn score_subjects(tracks: &[Track], total_frames: usize) -> Result<Vec<SubjectScore>, CurationError> {
    if total_frames == 0 {
        return Err(CurationError::NoFrames);
    }
    tracks
        .iter()
        .map(|track| {
            if track.members.is_empty() {
                return Err(CurationError::EmptyTrack(track.id));
            }
            let coverage = track.members.len() as f64 / total_frames as f64;
            let mean_cos = track.members.iter().map(|m| cosine(&m.reid, &track.centroid)).sum::<f64>() / track.members.len() as f64;
            let consistency = (mean_cos + 1.0) / 2.0;
            Ok(SubjectScore { track_id: track.id, coverage, consistency, quality: quality_score(coverage, consistency) })
        })
        .collect()
}

/// Scores ordered best first: higher `Q`, then higher coverage, then lower id.
fn ranked(scores: &[SubjectScore], min_coverage: f64) -> Vec<SubjectScore> {
    let mut eligible: Vec<SubjectScore> = scores.iter().copied().filter(|s| s.coverage >= min_coverage).collect();
    eligible.sort_by(|a, b| {
        b.quality.total_cmp(&a.quality).then(b.coverage.total_cmp(&a.coverage)).then(a.track_id.cmp(&b.track_id))
    });
    eligible
}

/// The two best tracks among those covering at least `min_coverage` of the
/// clip.
pub fn select_primary(scores: &[SubjectScore], min_coverage: f64) -> Result<[u64; 2], CurationError> {
    match ranked(scores, min_coverage).as_slice() {
        [a, b, ..] => Ok([a.track_id, b.track_id]),
        other => Err(CurationError::Selection { eligible: other.len() }),
    }
}

/// Pixel box around a pose's valid keypoints, each keypoint covering the
/// pixel it falls in.
pub fn pose_box(pose: &KeypointSet) -> Option<BoundingBox> {
    let b = pose.bbox()?;
    BoundingBox::new(b.x_min.floor(), b.y_min.floor(), b.x_max.floor() + 1.0, b.y_max.floor() + 1.0).ok()
}

/// Poses routed to identities: `per_person[p][t]` is the pose given to
/// person `p` in frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseAssignment {
    pub per_person: Vec<Vec<Option<KeypointSet>>>,
    /// `(frame, pose index)` of poses that reached no person.
    pub dropped: Vec<(usize, usize)>,
}

impl PoseAssignment {
    /// One pose sequence per person; frames without a pose are invisible.
    pub fn into_sequences(self, fps: f64) -> Result<Vec<PoseSequence>, CurationError> {
        let frames = self.per_person.first().map_or(0, Vec::len);
        let mut out = Vec::new();
        for person in self.per_person {
            let seq = person.into_iter().map(|k| vec![k.unwrap_or_else(KeypointSet::invisible)]).collect();
            out.push(PoseSequence::new(fps, seq)?);
        }
        if out.is_empty() || frames == 0 {
            return Err(CurationError::NoFrames);
        }
        Ok(out)
    }
}

/// Matches each frame's poses to the persons' mask boxes by optimal
/// assignment on `1 − IoU`. Poses left unmatched or matched with zero
/// overlap are dropped.
pub fn assign_poses(poses: &[Vec<KeypointSet>], masks: &[MaskSequence]) -> Result<PoseAssignment, CurationError> {
    if let Some(m) = masks.iter().find(|m| m.len() != poses.len()) {
        return Err(CurationError::FrameMismatch { masks: m.len(), poses: poses.len() });
    }
    let mut per_person = vec![vec![None; poses.len()]; masks.len()];
    let mut dropped = Vec::new();
    for (t, frame) in poses.iter().enumerate() {
        let pose_boxes: Vec<Option<BoundingBox>> = frame.iter().map(pose_box).collect();
        let mask_boxes: Vec<Option<BoundingBox>> = masks.iter().map(|m| m.masks()[t].bbox().ok()).collect();
        let iou = |i: usize, p: usize| match (pose_boxes[i], mask_boxes[p]) {
            (Some(a), Some(b)) => box_iou(&a, &b),
            _ => 0.0,
        };
        let cost = CostMatrix::from_fn(frame.len(), masks.len(), |i, p| 1.0 - iou(i, p));
        let mut assigned = vec![false; frame.len()];
        for (i, p) in solve_assignment(&cost).pairs {
            if iou(i, p) > 0.0 {
                per_person[p][t] = Some(frame[i].clone());
                assigned[i] = true;
            }
        }
        dropped.extend(assigned.iter().enumerate().filter(|(_, a)| !**a).map(|(i, _)| (t, i)));
    }
    Ok(PoseAssignment { per_person, dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterThresholds {
    /// Clip-wide pairwise IoU must stay below this.
    pub max_overlap_iou: f64,
    /// Each subject box must cover more than this share of the frame...
    pub min_area_ratio: f64,
    /// ...and less than this share.
    pub max_area_ratio: f64,
    pub min_coverage: f64,
    /// Share of frames in which each subject is tracked must exceed this.
    pub min_tracking: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self { max_overlap_iou: 0.1, min_area_ratio: 0.02, max_area_ratio: 0.80, min_coverage: 0.40, min_tracking: 0.90 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    ExactTwoSubjects,
    BboxOverlap,
    BboxArea,
    TrackingSuccess,
}

impl FilterRule {
    pub fn id(&self) -> &'static str {
        match self {
            FilterRule::ExactTwoSubjects => "exact_two_subjects",
            FilterRule::BboxOverlap => "bbox_overlap",
            FilterRule::BboxArea => "bbox_area",
            FilterRule::TrackingSuccess => "tracking_success",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: FilterRule,
    pub measured: f64,
    pub threshold: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipVerdict {
    pub accepted: bool,
    pub reasons: Vec<Violation>,
    pub selected: Option<[u64; 2]>,
    /// IoU of the two selected subjects in every frame where both appear.
    pub frame_overlaps: Vec<Option<f64>>,
}

fn violation(rule: FilterRule, measured: f64, threshold: f64, message: String) -> Violation {
    Violation { rule, measured, threshold, message }
}

/// Applies the four acceptance rules and lists every violated one:
/// exactly two subjects reach the coverage threshold; the subjects' boxes
/// never overlap at or above the IoU limit; every subject box stays strictly
/// inside the area band; each subject is tracked in more than the required
/// share of frames.
pub fn filter_clip(
    tracks: &[Track],
    scores: &[SubjectScore],
    frame_dims: (u32, u32),
    total_frames: usize,
    thresholds: &FilterThresholds,
) -> ClipVerdict {
    let mut reasons = Vec::new();
    let eligible = ranked(scores, thresholds.min_coverage);
    if eligible.len() != 2 {
        reasons.push(violation(
            FilterRule::ExactTwoSubjects,
            eligible.len() as f64,
            2.0,
            format!("exact 2 primary subjects required, found {} with coverage ≥ {}", eligible.len(), thresholds.min_coverage),
        ));
    }
    let selected = (eligible.len() >= 2).then(|| [eligible[0].track_id, eligible[1].track_id]);
    let mut frame_overlaps = vec![None; total_frames];
    if let Some(ids) = selected {
        let subject = |id: u64| tracks.iter().find(|t| t.id == id).expect("scores refer to known tracks");
        let (a, b) = (subject(ids[0]), subject(ids[1]));
        for (t, slot) in frame_overlaps.iter_mut().enumerate() {
            if let (Some(x), Some(y)) = (a.box_at(t), b.box_at(t)) {
                *slot = Some(box_iou(&x, &y));
            }
        }
        let max_overlap = frame_overlaps.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
        if max_overlap >= thresholds.max_overlap_iou {
            reasons.push(violation(
                FilterRule::BboxOverlap,
                max_overlap,
                thresholds.max_overlap_iou,
                format!("overlap {max_overlap:.4} ≥ {}", thresholds.max_overlap_iou),
            ));
        }
        let frame_area = f64::from(frame_dims.0) * f64::from(frame_dims.1);
        for track in [a, b] {
            let ratios = track.members.iter().map(|m| m.bbox.area() / frame_area);
            let (lo, hi) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r), h.max(r)));
            if lo <= thresholds.min_area_ratio {
                reasons.push(violation(
                    FilterRule::BboxArea,
                    lo,
                    thresholds.min_area_ratio,
                    format!("track {} box area {:.4} of frame ≤ {}", track.id, lo, thresholds.min_area_ratio),
                ));
            }
            if hi >= thresholds.max_area_ratio {
                reasons.push(violation(
                    FilterRule::BboxArea,
                    hi,
                    thresholds.max_area_ratio,
                    format!("track {} box area {:.4} of frame ≥ {}", track.id, hi, thresholds.max_area_ratio),
                ));
            }
            let tracked = track.members.len() as f64 / total_frames.max(1) as f64;
            if tracked <= thresholds.min_tracking {
                reasons.push(violation(
                    FilterRule::TrackingSuccess,
                    tracked,
                    thresholds.min_tracking,
                    format!("track {} tracked in {:.4} of frames, need > {}", track.id, tracked, thresholds.min_tracking),
                ));
            }
        }
    }
    ClipVerdict { accepted: reasons.is_empty(), reasons, selected, frame_overlaps }
}

/// Result of running the full curation chain on one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationOutcome {
    pub tracks: Vec<Track>,
    pub scores: Vec<SubjectScore>,
    pub verdict: ClipVerdict,
    /// For accepted clips, the poses of the two selected subjects in the
    /// order of `verdict.selected`.
    pub poses: Option<PoseSequence>,
    /// Index of the mask sequence linked to each selected subject.
    pub subject_masks: Option<[usize; 2]>,
    /// Poses that matched no person mask.
    pub dropped_poses: usize,
}

/// Mean IoU between a track's boxes and a mask sequence's boxes over the
/// frames where both exist.
fn track_mask_overlap(track: &Track, masks: &MaskSequence) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for m in &track.members {
        if let Ok(b) = masks.masks()[m.frame].bbox() {
            sum += box_iou(&m.bbox, &b);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Associates detections into tracks, selects and filters the subjects
/// and, for accepted clips, routes the poses to the two subjects through
/// the person masks. Each subject is linked to a mask sequence by optimal
/// assignment on mean box IoU.
pub fn curate_clip(
    detections: &[Vec<Detection>],
    poses: &[Vec<KeypointSet>],
    masks: &[MaskSequence],
    fps: f64,
    frame_dims: (u32, u32),
    params: &AssociationParams,
    thresholds: &FilterThresholds,
) -> Result<CurationOutcome, CurationError> {
    let total = detections.len();
    if total == 0 {
        return Err(CurationError::NoFrames);
    }
    if poses.len() != total {
        return Err(CurationError::DetectionFrames { detections: total, poses: poses.len() });
    }
    let tracks = associate(detections, params);
    let scores = score_subjects(&tracks, total)?;
    let verdict = filter_clip(&tracks, &scores, frame_dims, total, thresholds);
    let mut outcome = CurationOutcome { tracks, scores, verdict, poses: None, subject_masks: None, dropped_poses: 0 };
    let Some(selected) = outcome.verdict.selected.filter(|_| outcome.verdict.accepted) else {
        return Ok(outcome);
    };
    if masks.len() < 2 {
        return Err(CurationError::MaskCount(masks.len()));
    }
    let assignment = assign_poses(poses, masks)?;
    let subject = |id: u64| outcome.tracks.iter().find(|t| t.id == id).expect("selected ids name tracks");
    let cost = CostMatrix::from_fn(2, masks.len(), |i, j| 1.0 - track_mask_overlap(subject(selected[i]), &masks[j]));
    let mut link = [0usize; 2];
    for (i, j) in solve_assignment(&cost).pairs {
        link[i] = j;
    }
    let frames = (0..total)
        .map(|t| link.iter().map(|&j| assignment.per_person[j][t].clone().unwrap_or_else(KeypointSet::invisible)).collect())
        .collect();
    outcome.poses = Some(PoseSequence::new(fps, frames)?);
    outcome.subject_masks = Some(link);
    outcome.dropped_poses = assignment.dropped.len();
    Ok(outcome)
}
