//! Identity-consistency metrics over ground-truth and predicted box tracks:
//! CLEAR-MOT (MOTA/MOTP), identity F1 and HOTA with its DetA/AssA/LocA
//! decomposition.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, threshold_match, CostMatrix};
use crate::geometry::{box_iou, BoundingBox};

pub type TrackId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("track set has no frames")]
    NoFrames,
    #[error("duplicate track id {id} in frame {frame}")]
    DuplicateId { frame: usize, id: TrackId },
    #[error("frame count mismatch: ground truth {gt}, prediction {pred}")]
    FrameMismatch { gt: usize, pred: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedBox {
    pub id: TrackId,
    pub bbox: BoundingBox,
}

/// Per-frame boxes with identities; ids are unique within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    frames: Vec<Vec<TrackedBox>>,
}

impl TrackSet {
    pub fn new(frames: Vec<Vec<TrackedBox>>) -> Result<Self, TrackError> {
        if frames.is_empty() {
            return Err(TrackError::NoFrames);
        }
        for (t, dets) in frames.iter().enumerate() {
            let mut ids: Vec<_> = dets.iter().map(|d| d.id).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(TrackError::DuplicateId { frame: t, id: w[0] });
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Vec<TrackedBox>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| f.iter().map(|d| TrackedBox { id: d.id, bbox: d.bbox.scaled(factor) }).collect())
                .collect(),
        }
    }

    /// Reorders frames; `order[k]` is the source index of frame `k`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self { frames: order.iter().map(|&i| self.frames[i].clone()).collect() }
    }
}

fn check_frames(gt: &TrackSet, pred: &TrackSet) -> Result<(), TrackError> {
    if gt.len() != pred.len() {
        return Err(TrackError::FrameMismatch { gt: gt.len(), pred: pred.len() });
    }
    Ok(())
}

fn iou_matrix(gt: &[TrackedBox], pred: &[TrackedBox]) -> Vec<f64> {
    gt.iter().flat_map(|g| pred.iter().map(move |p| box_iou(&g.bbox, &p.bbox))).collect()
}

/// `num / den`, or 0 with `flag` recorded when `den` is 0.
fn ratio(num: f64, den: f64, flag: &'static str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(flag.to_string());
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearScores {
    /// NaN when there are no ground-truth detections.
    pub mota: f64,
    pub motp: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub idsw: u64,
    pub gt_dets: u64,
    pub flags: Vec<String>,
}

/// `1 − (FP + FN + IDSW) / GT`; negative whenever errors outnumber GT boxes.
pub fn mota(fp: u64, fn_: u64, idsw: u64, gt_dets: u64) -> f64 {
    if gt_dets == 0 {
        return f64::NAN;
    }
    1.0 - (fp + fn_ + idsw) as f64 / gt_dets as f64
}

pub fn compute_clear(gt: &TrackSet, pred: &TrackSet, iou_threshold: f64) -> Result<ClearScores, TrackError> {
    check_frames(gt, pred)?;
    let gate = 1.0 - iou_threshold;
    let (mut tp, mut fp, mut fn_, mut idsw, mut gt_dets) = (0u64, 0u64, 0u64, 0u64, 0u64);
    let mut loc_err = 0.0;
    let mut last_match: HashMap<TrackId, TrackId> = HashMap::new();

    for (g, p) in gt.frames.iter().zip(&pred.frames) {
        gt_dets += g.len() as u64;
        let ious = iou_matrix(g, p);
        let cost = CostMatrix::from_fn(g.len(), p.len(), |i, j| 1.0 - ious[i * p.len() + j]);
        let matching = threshold_match(&cost, gate);
        let matched = matching.pairs.len() as u64;
        tp += matched;
        fn_ += g.len() as u64 - matched;
        fp += p.len() as u64 - matched;
        for &(i, j) in &matching.pairs {
            loc_err += 1.0 - ious[i * p.len() + j];
            if let Some(prev) = last_match.insert(g[i].id, p[j].id) {
                if prev != p[j].id {
                    idsw += 1;
                }
            }
        }
    }

    let mut flags = Vec::new();
    if gt_dets == 0 {
        flags.push("mota_undefined".to_string());
    }
    let motp = if tp == 0 { ratio(0.0, 0.0, "motp_no_tp", &mut flags) } else { 1.0 - loc_err / tp as f64 };
    Ok(ClearScores { mota: mota(fp, fn_, idsw, gt_dets), motp, tp, fp, fn_, idsw, gt_dets, flags })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityScores {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
    pub flags: Vec<String>,
}

/// Sorted distinct ids and a lookup from id to dense index.
fn index_ids(set: &TrackSet) -> (Vec<TrackId>, HashMap<TrackId, usize>) {
    let mut ids: Vec<TrackId> = set.frames.iter().flatten().map(|d| d.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let lookup = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    (ids, lookup)
}

/// Identity scores from the globally optimal bijection between ground-truth
/// and predicted identities, where a pair earns one identity true positive
/// for every frame in which their boxes overlap at `iou_threshold` or more.
pub fn compute_identity(gt: &TrackSet, pred: &TrackSet, iou_threshold: f64) -> Result<IdentityScores, TrackError> {
    check_frames(gt, pred)?;
    let (gt_ids, gt_idx) = index_ids(gt);
    let (pred_ids, pred_idx) = index_ids(pred);
    let mut overlap = vec![0u64; gt_ids.len() * pred_ids.len()];
    for (g, p) in gt.frames.iter().zip(&pred.frames) {
        for gb in g {
            for pb in p {
                if box_iou(&gb.bbox, &pb.bbox) >= iou_threshold {
                    overlap[gt_idx[&gb.id] * pred_ids.len() + pred_idx[&pb.id]] += 1;
                }
            }
        }
    }
    let cost = CostMatrix::from_fn(gt_ids.len(), pred_ids.len(), |i, j| -(overlap[i * pred_ids.len() + j] as f64));
    let idtp: u64 = solve_assignment(&cost).pairs.iter().map(|&(i, j)| overlap[i * pred_ids.len() + j]).sum();
    let idfn = gt.detection_count() as u64 - idtp;
    let idfp = pred.detection_count() as u64 - idtp;

    let mut flags = Vec::new();
    let idp = ratio(idtp as f64, (idtp + idfp) as f64, "idp_undefined", &mut flags);
    let idr = ratio(idtp as f64, (idtp + idfn) as f64, "idr_undefined", &mut flags);
    let idf1 = ratio(2.0 * idtp as f64, (2 * idtp + idfp + idfn) as f64, "idf1_undefined", &mut flags);
    Ok(IdentityScores { idf1, idp, idr, idtp, idfp, idfn, flags })
}

/// The 19 localisation thresholds 0.05, 0.10, ..., 0.95.
pub fn hota_alphas() -> Vec<f64> {
    (1..20).map(|i| f64::from(i) / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotaAtAlpha {
    pub alpha: f64,
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaScores {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    pub loca: f64,
    pub per_alpha: Vec<HotaAtAlpha>,
    pub flags: Vec<String>,
}

/// HOTA averaged over [`hota_alphas`].
///
/// Each frame is matched once with a score that multiplies IoU by the
/// global Jaccard alignment of the two identities, so pairs that agree over
/// the whole sequence win ties. A matched pair counts as a true positive at
/// every threshold its IoU reaches. Association accuracy weighs each true
/// positive by `TPA / (TPA + FPA + FNA)` of its identity pair.
pub fn compute_hota(gt: &TrackSet, pred: &TrackSet) -> Result<HotaScores, TrackError> {
    check_frames(gt, pred)?;
    let alphas = hota_alphas();
    let (gt_ids, gt_idx) = index_ids(gt);
    let (pred_ids, pred_idx) = index_ids(pred);
    let np = pred_ids.len();

    let mut gt_count = vec![0.0f64; gt_ids.len()];
    let mut pred_count = vec![0.0f64; np];
    let mut potential = vec![0.0f64; gt_ids.len() * np];
    let frame_ious: Vec<Vec<f64>> = gt.frames.iter().zip(&pred.frames).map(|(g, p)| iou_matrix(g, p)).collect();

    for ((g, p), ious) in gt.frames.iter().zip(&pred.frames).zip(&frame_ious) {
        let row_sum: Vec<f64> = (0..g.len()).map(|i| ious[i * p.len()..(i + 1) * p.len()].iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len()).map(|j| (0..g.len()).map(|i| ious[i * p.len() + j]).sum()).collect();
        for (i, gb) in g.iter().enumerate() {
            gt_count[gt_idx[&gb.id]] += 1.0;
            for (j, pb) in p.iter().enumerate() {
                let s = ious[i * p.len() + j];
                let denom = row_sum[i] + col_sum[j] - s;
                if denom > 0.0 {
                    potential[gt_idx[&gb.id] * np + pred_idx[&pb.id]] += s / denom;
                }
            }
        }
        for pb in p {
            pred_count[pred_idx[&pb.id]] += 1.0;
        }
    }
    let alignment: Vec<f64> = (0..gt_ids.len() * np)
        .map(|k| {
            let denom = gt_count[k / np] + pred_count[k % np] - potential[k];
            if denom > 0.0 {
                potential[k] / denom
            } else {
                0.0
            }
        })
        .collect();

    let na = alphas.len();
    let mut tp = vec![0.0f64; na];
    let mut fn_ = vec![0.0f64; na];
    let mut fp = vec![0.0f64; na];
    let mut loc = vec![0.0f64; na];
    let mut pair_matches: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); na];

    for ((g, p), ious) in gt.frames.iter().zip(&pred.frames).zip(&frame_ious) {
        let cost = CostMatrix::from_fn(g.len(), p.len(), |i, j| {
            -(alignment[gt_idx[&g[i].id] * np + pred_idx[&p[j].id]] * ious[i * p.len() + j])
        });
        let matching = solve_assignment(&cost);
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut matched = 0.0;
            for &(i, j) in &matching.pairs {
                let s = ious[i * p.len() + j];
                if s >= alpha - f64::EPSILON {
                    matched += 1.0;
                    loc[a] += s;
                    *pair_matches[a].entry((gt_idx[&g[i].id], pred_idx[&p[j].id])).or_insert(0.0) += 1.0;
                }
            }
            tp[a] += matched;
            fn_[a] += g.len() as f64 - matched;
            fp[a] += p.len() as f64 - matched;
        }
    }

    let mut flags = Vec::new();
    let mut per_alpha = Vec::with_capacity(na);
    for a in 0..na {
        let ass_sum: f64 = pair_matches[a]
            .iter()
            .map(|(&(gi, pi), &m)| m * m / (gt_count[gi] + pred_count[pi] - m))
            .sum();
        let mut local = Vec::new();
        let deta = ratio(tp[a], tp[a] + fn_[a] + fp[a], "deta_undefined", &mut local);
        let assa = ratio(ass_sum, tp[a], "assa_no_tp", &mut local);
        let loca = ratio(loc[a], tp[a], "loca_no_tp", &mut local);
        for f in local {
            if !flags.contains(&f) {
                flags.push(f);
            }
        }
        per_alpha.push(HotaAtAlpha { alpha: alphas[a], hota: (deta * assa).sqrt(), deta, assa, loca });
    }
    let mean = |f: fn(&HotaAtAlpha) -> f64| per_alpha.iter().map(f).sum::<f64>() / na as f64;
    Ok(HotaScores {
        hota: mean(|s| s.hota),
        deta: mean(|s| s.deta),
        assa: mean(|s| s.assa),
        loca: mean(|s| s.loca),
        per_alpha,
        flags,
    })
}
