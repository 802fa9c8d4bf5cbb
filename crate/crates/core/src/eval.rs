//! Clip and corpus evaluation over the three benchmark tracks: identity
//! consistency (tracking), interaction coherence (pose) and video quality.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::EngineConfig;
use crate::curation::pose_box;
use crate::formats::{
    frame_dims, load_features, load_frames, load_layer_maps, load_manifest, load_mask_dir, load_poses, load_tracks,
    ClipManifest, FeaturePaths, FormatError,
};
use crate::geometry::MaskSequence;
use crate::pose::{self, PersonArea, PoseError, PoseSequence, BOX_AREA_RATIO};
use crate::quality::{self, FrameSequence, Measured, QualityError};
use crate::report::{
    ClipFailure, ClipReport, CorpusReport, ReportMetadata, FVMD_SCALE, MASKED_PREFIX, SMOOTH_RMS_SCALE,
    TIME_DYN_SCALE, TRACKING_SCALE,
};
use crate::tracking::{compute_clear, compute_hota, compute_identity, TrackError};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("tracking: {0}")]
    Track(#[from] TrackError),
    #[error("pose: {0}")]
    Pose(#[from] PoseError),
    #[error("quality: {0}")]
    Quality(#[from] QualityError),
    #[error("track {track} needs `{field}` in the manifest")]
    MissingInput { track: u8, field: &'static str },
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("clip {clip}: {source}")]
    Clip { clip: String, source: EvalError },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Which tracks to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackSelection {
    pub identity: bool,
    pub interaction: bool,
    pub quality: bool,
    /// With every track selected, tracks whose inputs a manifest omits are
    /// skipped with a flag instead of failing the clip.
    pub lenient: bool,
}

impl TrackSelection {
    pub fn all() -> Self {
        Self { identity: true, interaction: true, quality: true, lenient: true }
    }

    pub fn only(track: u8) -> Option<Self> {
        let none = Self { identity: false, interaction: false, quality: false, lenient: false };
        match track {
            1 => Some(Self { identity: true, ..none }),
            2 => Some(Self { interaction: true, ..none }),
            3 => Some(Self { quality: true, ..none }),
            _ => None,
        }
    }

    /// Parses `all` or a comma-separated list of track numbers such as `1,2`.
    pub fn parse(s: &str) -> Option<Self> {
        if s == "all" {
            return Some(Self::all());
        }
        s.split(',').try_fold(None, |acc: Option<Self>, part| {
            let one = part.trim().parse().ok().and_then(Self::only)?;
            Some(Some(match acc {
                None => one,
                Some(a) => Self {
                    identity: a.identity || one.identity,
                    interaction: a.interaction || one.interaction,
                    quality: a.quality || one.quality,
                    lenient: false,
                },
            }))
        })?
    }

    pub fn numbers(&self) -> Vec<u8> {
        [(1, self.identity), (2, self.interaction), (3, self.quality)].iter().filter(|t| t.1).map(|t| t.0).collect()
    }
}

fn require<'a>(slot: &'a Option<PathBuf>, track: u8, field: &'static str) -> Result<&'a Path, EvalError> {
    slot.as_deref().ok_or(EvalError::MissingInput { track, field })
}

/// Loads the masks once for both tracks that use them.
struct ClipInputs<'a> {
    manifest: &'a ClipManifest,
    masks: Option<Vec<MaskSequence>>,
}

impl<'a> ClipInputs<'a> {
    fn masks(&mut self) -> Result<Option<&[MaskSequence]>, EvalError> {
        if self.manifest.masks.is_empty() {
            return Ok(None);
        }
        if self.masks.is_none() {
            let loaded = self.manifest.masks.iter().map(|d| load_mask_dir(d)).collect::<Result<Vec<_>, _>>()?;
            self.masks = Some(loaded);
        }
        Ok(self.masks.as_deref())
    }
}

fn evaluate_identity(m: &ClipManifest, cfg: &EngineConfig, report: &mut ClipReport) -> Result<(), EvalError> {
    let gt = load_tracks(require(&m.gt_tracks, 1, "gt_tracks")?)?;
    let pred = load_tracks(require(&m.pred_tracks, 1, "pred_tracks")?)?;
    let iou = cfg.tracking.iou_threshold;
    let hota = compute_hota(&gt, &pred)?;
    let clear = compute_clear(&gt, &pred, iou)?;
    let id = compute_identity(&gt, &pred, iou)?;
    for (name, v) in [
        ("HOTA", hota.hota),
        ("DetA", hota.deta),
        ("AssA", hota.assa),
        ("LocA", hota.loca),
        ("MOTA", clear.mota),
        ("MOTP", clear.motp),
        ("IDF1", id.idf1),
        ("IDP", id.idp),
        ("IDR", id.idr),
    ] {
        report.set(name, v * TRACKING_SCALE);
    }
    report.set("IDSW", clear.idsw as f64);
    if clear.mota.is_nan() {
        report.flag("MOTA: no ground-truth detections");
    }
    for f in hota.flags.iter().chain(&clear.flags).chain(&id.flags) {
        report.flag(format!("track1: {f}"));
    }
    Ok(())
}

/// Person areas for OKS: mask pixel counts when masks are available and
/// non-empty, otherwise the ground-truth keypoint box area times
/// [`BOX_AREA_RATIO`].
fn person_areas(gt: &PoseSequence, masks: Option<&[MaskSequence]>) -> Vec<Vec<PersonArea>> {
    gt.frames()
        .iter()
        .enumerate()
        .map(|(t, persons)| {
            persons
                .iter()
                .enumerate()
                .map(|(p, kps)| {
                    let mask_area = masks.map(|m| m[p].masks()[t].area() as f64).filter(|&a| a > 0.0);
                    let box_area = kps.bbox().map(|b| b.area()).filter(|&a| a > 0.0).or_else(|| pose_box(kps).map(|b| b.area()));
                    PersonArea { explicit: None, mask_pixels: mask_area.or(box_area.map(|a| a * BOX_AREA_RATIO)) }
                })
                .collect()
        })
        .collect()
}

fn heatmap_size(m: &ClipManifest, masks: Option<&[MaskSequence]>) -> Result<Option<(usize, usize)>, EvalError> {
    if let Some([w, h]) = m.frame_size {
        return Ok(Some((w as usize, h as usize)));
    }
    if let Some(dir) = &m.gt_frames {
        let (w, h) = frame_dims(dir)?;
        return Ok(Some((w as usize, h as usize)));
    }
    Ok(masks.and_then(|m| m.first()).map(|s| (s.masks()[0].width() as usize, s.masks()[0].height() as usize)))
}

fn evaluate_interaction(inputs: &mut ClipInputs, cfg: &EngineConfig, report: &mut ClipReport) -> Result<(), EvalError> {
    let m = inputs.manifest;
    let (mut gt, gt_ids) = load_poses(require(&m.gt_poses, 2, "gt_poses")?, cfg.pose.min_confidence)?;
    let (mut pred, pred_ids) = load_poses(require(&m.pred_poses, 2, "pred_poses")?, cfg.pose.min_confidence)?;
    if gt_ids.len() != pred_ids.len() {
        return Err(EvalError::Inconsistent(format!("{} ground-truth persons, {} predicted", gt_ids.len(), pred_ids.len())));
    }
    gt = PoseSequence::new(m.fps, gt.frames().to_vec())?;
    pred = PoseSequence::new(m.fps, pred.frames().to_vec())?;
    let masks = inputs.masks()?;
    if let Some(masks) = masks {
        if masks.len() != gt.persons() || masks.iter().any(|s| s.len() != gt.len()) {
            return Err(EvalError::Inconsistent(format!(
                "masks cover {} persons, poses {} persons over {} frames",
                masks.len(),
                gt.persons(),
                gt.len()
            )));
        }
    }
    report.set("MPJPE_2D", pose::mpjpe_2d(&gt, &pred)?);
    report.set("OKS", pose::oks(&gt, &pred, &person_areas(&gt, masks))?);
    match heatmap_size(m, masks)? {
        Some((w, h)) => report.set("PoseSSIM", pose::pose_heat_ssim(&gt, &pred, w, h)?),
        None => report.flag("PoseSSIM: frame size unknown"),
    }
    report.set("SmoothRMS", pose::smooth_rms(&pred)? * SMOOTH_RMS_SCALE);
    report.set("TimeDyn_RMSE", pose::time_dyn_rmse(&pred, &gt)? * TIME_DYN_SCALE);
    report.set("TimeDyn_RMSE_diff", pose::time_dyn_rmse_diff(&pred, &gt)? * TIME_DYN_SCALE);
    report.set("FVMD", pose::fvmd(&gt, &pred)? * FVMD_SCALE);
    Ok(())
}

type PixelMetric = fn(&FrameSequence, &FrameSequence, Option<&[MaskSequence]>) -> Result<Measured, QualityError>;

const PIXEL_METRICS: [(&str, PixelMetric); 5] = [
    ("L1", quality::l1),
    ("PSNR", quality::psnr),
    ("SSIM", quality::ssim),
    ("ST-SSIM", quality::st_ssim),
    ("GMSD-T", quality::gmsd_temporal),
];

/// Feature-based scores of one feature bundle; `None` for metrics whose
/// files are absent.
fn feature_metrics(f: &FeaturePaths, flags: &mut Vec<String>) -> Result<Vec<(&'static str, f64)>, EvalError> {
    let mut out = Vec::new();
    for (name, gt, pred) in [
        ("FVD", &f.gt_i3d, &f.pred_i3d),
        ("FID", &f.gt_inception, &f.pred_inception),
        ("C-FID", &f.gt_clip, &f.pred_clip),
    ] {
        if let (Some(g), Some(p)) = (gt, pred) {
            let (g, p) = (load_features(g)?, load_features(p)?);
            if g.count() < 2 || p.count() < 2 {
                flags.push(format!("{name}: needs at least 2 feature vectors per side, got {} and {}", g.count(), p.count()));
                continue;
            }
            out.push((name, quality::feature_frechet(&g, &p)?));
        }
    }
    if let (Some(g), Some(p)) = (&f.gt_clip, &f.pred_clip) {
        out.push(("CLIP", quality::clip_score(&load_features(g)?, &load_features(p)?)?));
    }
    if let (Some(g), Some(p)) = (&f.gt_vgg, &f.pred_vgg) {
        let (g, p) = (load_layer_maps(g)?, load_layer_maps(p)?);
        out.push(("LPIPS", quality::lpips_from_features(&g, &p)?));
        let d = quality::dists_from_features(&g, &p)?;
        out.push(("DISTS", d.oriented));
        out.push(("DISTS_raw", d.raw));
    }
    Ok(out)
}

fn evaluate_quality(inputs: &mut ClipInputs, report: &mut ClipReport) -> Result<(), EvalError> {
    let m = inputs.manifest;
    let gt = load_frames(require(&m.gt_frames, 3, "gt_frames")?)?;
    let pred = load_frames(require(&m.pred_frames, 3, "pred_frames")?)?;
    let masks = inputs.masks()?;
    let mut jobs: Vec<(String, PixelMetric, Option<&[MaskSequence]>)> =
        PIXEL_METRICS.iter().map(|&(n, f)| (n.to_string(), f, None)).collect();
    if let Some(masks) = masks {
        jobs.extend(PIXEL_METRICS.iter().map(|&(n, f)| (format!("{MASKED_PREFIX}{n}"), f, Some(masks))));
    }
    let results: Vec<Result<Measured, QualityError>> = jobs.par_iter().map(|(_, f, masks)| f(&gt, &pred, *masks)).collect();
    for ((name, _, _), r) in jobs.iter().zip(results) {
        let measured = r?;
        report.set(name, measured.value);
        for f in measured.flags {
            report.flag(format!("{name}: {f}"));
        }
    }

    let mut flags = Vec::new();
    for (name, v) in feature_metrics(&m.features, &mut flags)? {
        report.set(name, v);
    }
    if !m.masked_features.is_empty() {
        let mut per_metric: std::collections::BTreeMap<&str, Vec<f64>> = std::collections::BTreeMap::new();
        for f in &m.masked_features {
            for (name, v) in feature_metrics(f, &mut flags)? {
                per_metric.entry(name).or_default().push(v);
            }
        }
        for (name, vals) in per_metric {
            report.set(&format!("{MASKED_PREFIX}{name}"), vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    for f in flags {
        report.flag(f);
    }
    Ok(())
}

fn has_all(slots: &[&Option<PathBuf>]) -> bool {
    slots.iter().all(|s| s.is_some())
}

/// Scores one clip on the selected tracks.
pub fn evaluate_clip(m: &ClipManifest, tracks: TrackSelection, cfg: &EngineConfig) -> Result<ClipReport, EvalError> {
    let mut report = ClipReport::new(m.clip_id.clone());
    let mut inputs = ClipInputs { manifest: m, masks: None };
    let run = |wanted: bool, present: bool, track: u8, report: &mut ClipReport| {
        if wanted && tracks.lenient && !present {
            report.flag(format!("track {track} skipped: inputs not in manifest"));
            return false;
        }
        wanted
    };
    if run(tracks.identity, has_all(&[&m.gt_tracks, &m.pred_tracks]), 1, &mut report) {
        evaluate_identity(m, cfg, &mut report)?;
    }
    if run(tracks.interaction, has_all(&[&m.gt_poses, &m.pred_poses]), 2, &mut report) {
        evaluate_interaction(&mut inputs, cfg, &mut report)?;
    }
    if run(tracks.quality, has_all(&[&m.gt_frames, &m.pred_frames]), 3, &mut report) {
        evaluate_quality(&mut inputs, &mut report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipTiming {
    pub clip: String,
    pub seconds: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRun {
    pub report: CorpusReport,
    pub timings: Vec<ClipTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusOptions {
    pub tracks: TrackSelection,
    /// Worker threads; 0 means one per CPU.
    pub threads: usize,
    /// Record failing clips in the report instead of aborting.
    pub skip_errors: bool,
}

fn clip_label(path: &Path) -> String {
    path.display().to_string()
}

/// Evaluates every manifest on a worker pool. Results keep corpus order, so
/// the report does not depend on the thread count.
pub fn evaluate_corpus(manifests: &[PathBuf], opts: &CorpusOptions, cfg: &EngineConfig) -> Result<CorpusRun, CorpusError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| CorpusError::Pool(e.to_string()))?;
    let outcomes: Vec<(String, Result<ClipReport, EvalError>, f64)> = pool.install(|| {
        manifests
            .par_iter()
            .map(|path| {
                let start = Instant::now();
                let (label, result) = match load_manifest(path) {
                    Ok(m) => (m.clip_id.clone(), evaluate_clip(&m, opts.tracks, cfg)),
                    Err(e) => (clip_label(path), Err(e.into())),
                };
                (label, result, start.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut clips = Vec::new();
    let mut errors = Vec::new();
    let mut timings = Vec::new();
    for (clip, result, seconds) in outcomes {
        timings.push(ClipTiming { clip: clip.clone(), seconds, ok: result.is_ok() });
        match result {
            Ok(r) => clips.push(r),
            Err(source) if !opts.skip_errors => return Err(CorpusError::Clip { clip, source }),
            Err(source) => {
                log::warn!("skipping clip {clip}: {source}");
                errors.push(ClipFailure { clip, message: source.to_string() });
            }
        }
    }
    let metadata =
        ReportMetadata { engine_version: ENGINE_VERSION.to_string(), config_hash: cfg.hash(), tracks: opts.tracks.numbers() };
    Ok(CorpusRun { report: CorpusReport::new(metadata, clips, errors), timings })
}
