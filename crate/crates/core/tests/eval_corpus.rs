//! End-to-end evaluation of generated corpora.

use std::fs;
use std::path::{Path, PathBuf};

use tvbench_core::config::EngineConfig;
use tvbench_core::eval::{evaluate_corpus, CorpusError, CorpusOptions, TrackSelection};
use tvbench_core::formats::load_corpus;
use tvbench_core::report::{CorpusReport, QUALITY_COLUMNS, SMOOTH_RMS_SCALE, TIME_DYN_SCALE};
use tvbench_core::synth::{write_corpus, CorpusSpec, CorpusTruth};

fn small(perfect: bool, clips: usize) -> CorpusSpec {
    CorpusSpec { clips, frames: 20, perfect, ..CorpusSpec::fixture() }
}

fn generate(dir: &Path, spec: &CorpusSpec, seed: u64) -> (Vec<PathBuf>, CorpusTruth) {
    let (corpus, truth) = write_corpus(dir, spec, seed).unwrap();
    (load_corpus(&corpus).unwrap(), truth)
}

fn run(manifests: &[PathBuf], tracks: TrackSelection, threads: usize, skip_errors: bool) -> Result<CorpusReport, CorpusError> {
    let opts = CorpusOptions { tracks, threads, skip_errors };
    evaluate_corpus(manifests, &opts, &EngineConfig::default()).map(|r| r.report)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn perfect_predictions_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let (manifests, truth) = generate(dir.path(), &small(true, 3), 11);
    let report = run(&manifests, TrackSelection::all(), 1, false).unwrap();
    assert_eq!(report.clips.len(), 3);
    assert!(report.errors.is_empty());
    for (clip, t) in report.clips.iter().zip(&truth.clips) {
        assert_eq!(clip.clip_id, t.clip_id);
        let v = |name: &str| clip.get(name).unwrap_or_else(|| panic!("{name} missing for {}", clip.clip_id));
        for name in ["HOTA", "DetA", "AssA", "LocA", "MOTA", "MOTP", "IDF1", "IDP", "IDR"] {
            assert!(close(v(name), 100.0, 1e-12), "{name} = {}", v(name));
        }
        assert_eq!(v("IDSW"), 0.0);
        assert!(v("MPJPE_2D").abs() < 1e-9);
        assert!(close(v("OKS"), 1.0, 1e-12));
        assert!(close(v("PoseSSIM"), 1.0, 1e-12));
        assert!(close(v("SmoothRMS"), t.smooth_rms * SMOOTH_RMS_SCALE, 1e-9));
        assert!(close(v("TimeDyn_RMSE"), t.time_dyn_rmse * TIME_DYN_SCALE, 1e-9));
        assert!(v("FVMD").abs() < 1e-9);
        assert_eq!(v("L1"), 0.0);
        assert_eq!(v("PSNR"), 100.0);
        assert!(close(v("SSIM"), 1.0, 1e-12));
        assert!(close(v("ST-SSIM"), 1.0, 1e-12));
        assert!(v("FVD").abs() < 1e-4 && v("FID").abs() < 1e-4);
        assert_eq!(v("Masked_L1"), 0.0);
        assert_eq!(v("Masked_PSNR"), 100.0);
        assert!(close(v("Masked_SSIM"), 1.0, 1e-12));
    }
}

#[test]
fn imperfect_predictions_match_generator_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (manifests, truth) = generate(dir.path(), &small(false, 2), 5);
    let report = run(&manifests, TrackSelection::only(2).unwrap(), 1, false).unwrap();
    for (clip, t) in report.clips.iter().zip(&truth.clips) {
        assert!(close(clip.get("TimeDyn_RMSE").unwrap(), t.time_dyn_rmse * TIME_DYN_SCALE, 1e-9));
        assert!(close(clip.get("SmoothRMS").unwrap(), t.smooth_rms * SMOOTH_RMS_SCALE, 1e-9));
        assert!(clip.get("MPJPE_2D").unwrap() > 0.0);
        let oks = clip.get("OKS").unwrap();
        assert!(oks > 0.0 && oks < 1.0);
        assert!(clip.get("HOTA").is_none());
    }
    assert_eq!(report.metadata.tracks, vec![2]);
}

#[test]
fn reports_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (manifests, _) = generate(dir.path(), &small(false, 4), 9);
    let one = run(&manifests, TrackSelection::all(), 1, false).unwrap();
    let three = run(&manifests, TrackSelection::all(), 3, false).unwrap();
    assert_eq!(one.to_json(), three.to_json());
    assert_eq!(one.to_csv(), three.to_csv());
    let again = run(&manifests, TrackSelection::all(), 1, false).unwrap();
    assert_eq!(one.to_json(), again.to_json());
}

#[test]
fn broken_clips_abort_or_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (mut manifests, _) = generate(dir.path(), &small(false, 3), 2);
    fs::write(manifests[1].parent().unwrap().join("pred_tracks.json"), "{ not json").unwrap();
    manifests.push(dir.path().join("missing/manifest.json"));

    let err = run(&manifests, TrackSelection::only(1).unwrap(), 1, false).unwrap_err();
    match err {
        CorpusError::Clip { clip, source } => {
            assert_eq!(clip, "clip_001");
            assert!(source.to_string().contains("pred_tracks.json"), "{source}");
        }
        other => panic!("unexpected {other}"),
    }

    let report = run(&manifests, TrackSelection::only(1).unwrap(), 2, true).unwrap();
    let ids: Vec<&str> = report.clips.iter().map(|c| c.clip_id.as_str()).collect();
    assert_eq!(ids, ["clip_000", "clip_002"]);
    assert_eq!(report.errors.len(), 2);
    assert_eq!(report.errors[0].clip, "clip_001");
    assert!(report.errors[1].clip.ends_with("manifest.json"));
}

#[test]
fn csv_has_one_row_per_clip_and_masked_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (manifests, _) = generate(dir.path(), &small(false, 2), 3);
    let report = run(&manifests, TrackSelection::only(3).unwrap(), 1, false).unwrap();
    let csv = String::from_utf8(report.to_csv()).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    let header: Vec<&str> = lines[0].split(',').collect();
    for name in QUALITY_COLUMNS {
        assert!(header.contains(&name));
        assert!(header.contains(&format!("Masked_{name}").as_str()));
    }
    for row in &lines[1..] {
        assert_eq!(row.split(',').count(), header.len());
    }
    let clip = &report.clips[0];
    for name in ["L1", "PSNR", "SSIM", "ST-SSIM", "GMSD-T", "LPIPS", "DISTS", "CLIP", "FVD", "FID", "C-FID"] {
        assert!(clip.get(name).is_some(), "{name}");
        assert!(clip.get(&format!("Masked_{name}")).is_some(), "Masked_{name}");
    }
}

#[test]
fn lenient_run_skips_tracks_without_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = CorpusSpec { video: false, masks: false, ..small(false, 1) };
    let (manifests, _) = generate(dir.path(), &spec, 4);
    let report = run(&manifests, TrackSelection::all(), 1, false).unwrap();
    let clip = &report.clips[0];
    assert!(clip.get("HOTA").is_some());
    assert!(clip.get("MPJPE_2D").is_some());
    assert!(clip.get("L1").is_none());
    assert!(clip.flags.iter().any(|f| f.contains('3')), "{:?}", clip.flags);
    assert!(run(&manifests, TrackSelection::only(3).unwrap(), 1, false).is_err());
}
