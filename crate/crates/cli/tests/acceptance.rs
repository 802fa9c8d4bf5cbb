//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are pinned in the constants below.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvbench_core::assignment::{solve_assignment, CostMatrix};
use tvbench_core::config::EngineConfig;
use tvbench_core::curation::FilterThresholds;
use tvbench_core::eval::{evaluate_clip, TrackSelection};
use tvbench_core::formats::{write_json, ClipManifest, TrackFile};
use tvbench_core::gaussian::{frechet_distance, frechet_distance_2d, GaussianSummary};
use tvbench_core::geometry::{BinaryMask, BoundingBox, KeypointSet, MaskSequence, Point2, SimilarityTransform, NUM_KEYPOINTS};
use tvbench_core::pose::{mpjpe_2d, smooth_rms, time_dyn_rmse, PoseSequence};
use tvbench_core::quality::{l1, psnr, ssim, FrameSequence};
use tvbench_core::report::{CorpusReport, SMOOTH_RMS_SCALE, TIME_DYN_SCALE};
use tvbench_core::synth::{curation_suite, write_corpus, CorpusSpec, CorpusTruth};
use tvbench_core::tracking::{TrackSet, TrackedBox};

const PERFECT_TOL: f64 = 1e-9;
const PERFECT_FEATURE_TOL: f64 = 1e-4;
const PERFECT_ANALYTIC_REL: f64 = 1e-9;
const PERFECT_SECONDS: f64 = 60.0;
const ASSIGNMENT_CASES: usize = 1000;
const ASSIGNMENT_MAX_N: usize = 8;
const SWAP_TOL: f64 = 0.01;
const SIMILARITY_CLIPS: usize = 200;
const SIMILARITY_MAX_PX: f64 = 1e-6;
const DIFFERENCE_TOL: f64 = 1e-10;
const FRECHET_CASES: usize = 500;
const FRECHET_MAX_DIM: usize = 16;
const FRECHET_REL: f64 = 1e-6;
const FRECHET_SYMMETRY: f64 = 1e-8;
const MASKED_CASES: usize = 50;
const MASKED_TOL: f64 = 1e-10;
const THROUGHPUT_SECONDS: f64 = 300.0;
const THROUGHPUT_THREADS: usize = 8;
const THROUGHPUT_SPEEDUP: f64 = 5.0;

type Outcome = Result<String, String>;

fn tvbench(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tvbench"))
        .args(args)
        .env_remove("TVBENCH_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tvbench {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn perfection(work: &Path) -> Outcome {
    let spec = CorpusSpec { perfect: true, ..CorpusSpec::fixture() };
    let (corpus, truth) = write_corpus(&work.join("perfect"), &spec, 2024).map_err(|e| e.to_string())?;
    let out = work.join("perfect.json");
    let start = Instant::now();
    tvbench(&["eval", "--track", "all", "--corpus", path(&corpus), "--out", path(&out)])?;
    let seconds = start.elapsed().as_secs_f64();
    let report = CorpusReport::from_json(&fs::read(&out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(report.clips.len() == 10 && report.errors.is_empty(), || format!("{} clips, {} errors", report.clips.len(), report.errors.len()))?;
    for (clip, t) in report.clips.iter().zip(&truth.clips) {
        let v = |name: &str| clip.get(name).ok_or_else(|| format!("{}: {name} missing", clip.clip_id));
        let near = |name: &str, want: f64, tol: f64| -> Result<(), String> {
            let got = v(name)?;
            check((got - want).abs() <= tol, || format!("{}: {name} = {got}, expected {want}", clip.clip_id))
        };
        for name in ["HOTA", "DetA", "AssA", "LocA", "MOTA", "MOTP", "IDF1"] {
            near(name, 100.0, PERFECT_TOL)?;
        }
        near("MPJPE_2D", 0.0, PERFECT_TOL)?;
        near("OKS", 1.0, PERFECT_TOL)?;
        near("PoseSSIM", 1.0, PERFECT_TOL)?;
        near("SmoothRMS", t.smooth_rms * SMOOTH_RMS_SCALE, PERFECT_ANALYTIC_REL * (t.smooth_rms * SMOOTH_RMS_SCALE).abs().max(1.0))?;
        near("TimeDyn_RMSE", t.time_dyn_rmse * TIME_DYN_SCALE, PERFECT_ANALYTIC_REL * (t.time_dyn_rmse * TIME_DYN_SCALE).abs().max(1.0))?;
        near("FVMD", 0.0, PERFECT_TOL)?;
        near("L1", 0.0, PERFECT_TOL)?;
        near("PSNR", 100.0, PERFECT_TOL)?;
        near("SSIM", 1.0, PERFECT_TOL)?;
        near("FVD", 0.0, PERFECT_FEATURE_TOL)?;
        near("FID", 0.0, PERFECT_FEATURE_TOL)?;
    }
    check(seconds < PERFECT_SECONDS, || format!("took {seconds:.1} s"))?;
    Ok(format!("10 clips at perfect scores in {seconds:.1} s"))
}

fn brute_force(c: &CostMatrix) -> f64 {
    fn go(c: &CostMatrix, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == c.rows() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.cols() {
            if !used[j] {
                used[j] = true;
                go(c, row + 1, used, acc + c.get(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
    best
}

fn assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..ASSIGNMENT_CASES {
        let n = rng.random_range(1..=ASSIGNMENT_MAX_N);
        let integral = case % 2 == 0;
        let c = CostMatrix::from_fn(n, n, |_, _| {
            if integral {
                f64::from(rng.random_range(-50i32..50))
            } else {
                rng.random_range(-100.0..100.0)
            }
        });
        let solved = solve_assignment(&c);
        let best = brute_force(&c);
        check(solved.pairs.len() == n, || format!("case {case}: {} pairs for n = {n}", solved.pairs.len()))?;
        check(solved.total_cost == best, || format!("case {case} (n = {n}): solver {} vs exhaustive {best}", solved.total_cost))?;
    }
    Ok(format!("{ASSIGNMENT_CASES} matrices, n <= {ASSIGNMENT_MAX_N}, totals equal exhaustive minimum"))
}

fn boxed(x: f64, y: f64) -> BoundingBox {
    BoundingBox::new(x, y, x + 50.0, y + 100.0).expect("valid box")
}

/// Evaluates track 1 for the given ground truth and prediction through
/// on-disk track files.
fn track1(work: &Path, name: &str, gt: &TrackSet, pred: &TrackSet) -> Result<tvbench_core::report::ClipReport, String> {
    let dir = work.join(name);
    write_json(&dir.join("gt.json"), &TrackFile::from_track_set(gt)).map_err(|e| e.to_string())?;
    write_json(&dir.join("pred.json"), &TrackFile::from_track_set(pred)).map_err(|e| e.to_string())?;
    let mut m = ClipManifest::new(name, 30.0);
    m.gt_tracks = Some(dir.join("gt.json"));
    m.pred_tracks = Some(dir.join("pred.json"));
    evaluate_clip(&m, TrackSelection::only(1).expect("track 1"), &EngineConfig::default()).map_err(|e| e.to_string())
}

fn identity_swap(work: &Path) -> Outcome {
    let (a, b) = (boxed(100.0, 100.0), boxed(400.0, 120.0));
    let gt: Vec<Vec<TrackedBox>> = (0..100).map(|_| vec![TrackedBox { id: 1, bbox: a }, TrackedBox { id: 2, bbox: b }]).collect();
    let pred: Vec<Vec<TrackedBox>> = (0..100)
        .map(|t| {
            let (ia, ib) = if t < 50 { (1, 2) } else { (2, 1) };
            vec![TrackedBox { id: ia, bbox: a }, TrackedBox { id: ib, bbox: b }]
        })
        .collect();
    let r = track1(work, "swap", &TrackSet::new(gt).map_err(|e| e.to_string())?, &TrackSet::new(pred).map_err(|e| e.to_string())?)?;
    let (idf1, mota, idsw) = (r.get("IDF1").unwrap_or(f64::NAN), r.get("MOTA").unwrap_or(f64::NAN), r.get("IDSW").unwrap_or(f64::NAN));
    check((idf1 - 50.0).abs() <= SWAP_TOL && (mota - 99.0).abs() <= SWAP_TOL, || format!("IDF1 {idf1}, MOTA {mota}, IDSW {idsw}"))?;
    Ok(format!("IDF1 {idf1}, MOTA {mota} (IDSW {idsw} over 200 ground-truth boxes)"))
}

fn negative_mota(work: &Path) -> Outcome {
    let far = |k: f64| boxed(1000.0 + 80.0 * k, 900.0);
    let gt = vec![
        vec![TrackedBox { id: 1, bbox: boxed(0.0, 0.0) }, TrackedBox { id: 2, bbox: boxed(200.0, 0.0) }],
        vec![TrackedBox { id: 1, bbox: boxed(5.0, 0.0) }, TrackedBox { id: 2, bbox: boxed(205.0, 0.0) }],
    ];
    let pred = vec![
        vec![TrackedBox { id: 1, bbox: boxed(0.0, 0.0) }, TrackedBox { id: 7, bbox: far(0.0) }, TrackedBox { id: 8, bbox: far(1.0) }, TrackedBox { id: 9, bbox: far(2.0) }],
        vec![TrackedBox { id: 1, bbox: boxed(5.0, 0.0) }, TrackedBox { id: 7, bbox: far(0.5) }, TrackedBox { id: 8, bbox: far(1.5) }],
    ];
    let r = track1(work, "negative", &TrackSet::new(gt).map_err(|e| e.to_string())?, &TrackSet::new(pred).map_err(|e| e.to_string())?)?;
    let mota = r.get("MOTA").unwrap_or(f64::NAN);
    check((mota + 75.0).abs() <= 1e-12, || format!("MOTA {mota}"))?;
    Ok(format!("4 GT, 5 FP, 2 FN gives MOTA {mota}"))
}

fn random_pose_clip(rng: &mut ChaCha8Rng) -> PoseSequence {
    let frames = rng.random_range(2..12);
    let persons = rng.random_range(1..=2);
    let seq = (0..frames)
        .map(|_| {
            (0..persons)
                .map(|_| {
                    let mut pts = Vec::new();
                    for j in 0..NUM_KEYPOINTS {
                        if rng.random_bool(0.85) {
                            pts.push((j, Point2::new(rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0))));
                        }
                    }
                    KeypointSet::from_points(&pts)
                })
                .collect()
        })
        .collect();
    PoseSequence::new(30.0, seq).expect("valid clip")
}

fn similarity_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for clip in 0..SIMILARITY_CLIPS {
        let gt = random_pose_clip(&mut rng);
        let g = SimilarityTransform::from_parts(
            rng.random_range(0.25..4.0),
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            Point2::new(rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0)),
        );
        let pred = gt.map_points(|p| g.apply(p));
        let e = mpjpe_2d(&gt, &pred).map_err(|e| format!("clip {clip}: {e}"))?;
        worst = worst.max(e);
        check(e <= SIMILARITY_MAX_PX, || format!("clip {clip}: MPJPE {e:e} px"))?;
    }
    Ok(format!("{SIMILARITY_CLIPS} clips, worst MPJPE {worst:.3e} px"))
}

fn polynomial(frames: usize, f: impl Fn(f64) -> f64) -> PoseSequence {
    let seq = (0..frames)
        .map(|t| {
            let pts: Vec<(usize, Point2)> = (0..NUM_KEYPOINTS)
                .map(|j| {
                    let angle = j as f64 * 0.37;
                    let r = f(t as f64);
                    (j, Point2::new(10.0 * j as f64 + r * angle.cos(), 5.0 + r * angle.sin()))
                })
                .collect();
            vec![KeypointSet::from_points(&pts), KeypointSet::from_points(&pts)]
        })
        .collect();
    PoseSequence::new(1.0, seq).expect("valid trajectory")
}

fn finite_differences() -> Outcome {
    let square = polynomial(20, |t| t * t);
    let cube = polynomial(20, |t| t * t * t);
    let td = time_dyn_rmse(&square, &square).map_err(|e| e.to_string())?;
    let sr = smooth_rms(&cube).map_err(|e| e.to_string())?;
    check((td - 2.0).abs() <= DIFFERENCE_TOL && (sr - 6.0).abs() <= DIFFERENCE_TOL, || format!("TimeDynRMSE {td}, SmoothRMS {sr}"))?;
    Ok(format!("t^2 TimeDynRMSE {td}, t^3 SmoothRMS {sr}"))
}

/// Double-double arithmetic (an unevaluated sum `hi + lo`), about 32
/// significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn quick(a: f64, b: f64) -> Self {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        let t = Dd::two_sum(self.lo, o.lo);
        let r = Dd::quick(s.hi, s.lo + t.hi);
        Dd::quick(r.hi, r.lo + t.lo)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::quick(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        Dd::quick(q1, q2).add(Dd::new(q3))
    }

    fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = Dd::new(self.hi.sqrt());
        x.add(self.sub(x.mul(x)).div(x.add(x)))
    }

    fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix in double-double:
/// eigenvalues and the row-major matrix whose columns are eigenvectors.
fn jacobi(mut a: Vec<Dd>, n: usize) -> (Vec<Dd>, Vec<Dd>) {
    let mut v: Vec<Dd> = (0..n * n).map(|k| Dd::new(if k / n == k % n { 1.0 } else { 0.0 })).collect();
    let one = Dd::new(1.0);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i * n + j].hi.powi(2)).sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i].hi.powi(2)).sum();
        if off <= 1e-64 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.hi.abs() <= 1e-40 * (a[p * n + p].hi.abs() + a[q * n + q].hi.abs()) {
                    a[p * n + q] = Dd::ZERO;
                    a[q * n + p] = Dd::ZERO;
                    continue;
                }
                let theta = a[q * n + q].sub(a[p * n + p]).div(apq.add(apq));
                let mut t = one.div(theta.abs().add(theta.mul(theta).add(one).sqrt()));
                if theta.hi < 0.0 {
                    t = t.neg();
                }
                let c = one.div(t.mul(t).add(one).sqrt());
                let s = t.mul(c);
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c.mul(akp).sub(s.mul(akq));
                    a[k * n + q] = s.mul(akp).add(c.mul(akq));
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c.mul(apk).sub(s.mul(aqk));
                    a[q * n + k] = s.mul(apk).add(c.mul(aqk));
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c.mul(vkp).sub(s.mul(vkq));
                    v[k * n + q] = s.mul(vkp).add(c.mul(vkq));
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

fn dd_matmul(a: &[Dd], b: &[Dd], n: usize) -> Vec<Dd> {
    (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            (0..n).fold(Dd::ZERO, |acc, m| acc.add(a[i * n + m].mul(b[m * n + j])))
        })
        .collect()
}

/// `|μa − μb|² + Tr A + Tr B − 2 Tr √(√A B √A)` evaluated in double-double.
fn frechet_oracle(a: &GaussianSummary, b: &GaussianSummary) -> f64 {
    let n = a.dim();
    let lift = |m: &[f64]| m.iter().map(|&x| Dd::new(x)).collect::<Vec<Dd>>();
    let (ca, cb) = (lift(a.cov()), lift(b.cov()));
    let (lam, v) = jacobi(ca.clone(), n);
    let roots: Vec<Dd> = lam.iter().map(|l| l.sqrt()).collect();
    let sqrt_a: Vec<Dd> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            (0..n).fold(Dd::ZERO, |acc, m| acc.add(v[i * n + m].mul(roots[m]).mul(v[j * n + m])))
        })
        .collect();
    let inner = dd_matmul(&dd_matmul(&sqrt_a, &cb, n), &sqrt_a, n);
    let symmetric: Vec<Dd> = (0..n * n).map(|k| {
        let (i, j) = (k / n, k % n);
        inner[i * n + j].add(inner[j * n + i]).mul(Dd::new(0.5))
    }).collect();
    let (mu, _) = jacobi(symmetric, n);
    let cross = mu.iter().fold(Dd::ZERO, |acc, m| acc.add(m.sqrt()));
    let gap = a.mean().iter().zip(b.mean()).fold(Dd::ZERO, |acc, (x, y)| {
        let d = Dd::new(*x).sub(Dd::new(*y));
        acc.add(d.mul(d))
    });
    let trace = |c: &[Dd]| (0..n).fold(Dd::ZERO, |acc, i| acc.add(c[i * n + i]));
    let total = gap.add(trace(&ca)).add(trace(&cb)).sub(cross.add(cross));
    total.hi + total.lo
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> GaussianSummary {
    let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let k = rng.random_range(1..=d + 2);
    let a: Vec<f64> = (0..d * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ridge = 10f64.powf(rng.random_range(-3.0..0.0));
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let v = (0..k).map(|m| a[i * k + m] * a[j * k + m]).sum::<f64>() / k as f64 + if i == j { ridge } else { 0.0 };
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    GaussianSummary::new(mean, cov).expect("valid Gaussian")
}

fn frechet_accuracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for case in 0..FRECHET_CASES {
        let d = rng.random_range(1..=FRECHET_MAX_DIM);
        let (a, b) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let oracle = frechet_oracle(&a, &b);
        let ab = frechet_distance(&a, &b).map_err(|e| e.to_string())?;
        let ba = frechet_distance(&b, &a).map_err(|e| e.to_string())?;
        let mut routes = vec![("eigen", ab)];
        if d == 2 {
            routes.push(("closed form", frechet_distance_2d(&a, &b).map_err(|e| e.to_string())?));
        }
        for (name, got) in routes {
            let rel = (got - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            check(rel <= FRECHET_REL, || format!("case {case} (d = {d}, {name}): {got} vs oracle {oracle}, relative {rel:e}"))?;
        }
        check(ab >= 0.0 && ba >= 0.0, || format!("case {case}: negative distance {ab} / {ba}"))?;
        check((ab - ba).abs() <= FRECHET_SYMMETRY * ab.max(1.0), || format!("case {case}: asymmetric {ab} vs {ba}"))?;
    }
    Ok(format!("{FRECHET_CASES} pairs, d <= {FRECHET_MAX_DIM}, worst relative error {worst:.2e}"))
}

fn masked_equals_full() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for case in 0..MASKED_CASES {
        let (w, h, t) = (rng.random_range(11..40), rng.random_range(11..30), rng.random_range(1..4));
        let mut frames = || -> Result<FrameSequence, String> {
            FrameSequence::new(w, h, (0..t).map(|_| (0..w * h * 3).map(|_| rng.random()).collect()).collect()).map_err(|e| e.to_string())
        };
        let (gt, pred) = (frames()?, frames()?);
        let full = MaskSequence::new(vec![BinaryMask::full(w as u32, h as u32); t]).map_err(|e| e.to_string())?;
        let masks = [full.clone(), full];
        for (name, f) in [("L1", l1 as fn(&_, &_, _) -> _), ("PSNR", psnr), ("SSIM", ssim)] {
            let a = f(&gt, &pred, None).map_err(|e| e.to_string())?.value;
            let b = f(&gt, &pred, Some(&masks[..])).map_err(|e| e.to_string())?.value;
            worst = worst.max((a - b).abs());
            check((a - b).abs() <= MASKED_TOL, || format!("case {case}: {name} full {a} vs masked {b}"))?;
        }
    }
    Ok(format!("{MASKED_CASES} fixtures, largest difference {worst:.1e}"))
}

fn curation_rules(work: &Path) -> Outcome {
    let t = FilterThresholds::default();
    check(
        (t.max_overlap_iou, t.min_area_ratio, t.max_area_ratio, t.min_coverage, t.min_tracking) == (0.1, 0.02, 0.80, 0.40, 0.90),
        || format!("default thresholds {t:?}"),
    )?;
    let suite = work.join("curation");
    tvbench(&["gen-fixtures", "--kind", "curation", "--seed", "5", "--out", path(&suite)])?;
    let out = work.join("curated");
    tvbench(&[
        "curate",
        "--detections",
        path(&suite.join("detections")),
        "--poses",
        path(&suite.join("poses")),
        "--masks",
        path(&suite.join("masks")),
        "--out",
        path(&out),
    ])?;
    let index: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("verdicts.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let clips = index["clips"].as_array().ok_or("verdict index has no clips")?;
    let cases = curation_suite();
    check(clips.len() == cases.len(), || format!("{} verdicts for {} scenes", clips.len(), cases.len()))?;
    for case in &cases {
        let line = clips.iter().find(|c| c["clip_id"] == case.name).ok_or_else(|| format!("{} missing", case.name))?;
        check(line["accepted"] == case.accept, || format!("{}: accepted = {}, expected {}", case.name, line["accepted"], case.accept))?;
        let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out.join(format!("{}.json", case.name))).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let reasons = manifest["verdict"]["reasons"].as_array().ok_or("no reasons array")?;
        for rule in &case.rules {
            check(reasons.iter().any(|r| r["rule"] == rule.id()), || format!("{}: rule {} not reported", case.name, rule.id()))?;
        }
    }
    let accepted = cases.iter().filter(|c| c.accept).count();
    Ok(format!("{} scenes, {accepted} accepted, {} rejected, all as expected", cases.len(), cases.len() - accepted))
}

fn determinism(work: &Path) -> Outcome {
    let (corpus, _) = write_corpus(&work.join("determinism"), &CorpusSpec::fixture(), 99).map_err(|e| e.to_string())?;
    let run = |name: &str, threads: Option<&str>| -> Result<Vec<u8>, String> {
        let out = work.join(name);
        let mut args = vec!["eval", "--track", "all", "--corpus", path(&corpus), "--out", path(&out)];
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        tvbench(&args)?;
        fs::read(&out).map_err(|e| e.to_string())
    };
    let first = run("det_a.json", None)?;
    let second = run("det_b.json", None)?;
    let one = run("det_1.json", Some("1"))?;
    let eight = run("det_8.json", Some("8"))?;
    check(first == second, || "two default runs differ".into())?;
    check(one == eight, || "1-thread and 8-thread reports differ".into())?;
    check(first == one, || "default and 1-thread reports differ".into())?;
    Ok(format!("4 runs, {} identical bytes each", first.len()))
}

fn throughput(work: &Path) -> Outcome {
    let (corpus, _): (PathBuf, CorpusTruth) =
        write_corpus(&work.join("throughput"), &CorpusSpec::throughput(), 1).map_err(|e| e.to_string())?;
    let timed = |threads: usize| -> Result<f64, String> {
        let out = work.join(format!("throughput_{threads}.json"));
        let t = threads.to_string();
        let start = Instant::now();
        tvbench(&["eval", "--track", "1,2", "--threads", &t, "--corpus", path(&corpus), "--out", path(&out)])?;
        Ok(start.elapsed().as_secs_f64())
    };
    let single = timed(1)?;
    let multi = timed(THROUGHPUT_THREADS)?;
    let speedup = single / multi;
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!(
        "100 clips x 2 persons x 300 frames: 1 thread {single:.1} s (limit {THROUGHPUT_SECONDS} s), \
         {THROUGHPUT_THREADS} threads {multi:.1} s, speedup {speedup:.2}x (need {THROUGHPUT_SPEEDUP}x), {cpus} CPU(s) available"
    );
    if single < THROUGHPUT_SECONDS && speedup >= THROUGHPUT_SPEEDUP {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let w = work.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("perfection_fixture", Box::new(|| perfection(w))),
        ("assignment_oracle", Box::new(assignment_oracle)),
        ("identity_swap", Box::new(|| identity_swap(w))),
        ("negative_mota", Box::new(|| negative_mota(w))),
        ("similarity_invariance", Box::new(similarity_invariance)),
        ("finite_difference_analytic", Box::new(finite_differences)),
        ("frechet_oracle", Box::new(frechet_accuracy)),
        ("masked_equals_full", Box::new(masked_equals_full)),
        ("curation_rules", Box::new(|| curation_rules(w))),
        ("determinism", Box::new(|| determinism(w))),
        ("throughput", Box::new(|| throughput(w))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
