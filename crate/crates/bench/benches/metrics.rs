//! Hot paths of the engine: assignment, HOTA, SSIM, Fréchet distance and the pose metrics.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tvbench_core::assignment::{solve_assignment, CostMatrix};
use tvbench_core::gaussian::{frechet_distance, GaussianSummary};
use tvbench_core::pose::{fvmd, mpjpe_2d, pose_heat_ssim, smooth_rms};
use tvbench_core::ssim::{ssim, SsimParams};
use tvbench_core::synth::{synth_clip, CorpusSpec};
use tvbench_core::tracking::{compute_clear, compute_hota, compute_identity};

fn assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("assignment");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [8, 32, 128] {
        let m = CostMatrix::from_fn(n, n + n / 4, |_, _| rng.random_range(0.0..1.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| solve_assignment(black_box(m))));
    }
    group.finish();
}

fn tracking(c: &mut Criterion) {
    let spec = CorpusSpec { frames: 300, perfect: false, video: false, masks: false, ..CorpusSpec::fixture() };
    let clip = synth_clip(&spec, 3);
    let mut group = c.benchmark_group("tracking_300_frames");
    group.bench_function("hota", |b| b.iter(|| compute_hota(black_box(&clip.gt_tracks), black_box(&clip.pred_tracks))));
    group.bench_function("clear", |b| b.iter(|| compute_clear(&clip.gt_tracks, &clip.pred_tracks, 0.5)));
    group.bench_function("identity", |b| b.iter(|| compute_identity(&clip.gt_tracks, &clip.pred_tracks, 0.5)));
    group.finish();
}

fn ssim_plane(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (w, h) = (256, 256);
    let a: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect();
    let b: Vec<f64> = a.iter().map(|v| (v + rng.random_range(-10.0..10.0)).clamp(0.0, 255.0)).collect();
    let params = SsimParams::standard(255.0);
    c.bench_function("ssim_256x256", |bench| bench.iter(|| ssim(black_box(&a), black_box(&b), w, h, &params)));
}

fn summary(rng: &mut ChaCha8Rng, d: usize) -> GaussianSummary {
    let k = d + 4;
    let x: Vec<f64> = (0..d * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = (0..k).map(|m| x[i * k + m] * x[j * k + m]).sum::<f64>() / k as f64;
        }
    }
    GaussianSummary::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), cov).expect("valid summary")
}

fn frechet(c: &mut Criterion) {
    let mut group = c.benchmark_group("frechet");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in [16, 64, 256] {
        let pair = (summary(&mut rng, d), summary(&mut rng, d));
        group.bench_with_input(BenchmarkId::from_parameter(d), &pair, |b, (x, y)| b.iter(|| frechet_distance(x, y)));
    }
    group.finish();
}

fn pose(c: &mut Criterion) {
    let spec = CorpusSpec { frames: 60, perfect: false, video: false, masks: false, ..CorpusSpec::fixture() };
    let clip = synth_clip(&spec, 5);
    let (w, h) = (spec.width as usize, spec.height as usize);
    let mut group = c.benchmark_group("pose_60_frames");
    group.sample_size(10);
    group.bench_function("mpjpe", |b| b.iter(|| mpjpe_2d(&clip.gt_poses, &clip.pred_poses)));
    group.bench_function("smooth_rms", |b| b.iter(|| smooth_rms(&clip.pred_poses)));
    group.bench_function("fvmd", |b| b.iter(|| fvmd(&clip.gt_poses, &clip.pred_poses)));
    group.bench_function("heat_ssim", |b| b.iter(|| pose_heat_ssim(&clip.gt_poses, &clip.pred_poses, w, h)));
    group.finish();
}

criterion_group!(benches, assignment, tracking, ssim_plane, frechet, pose);
criterion_main!(benches);
