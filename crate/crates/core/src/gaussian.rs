//! Gaussian summaries of vector samples and the Fréchet distance between
//! them, shared by the motion (FVMD) and feature (FVD/FID/CLIP-FID) metrics.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("non-finite value in samples or moments")]
    NonFinite,
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("covariance has eigenvalue {0:e} below the clamping tolerance")]
    NotPositiveSemidefinite(f64),
}

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_TOL: f64 = 1e-8;

/// Mean vector and covariance matrix (row-major, `dim x dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl GaussianSummary {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self, GaussianError> {
        let d = mean.len();
        if cov.len() != d * d {
            return Err(GaussianError::DimMismatch(d * d, cov.len()));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                worst = worst.max((cov[i * d + j] - cov[j * d + i]).abs());
            }
        }
        if worst > SYMMETRY_TOL * scale {
            return Err(GaussianError::Asymmetric(worst));
        }
        let summary = Self { mean, cov };
        if d > 0 {
            let lowest = summary.cov_matrix().symmetric_eigenvalues().min();
            if lowest < -EIGEN_TOL * scale {
                return Err(GaussianError::NotPositiveSemidefinite(lowest));
            }
        }
        Ok(summary)
    }

    /// Sample mean and unbiased (`n - 1`) covariance of `n` row vectors.
    pub fn fit(samples: &[f64], dim: usize) -> Result<Self, GaussianError> {
        let n = if dim == 0 { 0 } else { samples.len() / dim };
        if dim == 0 || samples.len() % dim != 0 {
            return Err(GaussianError::DimMismatch(dim, samples.len()));
        }
        if n < 2 {
            return Err(GaussianError::TooFewSamples(n));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(GaussianError::NonFinite);
        }
        let mut mean = vec![0.0; dim];
        for row in samples.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; dim * dim];
        let mut centred = vec![0.0; dim];
        for row in samples.chunks_exact(dim) {
            for (c, (v, m)) in centred.iter_mut().zip(row.iter().zip(&mean)) {
                *c = v - m;
            }
            for i in 0..dim {
                let ci = centred[i];
                for j in i..dim {
                    cov[i * dim + j] += ci * centred[j];
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] / denom;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov)
    }

    fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.cov[i * self.dim() + i]).sum()
    }

    fn mean_gap(&self, other: &GaussianSummary) -> f64 {
        self.mean.iter().zip(&other.mean).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Principal square root of a symmetric PSD matrix, clamping negative
/// eigenvalues to zero.
fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    out
}

fn sum_sqrt_eigenvalues(mut m: DMatrix<f64>) -> f64 {
    symmetrize(&mut m);
    m.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^{1/2})`, with the cross term taken as
/// `Tr((Σa^{1/2} Σb Σa^{1/2})^{1/2})`, which shares its spectrum and stays
/// symmetric. Clamped at zero.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, GaussianError> {
    if a.dim() != b.dim() {
        return Err(GaussianError::DimMismatch(a.dim(), b.dim()));
    }
    if a.dim() == 0 || a == b {
        return Ok(0.0);
    }
    let root_a = psd_sqrt(&a.cov_matrix());
    let inner = &root_a * b.cov_matrix() * &root_a;
    let cross = sum_sqrt_eigenvalues(inner);
    Ok((a.mean_gap(b) + a.trace() + b.trace() - 2.0 * cross).max(0.0))
}

/// Closed-form Fréchet distance for 2D Gaussians.
///
/// For PSD `A`, `B` the eigenvalues of `AB` are real and non-negative, so
/// `Tr √(AB) = √(Tr(AB) + 2 √det(AB))`.
pub fn frechet_distance_2d(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64, GaussianError> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(GaussianError::DimMismatch(a.dim(), 2));
    }
    if a == b {
        return Ok(0.0);
    }
    let (p, q) = (&a.cov, &b.cov);
    let tr_prod = p[0] * q[0] + p[1] * q[2] + p[2] * q[1] + p[3] * q[3];
    let det = (p[0] * p[3] - p[1] * p[2]) * (q[0] * q[3] - q[1] * q[2]);
    let cross = (tr_prod + 2.0 * det.max(0.0).sqrt()).max(0.0).sqrt();
    Ok((a.mean_gap(b) + a.trace() + b.trace() - 2.0 * cross).max(0.0))
}

/// Fréchet distance between the Gaussians fitted to two sample sets
/// (`n x dim` and `m x dim`, row-major).
///
/// When `dim` exceeds the smaller sample count the covariances are rank
/// deficient and the cross term is computed in sample space instead: with
/// centred data `X`, `Y`, `Tr √(Σx Σy)` equals the nuclear norm of `X Yᵀ`
/// divided by `√((n−1)(m−1))`.
pub fn frechet_from_samples(x: &[f64], y: &[f64], dim: usize) -> Result<f64, GaussianError> {
    let gx = GaussianSummary::fit(x, dim)?;
    let gy = GaussianSummary::fit(y, dim)?;
    let (n, m) = (x.len() / dim, y.len() / dim);
    if dim <= n.min(m) {
        return frechet_distance(&gx, &gy);
    }
    let centred = |data: &[f64], g: &GaussianSummary, rows: usize| {
        DMatrix::from_fn(rows, dim, |i, j| data[i * dim + j] - g.mean[j])
    };
    let xc = centred(x, &gx, n);
    let yc = centred(y, &gy, m);
    let k = &xc * yc.transpose();
    let gram = if n <= m { &k * k.transpose() } else { k.transpose() * &k };
    let nuclear: f64 = {
        let mut g = gram;
        symmetrize(&mut g);
        g.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum()
    };
    let cross = nuclear / (((n - 1) * (m - 1)) as f64).sqrt();
    Ok((gx.mean_gap(&gy) + gx.trace() + gy.trace() - 2.0 * cross).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(mean: &[f64], cov: &[f64]) -> GaussianSummary {
        GaussianSummary::new(mean.to_vec(), cov.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let g = gauss(&[1.0, 2.0], &[2.0, 0.5, 0.5, 1.0]);
        assert!(frechet_distance(&g, &g).unwrap() < 1e-12);
        assert!(frechet_distance_2d(&g, &g).unwrap() < 1e-12);
    }

    #[test]
    fn mean_shift_only() {
        let a = gauss(&[0.0], &[1.0]);
        let b = gauss(&[3.0], &[1.0]);
        assert!((frechet_distance(&a, &b).unwrap() - 9.0).abs() < 1e-12);
        let a = gauss(&[0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        let b = gauss(&[2.0, 0.0], &[1.0, 0.0, 0.0, 0.0]);
        assert!((frechet_distance_2d(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        assert!((frechet_distance(&a, &b).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_unbiased() {
        let g = GaussianSummary::fit(&[1.0, 3.0, 5.0], 1).unwrap();
        assert_eq!(g.mean(), &[3.0]);
        assert_eq!(g.cov(), &[4.0]);
        assert_eq!(GaussianSummary::fit(&[1.0, 2.0], 2), Err(GaussianError::TooFewSamples(1)));
    }

    #[test]
    fn rejects_bad_covariances() {
        assert!(matches!(GaussianSummary::new(vec![0.0, 0.0], vec![1.0, 0.5, 0.4, 1.0]), Err(GaussianError::Asymmetric(_))));
        assert!(matches!(GaussianSummary::new(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]), Err(GaussianError::NotPositiveSemidefinite(_))));
        assert!(matches!(GaussianSummary::new(vec![f64::NAN], vec![1.0]), Err(GaussianError::NonFinite)));
    }

    fn random_samples(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Vec<f64> {
        (0..n * d).map(|i| rng.random_range(-1.0..1.0) * (1.0 + (i % d) as f64 * 0.3) + shift).collect()
    }

    #[test]
    fn two_d_closed_form_agrees_with_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = GaussianSummary::fit(&random_samples(&mut rng, 30, 2, 0.0), 2).unwrap();
            let b = GaussianSummary::fit(&random_samples(&mut rng, 40, 2, 0.5), 2).unwrap();
            let x = frechet_distance_2d(&a, &b).unwrap();
            let y = frechet_distance(&a, &b).unwrap();
            assert!((x - y).abs() < 1e-10 * (1.0 + y), "{x} vs {y}");
        }
    }

    #[test]
    fn sample_space_route_matches_covariance_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, m, d) in [(6, 9, 12), (10, 5, 8), (4, 4, 20)] {
            let x = random_samples(&mut rng, n, d, 0.0);
            let y = random_samples(&mut rng, m, d, 0.2);
            let fast = frechet_from_samples(&x, &y, d).unwrap();
            let slow = frechet_distance(&GaussianSummary::fit(&x, d).unwrap(), &GaussianSummary::fit(&y, d).unwrap()).unwrap();
            // The covariance route takes square roots of round-off sized
            // eigenvalues here, so it only keeps about half the digits.
            assert!((fast - slow).abs() < 1e-6 * (1.0 + slow), "{fast} vs {slow}");
        }
    }

    #[test]
    fn symmetric_and_orthogonally_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 3;
        let x = random_samples(&mut rng, 20, d, 0.0);
        let y = random_samples(&mut rng, 25, d, 0.4);
        let (gx, gy) = (GaussianSummary::fit(&x, d).unwrap(), GaussianSummary::fit(&y, d).unwrap());
        let ab = frechet_distance(&gx, &gy).unwrap();
        let ba = frechet_distance(&gy, &gx).unwrap();
        assert!((ab - ba).abs() < 1e-8);
        // Rotation about the z axis followed by a flip of x.
        let (s, c) = 0.7f64.sin_cos();
        let q = [[-c, s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let rot = |v: &[f64]| -> Vec<f64> {
            v.chunks_exact(3).flat_map(|r| (0..3).map(move |i| q[i][0] * r[0] + q[i][1] * r[1] + q[i][2] * r[2])).collect()
        };
        let rx = GaussianSummary::fit(&rot(&x), d).unwrap();
        let ry = GaussianSummary::fit(&rot(&y), d).unwrap();
        assert!((frechet_distance(&rx, &ry).unwrap() - ab).abs() < 1e-6);
    }
}
