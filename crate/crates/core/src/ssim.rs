//! Gaussian-window structural similarity on single planes and on short
//! temporal stacks of planes, evaluated in "valid" mode (only windows that
//! fit entirely inside the plane).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsimError {
    #[error("plane {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("plane buffers do not match {width}x{height}x{depth}")]
    Shape { width: usize, height: usize, depth: usize },
    #[error("mask covers no window centre")]
    EmptyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl SsimParams {
    /// 11x11 window, sigma 1.5, K1 = 0.01, K2 = 0.03 over the given range.
    pub fn standard(data_range: f64) -> Self {
        Self { window: 11, sigma: 1.5, k1: 0.01, k2: 0.03, data_range }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }
}

/// Normalised 1D Gaussian weights of length `size`, centred.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let centre = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-(i as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Per-window SSIM values; entry `(x, y)` belongs to the window centred on
/// plane pixel `(x + offset, y + offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub offset: usize,
    pub values: Vec<f64>,
}

impl SsimMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over windows whose centre pixel is set in the plane-sized,
    /// row-major `mask`.
    pub fn masked_mean(&self, mask: &[bool], plane_width: usize) -> Result<f64, SsimError> {
        let (mut sum, mut n) = (0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if mask[(y + self.offset) * plane_width + x + self.offset] {
                    sum += self.values[y * self.width + x];
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(SsimError::EmptyRegion);
        }
        Ok(sum / n as f64)
    }
}

/// Horizontal then vertical valid-mode filtering of a row-major plane into
/// `out`, using `rows` as scratch.
fn filter_valid(plane: &[f64], width: usize, height: usize, kernel: &[f64], rows: &mut [f64], out: &mut [f64]) {
    let k = kernel.len();
    let (ow, oh) = (width + 1 - k, height + 1 - k);
    for y in 0..height {
        let src = &plane[y * width..(y + 1) * width];
        let dst = &mut rows[y * ow..(y + 1) * ow];
        dst.fill(0.0);
        for (i, w) in kernel.iter().enumerate() {
            for (d, v) in dst.iter_mut().zip(&src[i..i + ow]) {
                *d += w * v;
            }
        }
    }
    out[..ow * oh].fill(0.0);
    for y in 0..oh {
        let dst = &mut out[y * ow..(y + 1) * ow];
        for (i, w) in kernel.iter().enumerate() {
            let src = &rows[(y + i) * ow..(y + i + 1) * ow];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
    }
}

/// Spatially filtered first and second moments of one plane pair: local
/// means of `a`, `b`, `a²`, `b²` and `ab` for every valid window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    width: usize,
    height: usize,
    offset: usize,
    moments: [Vec<f64>; 5],
}

impl WindowStats {
    pub fn new(a: &[f64], b: &[f64], width: usize, height: usize, params: &SsimParams) -> Result<Self, SsimError> {
        if a.len() != width * height || b.len() != width * height {
            return Err(SsimError::Shape { width, height, depth: 1 });
        }
        let k = params.window;
        if width < k || height < k {
            return Err(SsimError::TooSmall { width, height, window: k });
        }
        let spatial = gaussian_kernel(k, params.sigma);
        let (ow, oh) = (width + 1 - k, height + 1 - k);
        let mut rows = vec![0.0; ow * height];
        let mut product = vec![0.0; width * height];
        let mut moments: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; ow * oh]);
        filter_valid(a, width, height, &spatial, &mut rows, &mut moments[0]);
        filter_valid(b, width, height, &spatial, &mut rows, &mut moments[1]);
        for (o, x) in product.iter_mut().zip(a) {
            *o = x * x;
        }
        filter_valid(&product, width, height, &spatial, &mut rows, &mut moments[2]);
        for (o, y) in product.iter_mut().zip(b) {
            *o = y * y;
        }
        filter_valid(&product, width, height, &spatial, &mut rows, &mut moments[3]);
        for ((o, x), y) in product.iter_mut().zip(a).zip(b) {
            *o = x * y;
        }
        filter_valid(&product, width, height, &spatial, &mut rows, &mut moments[4]);
        Ok(Self { width: ow, height: oh, offset: k / 2, moments })
    }
}

/// SSIM map of a temporal stack given the per-plane window statistics, with
/// a Gaussian temporal window whose extent equals the stack depth.
pub fn ssim_map_from_stats(stack: &[&WindowStats], params: &SsimParams) -> Result<SsimMap, SsimError> {
    let Some(first) = stack.first() else {
        return Err(SsimError::Shape { width: 0, height: 0, depth: 0 });
    };
    let (ow, oh) = (first.width, first.height);
    if stack.iter().any(|s| s.width != ow || s.height != oh || s.offset != first.offset) {
        return Err(SsimError::Shape { width: ow, height: oh, depth: stack.len() });
    }
    let temporal = gaussian_kernel(stack.len(), params.sigma);
    let (c1, c2) = (params.c1(), params.c2());
    let values = (0..ow * oh)
        .map(|i| {
            let mut m = [0.0f64; 5];
            for (s, tw) in stack.iter().zip(&temporal) {
                for (acc, plane) in m.iter_mut().zip(&s.moments) {
                    *acc += tw * plane[i];
                }
            }
            let [mu_a, mu_b, e_aa, e_bb, e_ab] = m;
            let var_a = e_aa - mu_a * mu_a;
            let var_b = e_bb - mu_b * mu_b;
            let cov = e_ab - mu_a * mu_b;
            ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
        })
        .collect();
    Ok(SsimMap { width: ow, height: oh, offset: first.offset, values })
}

/// SSIM map over a stack of `planes` (each `width x height`, row-major) with
/// a separable Gaussian window whose temporal extent equals the stack depth.
pub fn ssim_map_stack(a: &[&[f64]], b: &[&[f64]], width: usize, height: usize, params: &SsimParams) -> Result<SsimMap, SsimError> {
    let depth = a.len();
    if depth == 0 || b.len() != depth || a.iter().chain(b).any(|p| p.len() != width * height) {
        return Err(SsimError::Shape { width, height, depth });
    }
    let stats = a.iter().zip(b).map(|(pa, pb)| WindowStats::new(pa, pb, width, height, params)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&WindowStats> = stats.iter().collect();
    ssim_map_from_stats(&refs, params)
}

pub fn ssim_map(a: &[f64], b: &[f64], width: usize, height: usize, params: &SsimParams) -> Result<SsimMap, SsimError> {
    ssim_map_stack(&[a], &[b], width, height, params)
}

/// Mean SSIM of two planes.
pub fn ssim(a: &[f64], b: &[f64], width: usize, height: usize, params: &SsimParams) -> Result<f64, SsimError> {
    Ok(ssim_map(a, b, width, height, params)?.mean())
}
