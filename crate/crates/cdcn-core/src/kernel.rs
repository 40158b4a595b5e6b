//! Blur-kernel synthesis: isotropic / anisotropic Gaussians, the cubic
//! anti-aliasing kernel that stands in for bicubic downsampling, and the
//! text format kernels are exchanged in.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DegradationError, IoError};

/// Square odd-sized grid, entries >= 0 and summing to 1 (within 1e-6).
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    data: Array2<f64>,
}

/// Isotropic Gaussian descriptor: width is the sigma in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoKernelSpec {
    pub width: f64,
    pub size: usize,
}

impl IsoKernelSpec {
    pub fn new(width: f64) -> Self {
        Self { width, size: 21 }
    }

    pub fn with_size(width: f64, size: usize) -> Self {
        Self { width, size }
    }
}

/// Anisotropic Gaussian descriptor with per-entry multiplicative noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoKernelSpec {
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub size: usize,
}

impl AnisoKernelSpec {
    pub const LAMBDA_RANGE: (f64, f64) = (0.6, 5.0);
    pub const MAX_NOISE: f64 = 0.25;

    pub fn new(lambda1: f64, lambda2: f64, theta: f64, noise_level: f64, seed: u64) -> Self {
        Self {
            lambda1,
            lambda2,
            theta,
            noise_level,
            seed,
            size: 11,
        }
    }

    /// Draws axis lengths uniformly in [0.6, 5], the rotation uniformly in
    /// [-pi, pi], all from the given seed. `seed` also drives the
    /// multiplicative noise, so the resulting kernel is a pure function of it.
    pub fn sample(seed: u64, noise_level: f64, size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = Self::LAMBDA_RANGE;
        Self {
            lambda1: rng.gen_range(lo..hi),
            lambda2: rng.gen_range(lo..hi),
            theta: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            noise_level,
            seed,
            size,
        }
    }

    fn validate(&self) -> Result<(), DegradationError> {
        let (lo, hi) = Self::LAMBDA_RANGE;
        for lambda in [self.lambda1, self.lambda2] {
            if !(lo..=hi).contains(&lambda) {
                return Err(DegradationError::LambdaOutOfRange(lambda));
            }
        }
        if !(0.0..=Self::MAX_NOISE).contains(&self.noise_level) {
            return Err(DegradationError::NoiseTooLarge(self.noise_level));
        }
        check_size(self.size)?;
        Ok(())
    }
}

fn check_size(size: usize) -> Result<(), DegradationError> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(DegradationError::BadKernelSize(size));
    }
    Ok(())
}

impl Kernel {
    /// Wraps a raw grid, renormalizing it to sum 1. Panics on non-square,
    /// even-sized or non-positive-sum grids.
    pub fn from_grid(data: Array2<f64>) -> Self {
        let (h, w) = data.dim();
        assert_eq!(h, w, "kernel must be square");
        assert!(h % 2 == 1, "kernel size must be odd");
        let sum: f64 = data.sum();
        assert!(sum > 0.0, "kernel must have positive mass");
        Self { data: data / sum }
    }

    /// Identity element of the blur: 1 at the center, 0 elsewhere.
    pub fn delta(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let mut data = Array2::zeros((size, size));
        data[[size / 2, size / 2]] = 1.0;
        Self { data }
    }

    pub fn size(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> ndarray::ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn sum(&self) -> f64 {
        self.data.sum()
    }

    pub fn center_value(&self) -> f64 {
        self.data[[self.size() / 2, self.size() / 2]]
    }
}

/// Discretized centered 2-D isotropic Gaussian, normalized to sum 1.
pub fn make_isotropic_gaussian(spec: IsoKernelSpec) -> Result<Kernel, DegradationError> {
    if spec.width <= 0.0 {
        return Err(DegradationError::NonPositiveWidth(spec.width));
    }
    check_size(spec.size)?;
    let c = (spec.size / 2) as isize;
    let inv_two_sigma2 = 1.0 / (2.0 * spec.width * spec.width);
    let data = Array2::from_shape_fn((spec.size, spec.size), |(i, j)| {
        let di = (i as isize - c) as f64;
        let dj = (j as isize - c) as f64;
        (-(di * di + dj * dj) * inv_two_sigma2).exp()
    });
    Ok(Kernel::from_grid(data))
}

/// Anisotropic Gaussian built from diag(l1^2, l2^2) rotated by theta, with
/// i.i.d. uniform multiplicative noise in [1-nl, 1+nl] drawn from the seed,
/// then renormalized. Deterministic given the spec.
pub fn make_anisotropic_gaussian(spec: AnisoKernelSpec) -> Result<Kernel, DegradationError> {
    spec.validate()?;
    // Inverse covariance of R diag(l1^2, l2^2) R^T.
    let (sin, cos) = spec.theta.sin_cos();
    let inv1 = 1.0 / (spec.lambda1 * spec.lambda1);
    let inv2 = 1.0 / (spec.lambda2 * spec.lambda2);
    let a = cos * cos * inv1 + sin * sin * inv2;
    let b = sin * cos * (inv1 - inv2);
    let d = sin * sin * inv1 + cos * cos * inv2;

    let c = (spec.size / 2) as isize;
    let mut data = Array2::from_shape_fn((spec.size, spec.size), |(i, j)| {
        let y = (i as isize - c) as f64;
        let x = (j as isize - c) as f64;
        (-0.5 * (a * x * x + 2.0 * b * x * y + d * y * y)).exp()
    });

    if spec.noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in data.iter_mut() {
            let factor = rng.gen_range(1.0 - spec.noise_level..1.0 + spec.noise_level);
            *v = (*v * factor).max(0.0);
        }
    }
    Ok(Kernel::from_grid(data))
}

/// Cubic-convolution (Keys) interpolation weight.
pub fn cubic_weight(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// 1-D anti-aliasing taps for integer factor `scale`: the cubic filter
/// stretched by the scale and phase-shifted so that composing this blur
/// with the upper-left s-fold subsampler reproduces a standard bicubic
/// resize. Tap for image offset m lives at index `center + m`.
pub fn bicubic_taps(scale: usize, a: f64) -> Vec<f64> {
    let s = scale as f64;
    let phase = (s - 1.0) / 2.0;
    let m_min = (phase - 2.0 * s).ceil() as isize;
    let m_max = (phase + 2.0 * s).floor() as isize;
    let half = m_min.unsigned_abs().max(m_max.unsigned_abs());
    let size = 2 * half + 1;
    let c = half as isize;
    let mut taps = vec![0.0; size];
    for m in m_min..=m_max {
        taps[(c + m) as usize] = cubic_weight((m as f64 - phase) / s, a) / s;
    }
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Separable 2-D kernel from [`bicubic_taps`], normalized to sum 1.
/// Scale 1 degenerates to the delta kernel.
pub fn make_bicubic_kernel(scale: usize, a: f64) -> Result<Kernel, DegradationError> {
    if scale < 1 {
        return Err(DegradationError::UnsupportedScale(scale, &[1, 2, 3, 4]));
    }
    let taps = bicubic_taps(scale, a);
    let n = taps.len();
    let data = Array2::from_shape_fn((n, n), |(i, j)| taps[i] * taps[j]);
    Ok(Kernel::from_grid(data))
}

/// Writes the text format: first line `size spec_token`, then `size` rows
/// of space-separated decimals. Decimals use the shortest round-trip
/// representation, so reading back is exact.
pub fn save_kernel_text(kernel: &Kernel, spec_token: &str, path: &Path) -> Result<(), IoError> {
    debug_assert!(
        !spec_token.contains(char::is_whitespace),
        "spec token must be a single word"
    );
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", kernel.size(), spec_token);
    for row in kernel.data().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    std::fs::write(path, out).map_err(|e| IoError::new(path, e))
}

/// Reads the text format back; returns the kernel and its spec token.
pub fn load_kernel_text(path: &Path) -> Result<(Kernel, String), DegradationError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DegradationError::MalformedKernelFile(format!("{}: {e}", path.display())))?;
    let bad = |msg: String| DegradationError::MalformedKernelFile(msg);
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut parts = header.split_whitespace();
    let size: usize = parts
        .next()
        .ok_or_else(|| bad("missing size".into()))?
        .parse()
        .map_err(|e| bad(format!("bad size: {e}")))?;
    let token = parts.next().unwrap_or("unknown").to_string();
    if size == 0 || size.is_multiple_of(2) {
        return Err(DegradationError::BadKernelSize(size));
    }
    let mut data = Array2::zeros((size, size));
    for i in 0..size {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing row {i}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("row {i}: {e}")))?;
        if values.len() != size {
            return Err(bad(format!(
                "row {i} has {} entries, expected {size}",
                values.len()
            )));
        }
        for (j, v) in values.into_iter().enumerate() {
            data[[i, j]] = v;
        }
    }
    Ok((Kernel { data }, token))
}
