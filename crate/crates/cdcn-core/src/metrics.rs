//! Y-channel fidelity metrics.
//!
//! PSNR and SSIM are computed on the luma plane of the BT.601 studio-swing
//! YCbCr transform, the standard super-resolution evaluation convention.
//! Single-channel inputs are treated as already being luma.

use ndarray::{Array2, Array3};

use crate::error::EvalError;
use crate::image::Image;

/// Identical images report this instead of an infinite ratio.
pub const PSNR_CAP_DB: f64 = 100.0;

/// SSIM window side and Gaussian sigma.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// BT.601 studio swing: Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255,
/// mapping [0,1] RGB into [16/255, 235/255].
pub fn rgb_to_y(img: &Image) -> Result<Image, EvalError> {
    if img.channels() != 3 {
        return Err(EvalError::WrongChannelCount(img.channels()));
    }
    let src = img.data();
    let out = Array3::from_shape_fn((img.height(), img.width(), 1), |(i, j, _)| {
        let r = src[[i, j, 0]];
        let g = src[[i, j, 1]];
        let b = src[[i, j, 2]];
        (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
    });
    Ok(Image::new(out))
}

fn luma_plane(img: &Image) -> Result<Array2<f64>, EvalError> {
    let y = match img.channels() {
        1 => img.clone(),
        3 => rgb_to_y(img)?,
        c => return Err(EvalError::WrongChannelCount(c)),
    };
    let (h, w) = (y.height(), y.width());
    Ok(y.into_data().into_shape_with_order((h, w)).expect("1ch"))
}

fn check_same_shape(a: &Image, b: &Image) -> Result<(), EvalError> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(EvalError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB on the luma plane, after cropping
/// `border` pixels from every side. Identical inputs return [`PSNR_CAP_DB`].
pub fn psnr_y(a: &Image, b: &Image, border: usize) -> Result<f64, EvalError> {
    check_same_shape(a, b)?;
    if 2 * border >= a.height() || 2 * border >= a.width() {
        return Err(EvalError::BorderTooLarge {
            border,
            height: a.height(),
            width: a.width(),
        });
    }
    let (h, w) = (a.height() - 2 * border, a.width() - 2 * border);
    let ya = luma_plane(&a.crop(border, border, h, w))?;
    let yb = luma_plane(&b.crop(border, border, h, w))?;
    let mse = ya
        .iter()
        .zip(yb.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / (h * w) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn ssim_window_weights() -> Array2<f64> {
    let c = (SSIM_WINDOW / 2) as isize;
    let mut w = Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(i, j)| {
        let di = (i as isize - c) as f64;
        let dj = (j as isize - c) as f64;
        (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let sum = w.sum();
    w.mapv_inplace(|v| v / sum);
    w
}

/// Single-scale SSIM on the luma plane: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, windows placed at every position
/// where the full window fits (valid mode), uniformly averaged.
pub fn ssim_y(a: &Image, b: &Image) -> Result<f64, EvalError> {
    check_same_shape(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(EvalError::ImageTooSmall {
            height: a.height(),
            width: a.width(),
            window: SSIM_WINDOW,
        });
    }
    let ya = luma_plane(a)?;
    let yb = luma_plane(b)?;
    let w = ssim_window_weights();

    let c1 = (0.01_f64).powi(2);
    let c2 = (0.03_f64).powi(2);
    let (h, wd) = ya.dim();
    let oh = h - SSIM_WINDOW + 1;
    let ow = wd - SSIM_WINDOW + 1;

    // Weighted local moments via direct windowing; the images evaluated
    // here are small enough that separable filtering buys little.
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for di in 0..SSIM_WINDOW {
                for dj in 0..SSIM_WINDOW {
                    let wij = w[[di, dj]];
                    let va = ya[[i + di, j + dj]];
                    let vb = yb[[i + di, j + dj]];
                    mu_a += wij * va;
                    mu_b += wij * vb;
                    aa += wij * va * va;
                    bb += wij * vb * vb;
                    ab += wij * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
        }
    }
    Ok(total / (oh * ow) as f64)
}
