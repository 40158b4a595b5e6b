//! Degradation and decomposition operators.
//!
//! An HR image is blurred by a Gaussian kernel, blurred again by the cubic
//! anti-aliasing kernel, and subsampled by keeping the upper-left pixel of
//! each s x s block. The structure component is the Gaussian-blurred HR
//! image, the detail component the residual, and the LR image the structure
//! pushed through the remaining pipeline.

use ndarray::Array3;

use crate::error::DegradationError;
use crate::image::Image;
use crate::kernel::{make_bicubic_kernel, Kernel};

/// Scale plus the kernels' shared settings for one degradation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationConfig {
    pub scale: usize,
    /// Cubic-convolution free parameter of the anti-aliasing kernel.
    pub bicubic_a: f64,
}

impl DegradationConfig {
    pub fn new(scale: usize) -> Self {
        Self {
            scale,
            bicubic_a: -0.5,
        }
    }

    pub fn bicubic_kernel(&self) -> Result<Kernel, DegradationError> {
        make_bicubic_kernel(self.scale, self.bicubic_a)
    }
}

/// Training labels produced from one HR image and one blur kernel:
/// structure + detail reassembles the HR image; lr is HR/s in size.
#[derive(Debug, Clone)]
pub struct ComponentTriple {
    pub structure: Image,
    pub detail: Image,
    pub lr: Image,
}

/// Per-channel 2-D correlation with mirror (reflect) padding; output size
/// equals input size. Mirroring never crosses the border more than once,
/// which the `kernel <= image` precondition guarantees.
pub fn blur(img: &Image, kernel: &Kernel) -> Result<Image, DegradationError> {
    let size = kernel.size();
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if size > h || size > w {
        return Err(DegradationError::KernelLargerThanImage {
            kernel: size,
            height: h,
            width: w,
        });
    }
    let radius = (size / 2) as isize;
    let k = kernel.data();
    let src = img.data();

    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let i = if i < 0 { -i - 1 } else { i };
        let i = if i >= n { 2 * n - 1 - i } else { i };
        i as usize
    };

    let mut out = Array3::zeros((h, w, c));
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..size {
                    let sy = reflect(y as isize + ky as isize - radius, h);
                    for kx in 0..size {
                        let sx = reflect(x as isize + kx as isize - radius, w);
                        acc += k[[ky, kx]] * src[[sy, sx, ch]];
                    }
                }
                out[[y, x, ch]] = acc;
            }
        }
    }
    Ok(Image::new(out))
}

/// Keeps the upper-left pixel of each s x s block.
pub fn sfold_downsample(img: &Image, scale: usize) -> Result<Image, DegradationError> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if scale == 0 || h % scale != 0 || w % scale != 0 {
        return Err(DegradationError::NotDivisible {
            height: h,
            width: w,
            scale,
        });
    }
    let src = img.data();
    let out = Array3::from_shape_fn((h / scale, w / scale, c), |(i, j, ch)| {
        src[[i * scale, j * scale, ch]]
    });
    Ok(Image::new(out))
}

/// Full degradation: blur by `k_g`, blur by the cubic kernel, subsample.
/// Bit-identical to `decompose_labels(..).lr` by construction.
pub fn degrade(
    hr: &Image,
    k_g: &Kernel,
    cfg: &DegradationConfig,
) -> Result<Image, DegradationError> {
    let structure = blur(hr, k_g)?;
    lr_from_structure(&structure, cfg)
}

fn lr_from_structure(
    structure: &Image,
    cfg: &DegradationConfig,
) -> Result<Image, DegradationError> {
    let k_b = cfg.bicubic_kernel()?;
    sfold_downsample(&blur(structure, &k_b)?, cfg.scale)
}

/// Produces the (structure, detail, lr) label set for one HR image.
/// The detail image is a signed residual and is stored unclamped.
pub fn decompose_labels(
    hr: &Image,
    k_g: &Kernel,
    cfg: &DegradationConfig,
) -> Result<ComponentTriple, DegradationError> {
    let structure = blur(hr, k_g)?;
    let detail = hr.sub(&structure);
    let lr = lr_from_structure(&structure, cfg)?;
    Ok(ComponentTriple {
        structure,
        detail,
        lr,
    })
}

/// The eight evaluation widths per scale: evenly spaced, endpoints included.
pub fn gaussian8_widths(scale: usize) -> Result<[f64; 8], DegradationError> {
    let (lo, hi) = match scale {
        2 => (0.80, 1.60),
        3 => (1.35, 2.40),
        4 => (1.80, 3.20),
        other => return Err(DegradationError::UnsupportedScale(other, &[2, 3, 4])),
    };
    let step = (hi - lo) / 7.0;
    let mut widths = [0.0; 8];
    for (i, w) in widths.iter_mut().enumerate() {
        *w = lo + step * i as f64;
    }
    widths[7] = hi;
    Ok(widths)
}

/// Width range the training sampler draws isotropic sigmas from.
pub fn training_width_range(scale: usize) -> Result<(f64, f64), DegradationError> {
    match scale {
        2 => Ok((0.2, 2.0)),
        3 => Ok((0.2, 3.0)),
        4 => Ok((0.2, 4.0)),
        other => Err(DegradationError::UnsupportedScale(other, &[2, 3, 4])),
    }
}
