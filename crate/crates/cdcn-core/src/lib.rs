//! Blind super-resolution built on explicit degradation modelling.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`kernel`] / [`degradation`]: Gaussian and cubic anti-aliasing kernel
//!   synthesis, the blur/subsample degradation operators, and the
//!   structure/detail/LR label decomposition.
//! - [`model`]: the dual-path component network (CDCN) as a pure forward
//!   computation over an explicit parameter store, plus checkpoints.
//! - [`train`]: the degradation-driven loss, patch sampling, Adam, and the
//!   training loop.
//! - [`metrics`] / [`protocol`]: Y-channel PSNR/SSIM and the Gaussian8 and
//!   anisotropic benchmark harnesses.

pub mod degradation;
pub mod error;
pub mod image;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod protocol;
pub mod resize;
pub mod train;

pub use degradation::{
    decompose_labels, degrade, gaussian8_widths, training_width_range, ComponentTriple,
    DegradationConfig,
};
pub use image::Image;
pub use kernel::{
    make_anisotropic_gaussian, make_bicubic_kernel, make_isotropic_gaussian, AnisoKernelSpec,
    IsoKernelSpec, Kernel,
};
