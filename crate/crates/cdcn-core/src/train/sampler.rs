//! Patch sampling: random HR crops, dihedral augmentation, and one fresh
//! blur kernel per patch. Everything is drawn from the caller's RNG, so a
//! fixed seed reproduces the exact sample sequence.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::degradation::{decompose_labels, ComponentTriple, DegradationConfig};
use crate::error::TrainError;
use crate::image::Image;
use crate::kernel::{
    make_anisotropic_gaussian, make_isotropic_gaussian, AnisoKernelSpec, IsoKernelSpec, Kernel,
};

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Isotropic,
    Anisotropic,
}

impl KernelMode {
    pub fn name(&self) -> &'static str {
        match self {
            KernelMode::Isotropic => "isotropic",
            KernelMode::Anisotropic => "anisotropic",
        }
    }

    pub fn parse(s: &str) -> Result<Self, TrainError> {
        match s {
            "isotropic" => Ok(KernelMode::Isotropic),
            "anisotropic" => Ok(KernelMode::Anisotropic),
            other => Err(TrainError::InvalidConfig(format!(
                "unknown kernel_mode {other:?}"
            ))),
        }
    }
}

/// One training example: augmented HR crop, the kernel that degraded it,
/// and the synthesized label triple.
#[derive(Debug, Clone)]
pub struct PatchSample {
    pub hr: Image,
    pub kernel: Kernel,
    pub triple: ComponentTriple,
}

fn rot90_ccw(img: &Image) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.data();
    Image::new(Array3::from_shape_fn((w, h, c), |(i, j, ch)| {
        src[[j, w - 1 - i, ch]]
    }))
}

fn flip_h(img: &Image) -> Image {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let src = img.data();
    Image::new(Array3::from_shape_fn((h, w, c), |(i, j, ch)| {
        src[[i, w - 1 - j, ch]]
    }))
}

/// The eight symmetries of the square: `k % 4` quarter turns, with a
/// horizontal flip first when `k >= 4`.
pub fn dihedral8(img: &Image, k: usize) -> Image {
    assert!(k < 8, "dihedral index out of range");
    let mut out = if k >= 4 { flip_h(img) } else { img.clone() };
    for _ in 0..(k % 4) {
        out = rot90_ccw(&out);
    }
    out
}

/// Draws one sample: image index, crop position, augmentation index, then
/// the kernel, in that RNG order. The isotropic kernel shrinks below its
/// default 21 pixels when the HR crop is smaller than the kernel.
pub fn sample_patch(
    pool: &[Image],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PatchSample, TrainError> {
    let crop_side = cfg.patch_size * cfg.scale;
    if pool.is_empty() {
        return Err(TrainError::PoolTooSmall(crop_side));
    }
    let idx = rng.gen_range(0..pool.len());
    let img = &pool[idx];
    if img.height() < crop_side || img.width() < crop_side {
        return Err(TrainError::PoolTooSmall(crop_side));
    }
    let top = rng.gen_range(0..=img.height() - crop_side);
    let left = rng.gen_range(0..=img.width() - crop_side);
    let crop = img.crop(top, left, crop_side, crop_side);
    let aug = rng.gen_range(0..8);
    let hr = dihedral8(&crop, aug);

    let kernel = match cfg.kernel_mode {
        KernelMode::Isotropic => {
            let (lo, hi) = cfg.width_range;
            let width = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let max_odd = if crop_side.is_multiple_of(2) {
                crop_side - 1
            } else {
                crop_side
            };
            let size = 21.min(max_odd);
            make_isotropic_gaussian(IsoKernelSpec::with_size(width, size))?
        }
        KernelMode::Anisotropic => {
            let spec = AnisoKernelSpec::sample(rng.gen(), AnisoKernelSpec::MAX_NOISE, 11);
            make_anisotropic_gaussian(spec)?
        }
    };
    let triple = decompose_labels(&hr, &kernel, &DegradationConfig::new(cfg.scale))?;
    Ok(PatchSample { hr, kernel, triple })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn checker(h: usize, w: usize) -> Image {
        Image::new(Array3::from_shape_fn((h, w, 3), |(i, j, c)| {
            ((i * 7 + j * 3 + c) % 11) as f64 / 11.0
        }))
    }

    #[test]
    fn dihedral_orbit_has_eight_distinct_elements() {
        let img = checker(8, 8);
        let orbit: Vec<Image> = (0..8).map(|k| dihedral8(&img, k)).collect();
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert!(
                    orbit[i].max_abs_diff(&orbit[j]) > 0.0,
                    "elements {i} and {j} coincide"
                );
            }
        }
        // Identity element.
        assert_eq!(orbit[0].max_abs_diff(&img), 0.0);
        // Four quarter turns return home.
        let mut back = img.clone();
        for _ in 0..4 {
            back = dihedral8(&back, 1);
        }
        assert_eq!(back.max_abs_diff(&img), 0.0);
    }

    #[test]
    fn sample_dimensions_follow_the_lr_side_convention() {
        let pool = vec![checker(300, 300)];
        let mut cfg = TrainConfig::desk_defaults(4).unwrap();
        cfg.patch_size = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_patch(&pool, &cfg, &mut rng).unwrap();
        assert_eq!((s.hr.height(), s.hr.width()), (256, 256));
        assert_eq!((s.triple.lr.height(), s.triple.lr.width()), (64, 64));
        assert_eq!(
            (s.triple.structure.height(), s.triple.detail.height()),
            (256, 256)
        );
    }

    #[test]
    fn labels_reassemble_the_crop() {
        let pool = vec![checker(96, 120)];
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        cfg.patch_size = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let s = sample_patch(&pool, &cfg, &mut rng).unwrap();
            assert!(s.triple.structure.add(&s.triple.detail).max_abs_diff(&s.hr) < 1e-12);
        }
    }

    #[test]
    fn same_seed_reproduces_the_sequence() {
        let pool = vec![checker(100, 100), checker(80, 90)];
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        cfg.patch_size = 12;
        cfg.kernel_mode = KernelMode::Anisotropic;
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..4)
                .map(|_| sample_patch(&pool, &cfg, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = draw(7);
        let b = draw(7);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.hr.max_abs_diff(&y.hr), 0.0);
            assert_eq!(x.kernel, y.kernel);
        }
    }

    #[test]
    fn degenerate_width_range_fixes_the_kernel() {
        let pool = vec![checker(100, 100)];
        let mut cfg = TrainConfig::desk_defaults(2).unwrap();
        cfg.patch_size = 16;
        cfg.width_range = (1.3, 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample_patch(&pool, &cfg, &mut rng).unwrap();
        let b = sample_patch(&pool, &cfg, &mut rng).unwrap();
        assert_eq!(a.kernel, b.kernel);
    }

    #[test]
    fn too_small_images_are_rejected() {
        let pool = vec![checker(30, 30)];
        let cfg = TrainConfig::desk_defaults(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            sample_patch(&pool, &cfg, &mut rng),
            Err(TrainError::PoolTooSmall(_))
        ));
    }
}
