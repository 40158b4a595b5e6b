//! Pixel container shared by the whole pipeline.
//!
//! An [`Image`] is a height x width x channels grid of real intensities,
//! nominally in `[0, 1]`. Values are kept unclamped through arithmetic
//! (detail components are signed residuals); clamping happens only at
//! export boundaries (`to_u8` / PNG save).

use std::path::Path;

use ndarray::{Array3, ArrayView3};

use crate::error::IoError;

/// H x W x C grid of f64 intensities, C in {1, 3}.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Array3<f64>,
}

impl Image {
    /// Wraps an existing grid. Panics on zero-sized dimensions or a channel
    /// count outside {1, 3}; those are programming errors, not inputs.
    pub fn new(data: Array3<f64>) -> Self {
        let (h, w, c) = data.dim();
        assert!(h >= 1 && w >= 1, "image dimensions must be >= 1");
        assert!(c == 1 || c == 3, "channels must be 1 or 3, got {c}");
        Self { data }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::new(Array3::zeros((height, width, channels)))
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(Array3::from_elem((height, width, channels), value))
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn data_mut(&mut self) -> &mut Array3<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    /// Element-wise sum, used to re-assemble structure + detail.
    pub fn add(&self, other: &Image) -> Image {
        assert_eq!(self.data.dim(), other.data.dim(), "shape mismatch in add");
        Image::new(&self.data + &other.data)
    }

    /// Element-wise difference (`self - other`), used for detail labels.
    pub fn sub(&self, other: &Image) -> Image {
        assert_eq!(self.data.dim(), other.data.dim(), "shape mismatch in sub");
        Image::new(&self.data - &other.data)
    }

    /// Affine map `v + offset`, used for the signed-detail visualization.
    pub fn shift(&self, offset: f64) -> Image {
        Image::new(&self.data + offset)
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.data.dim(), other.data.dim(), "shape mismatch in diff");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Center crop to dimensions divisible by `scale`. Returns `self`
    /// unchanged when already divisible.
    pub fn center_crop_to_multiple(&self, scale: usize) -> Image {
        let h = self.height() - self.height() % scale;
        let w = self.width() - self.width() % scale;
        if h == self.height() && w == self.width() {
            return self.clone();
        }
        let top = (self.height() - h) / 2;
        let left = (self.width() - w) / 2;
        self.crop(top, left, h, w)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        assert!(top + height <= self.height() && left + width <= self.width());
        Image::new(
            self.data
                .slice(ndarray::s![top..top + height, left..left + width, ..])
                .to_owned(),
        )
    }

    /// Quantizes to 8-bit with round(v*255), clamping into range first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(bytes: &[u8], height: usize, width: usize, channels: usize) -> Self {
        assert_eq!(bytes.len(), height * width * channels);
        let data = Array3::from_shape_vec(
            (height, width, channels),
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
        .expect("shape checked above");
        Self::new(data)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), IoError> {
        let bytes = self.to_u8();
        let (w, h) = (self.width() as u32, self.height() as u32);
        let result = match self.channels() {
            1 => image::save_buffer(path, &bytes, w, h, image::ColorType::L8),
            3 => image::save_buffer(path, &bytes, w, h, image::ColorType::Rgb8),
            _ => unreachable!("channel count checked at construction"),
        };
        result.map_err(|e| IoError::new(path, std::io::Error::other(e)))
    }

    pub fn load_png(path: &Path) -> Result<Self, IoError> {
        let img = image::open(path).map_err(|e| IoError::new(path, std::io::Error::other(e)))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Ok(Self::from_u8(rgb.as_raw(), h as usize, w as usize, 3))
    }

    /// Writes the raw f32 format used by `--float-out`: magic `CDCNF32`,
    /// three little-endian u32 dims, then f32 samples in H,W,C order.
    pub fn save_f32(&self, path: &Path) -> Result<(), IoError> {
        let mut buf = Vec::with_capacity(19 + self.data.len() * 4);
        buf.extend_from_slice(b"CDCNF32");
        for dim in [self.height(), self.width(), self.channels()] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in self.data.iter() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(path, buf).map_err(|e| IoError::new(path, e))
    }

    pub fn load_f32(path: &Path) -> Result<Self, IoError> {
        let bad = |msg: &str| IoError::new(path, std::io::Error::other(msg.to_string()));
        let buf = std::fs::read(path).map_err(|e| IoError::new(path, e))?;
        if buf.len() < 19 || &buf[..7] != b"CDCNF32" {
            return Err(bad("missing CDCNF32 magic"));
        }
        let dim = |i: usize| {
            u32::from_le_bytes(buf[7 + 4 * i..11 + 4 * i].try_into().unwrap()) as usize
        };
        let (h, w, c) = (dim(0), dim(1), dim(2));
        let n = h * w * c;
        if buf.len() != 19 + n * 4 {
            return Err(bad("truncated f32 payload"));
        }
        let values: Vec<f64> = buf[19..]
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        let data = Array3::from_shape_vec((h, w, c), values).map_err(|_| bad("bad shape"))?;
        Ok(Self::new(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u8_round_trip_is_exact_on_quantized_values() {
        let img = Image::from_u8(&[0, 17, 128, 255, 3, 204], 1, 2, 3);
        let back = Image::from_u8(&img.to_u8(), 1, 2, 3);
        assert_eq!(img.max_abs_diff(&back), 0.0);
    }

    #[test]
    fn center_crop_trims_to_multiple() {
        let img = Image::zeros(10, 13, 3);
        let cropped = img.center_crop_to_multiple(4);
        assert_eq!((cropped.height(), cropped.width()), (8, 12));
        let same = img.center_crop_to_multiple(1);
        assert_eq!((same.height(), same.width()), (10, 13));
    }

    #[test]
    fn f32_file_round_trips_to_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f32");
        let mut img = Image::zeros(4, 5, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i as f64) * 0.017 - 0.3;
        }
        img.save_f32(&path).unwrap();
        let back = Image::load_f32(&path).unwrap();
        assert!(img.max_abs_diff(&back) < 1e-7);
    }

    #[test]
    fn png_round_trip_preserves_quantized_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_u8(&[10, 20, 30, 200, 100, 50], 2, 1, 3);
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(img.max_abs_diff(&back), 0.0);
    }
}
