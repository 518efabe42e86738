//! Raster types shared by the renderers, segmenters and model clients.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("label {0} does not fit a 16-bit mask")]
    LabelOverflow(u32),
    #[error("expected a single-channel mask, got {0:?}")]
    NotSingleChannel(image::ColorType),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Linear RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [f32; 3] {
        self.pixels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, rgb: [f32; 3]) {
        self.pixels[v * self.width + u] = rgb;
    }

    fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let raw = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// 8-bit RGB PNG encoding.
    pub fn to_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img
            .pixels()
            .map(|p| p.0.map(|c| f32::from(c) / 255.0))
            .collect();
        Ok(Self { width: w as usize, height: h as usize, pixels })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }
}

/// Per-pixel integer labels; 0 is background.
///
/// Binary masks use the same type with labels restricted to `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl InstanceMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Self {
        assert_eq!(labels.len(), width * height, "label buffer size");
        Self { width, height, labels }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.labels[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, label: u32) {
        self.labels[v * self.width + u] = label;
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.iter().all(|&l| l == 0)
    }

    pub fn same_shape(&self, other: &InstanceMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &InstanceMask) -> Result<(), RasterError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(RasterError::DimensionMismatch(self.width, self.height, other.width, other.height))
        }
    }

    /// Sorted distinct non-zero labels.
    pub fn label_set(&self) -> Vec<u32> {
        let mut out: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Binary mask of pixels carrying `label`.
    pub fn select(&self, label: u32) -> InstanceMask {
        let labels = self.labels.iter().map(|&l| u32::from(l == label)).collect();
        InstanceMask { width: self.width, height: self.height, labels }
    }

    /// Binary mask of all non-background pixels.
    pub fn foreground(&self) -> InstanceMask {
        let labels = self.labels.iter().map(|&l| u32::from(l != 0)).collect();
        InstanceMask { width: self.width, height: self.height, labels }
    }

    /// 16-bit single-channel PNG, labels stored verbatim.
    pub fn to_png16(&self) -> Result<Vec<u8>, RasterError> {
        let raw = self
            .labels
            .iter()
            .map(|&l| u16::try_from(l).map_err(|_| RasterError::LabelOverflow(l)))
            .collect::<Result<Vec<u16>, _>>()?;
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// 8-bit PNG with foreground as 255.
    pub fn to_png8_binary(&self) -> Result<Vec<u8>, RasterError> {
        let raw = self.labels.iter().map(|&l| if l != 0 { 255u8 } else { 0 }).collect();
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .expect("buffer length matches dimensions");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes a single-channel PNG. 8-bit and 16-bit grayscale are accepted;
    /// values are taken as labels.
    pub fn from_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let labels = match img {
            image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
            image::DynamicImage::ImageLuma16(b) => {
                b.into_raw().into_iter().map(u32::from).collect()
            }
            other => return Err(RasterError::NotSingleChannel(other.color())),
        };
        Ok(Self { width: w, height: h, labels })
    }

    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.to_png16()?)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        Self::from_png(&std::fs::read(path)?)
    }
}
