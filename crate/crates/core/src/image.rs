//! Decoded RGB rasters with samples in `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};

/// An RGB image stored row-major, interleaved, as `f32` samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    /// Smallest side that still leaves a non-empty grid after four 2x poolings.
    pub const MIN_SIDE: usize = 32;

    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("empty raster {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("sample {v} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a per-pixel closure. Values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                pixels.extend(rgb.iter().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }));
            }
        }
        Image::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        Image::from_fn(width, height, |_, _| rgb)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(Image::from_dynamic(&decoded))
    }

    /// Converts any decoded image to RGB; alpha is dropped and no color management is applied.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        Image::from_rgb8(&img.to_rgb8())
    }

    pub fn from_rgb8(rgb: &RgbImage) -> Self {
        Image {
            width: rgb.width() as usize,
            height: rgb.height() as usize,
            pixels: rgb.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect(),
        }
    }

    /// Quantizes to 8 bits per channel (round to nearest).
    pub fn to_rgb8(&self) -> RgbImage {
        let mut out = RgbImage::new(self.width as u32, self.height as u32);
        for (x, y, px) in out.enumerate_pixels_mut() {
            let c = self.pixel(x as usize, y as usize);
            *px = Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        }
        out
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| Error::InvalidImage(format!("png encode: {e}")))?;
        Ok(buf.into_inner())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
            Error::Decode {
                path: "<embedded png>".into(),
                message: e.to_string(),
            }
        })?;
        Ok(Image::from_dynamic(&decoded))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8().save(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::InvalidImage(other.to_string()),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB samples, row-major.
    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// True when both sides meet [`Image::MIN_SIDE`].
    pub fn meets_backbone_minimum(&self) -> bool {
        self.width >= Self::MIN_SIDE && self.height >= Self::MIN_SIDE
    }
}
