//! Synthetic distortions used as baselines and in monotonicity checks.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;

use crate::error::{Error, Result};
use crate::image::Image;

/// Separable Gaussian blur with edge replication; kernel radius `ceil(3 sigma)`.
pub fn gaussian_blur(img: &Image, sigma: f32) -> Result<Image> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("blur sigma must be > 0, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-((i * i) as f32) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.pixels();
    let mut tmp = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 3];
            for (k, &wt) in kernel.iter().enumerate() {
                let sx = (x + k as isize - radius).clamp(0, w - 1);
                let i = ((y * w + sx) * 3) as usize;
                for c in 0..3 {
                    acc[c] += wt * src[i + c];
                }
            }
            let o = ((y * w + x) * 3) as usize;
            tmp[o..o + 3].copy_from_slice(&acc);
        }
    }
    Image::from_fn(w as usize, h as usize, |x, y| {
        let mut acc = [0.0f32; 3];
        for (k, &wt) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - radius).clamp(0, h - 1);
            let i = ((sy * w + x as isize) * 3) as usize;
            for c in 0..3 {
                acc[c] += wt * tmp[i + c];
            }
        }
        acc
    })
}

/// Encodes to baseline JPEG at `quality` (1..=100) and decodes it again.
pub fn jpeg_roundtrip(img: &Image, quality: u8) -> Result<Image> {
    if !(1..=100).contains(&quality) {
        return Err(Error::Config(format!("JPEG quality must be 1..=100, got {quality}")));
    }
    let mut buf = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&img.to_rgb8())
        .map_err(|e| Error::InvalidImage(format!("jpeg encode: {e}")))?;
    let decoded = image::load_from_memory_with_format(buf.get_ref(), image::ImageFormat::Jpeg)
        .map_err(|e| Error::InvalidImage(format!("jpeg decode: {e}")))?;
    Ok(Image::from_dynamic(&decoded))
}
