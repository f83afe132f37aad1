//! Geometric-robustness bench: score each image against transformed copies of itself.
//!
//! Resampling is bilinear with edge replication. Rotation keeps the input
//! canvas (corners are cropped and the uncovered area replicates the border).
//! Scaling changes the resolution and is applied without any antialiasing
//! prefilter. Shear is horizontal and widens the canvas to hold the sheared
//! content.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distort::jpeg_roundtrip;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::similarity::{DeepSsim, QualityScore};

pub const MAX_ROTATION_DEG: f64 = 45.0;
pub const MAX_TRANSLATION_PX: f64 = 64.0;
pub const SCALE_RANGE: (f64, f64) = (0.125, 4.0);
pub const MAX_SHEAR: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    /// Counter-clockwise rotation about the image center, in degrees.
    Rotate { degrees: f64 },
    /// Content shift in pixels (positive moves right / down).
    Translate { dx: f64, dy: f64 },
    /// Resize by `factor` in both directions.
    Scale { factor: f64 },
    /// Horizontal shear: `x' = x + factor * y`.
    Shear { factor: f64 },
    /// JPEG round trip; a photometric baseline to compare geometric scores against.
    Jpeg { quality: u8 },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Rotate { .. } => "rotate",
            Transform::Translate { .. } => "translate",
            Transform::Scale { .. } => "scale",
            Transform::Shear { .. } => "shear",
            Transform::Jpeg { .. } => "jpeg",
        }
    }

    pub fn param(&self) -> String {
        match *self {
            Transform::Rotate { degrees } => format!("{degrees}"),
            Transform::Translate { dx, dy } => format!("{dx};{dy}"),
            Transform::Scale { factor } | Transform::Shear { factor } => format!("{factor}"),
            Transform::Jpeg { quality } => format!("{quality}"),
        }
    }

    /// Checks parameters against the bench's declared ranges.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Transform::Rotate { degrees } => degrees.abs() <= MAX_ROTATION_DEG,
            Transform::Translate { dx, dy } => dx.abs() <= MAX_TRANSLATION_PX && dy.abs() <= MAX_TRANSLATION_PX,
            Transform::Scale { factor } => (SCALE_RANGE.0..=SCALE_RANGE.1).contains(&factor),
            Transform::Shear { factor } => factor.abs() <= MAX_SHEAR,
            Transform::Jpeg { quality } => (1..=100).contains(&quality),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Transform(format!("{self} outside the bench range")))
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.validate()?;
        let (w, h) = (img.width(), img.height());
        let out = match *self {
            Transform::Rotate { degrees } => {
                let (sin, cos) = degrees.to_radians().sin_cos();
                let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
                warp(img, w, h, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    // inverse of a counter-clockwise rotation in image coordinates (y down)
                    (cos * dx - sin * dy + cx, sin * dx + cos * dy + cy)
                })
            }
            Transform::Translate { dx, dy } => warp(img, w, h, |x, y| (x - dx, y - dy)),
            Transform::Scale { factor } => {
                let ow = (w as f64 * factor).round() as usize;
                let oh = (h as f64 * factor).round() as usize;
                if ow == 0 || oh == 0 {
                    return Err(Error::Transform(format!("{self} collapses a {w}x{h} image")));
                }
                let (fx, fy) = (w as f64 / ow as f64, h as f64 / oh as f64);
                warp(img, ow, oh, |x, y| ((x + 0.5) * fx - 0.5, (y + 0.5) * fy - 0.5))
            }
            Transform::Shear { factor } => {
                let extra = (factor.abs() * (h as f64 - 1.0)).ceil() as usize;
                let shift = if factor < 0.0 { extra as f64 } else { 0.0 };
                warp(img, w + extra, h, |x, y| (x - factor * y - shift, y))
            }
            Transform::Jpeg { quality } => jpeg_roundtrip(img, quality)?,
        };
        if !out.meets_backbone_minimum() {
            return Err(Error::Transform(format!(
                "{self} yields {}x{}, below the {m}x{m} minimum",
                out.width(),
                out.height(),
                m = Image::MIN_SIDE
            )));
        }
        Ok(out)
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.param())
    }
}

/// Inverse-maps every output pixel through `src_of` and samples bilinearly.
fn warp(img: &Image, width: usize, height: usize, src_of: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(width, height, |x, y| {
        let (sx, sy) = src_of(x as f64, y as f64);
        bilinear(img, sx, sy)
    })
    .expect("bilinear samples stay in range")
}

fn bilinear(img: &Image, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (img.width(), img.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    std::array::from_fn(|c| {
        let top = p00[c] * (1.0 - fx) + p10[c] * fx;
        let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list of values.
pub fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("expected start:stop:step or a comma list, got {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(num).collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    } else {
        spec.split(',').filter(|s| !s.trim().is_empty()).map(num).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCase {
    pub image: String,
    pub transform: Transform,
    pub score: QualityScore,
}

/// Scores every image against each transform of itself.
///
/// The reference representation is computed once per image. Results are in
/// image-major, transform-minor order.
pub fn robustness_bench(
    images: &[(String, Image)],
    scorer: &DeepSsim<'_>,
    grid: &[Transform],
) -> Result<Vec<RobustnessCase>> {
    for t in grid {
        t.validate()?;
    }
    let per_image: Vec<Vec<RobustnessCase>> = images
        .par_iter()
        .map(|(name, img)| {
            let reference = scorer.representation(img)?;
            grid.iter()
                .map(|t| {
                    let test = scorer.representation(&t.apply(img)?)?;
                    Ok(RobustnessCase {
                        image: name.clone(),
                        transform: *t,
                        score: scorer.compare(&reference, &test)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_image.into_iter().flatten().collect())
}

/// Writes `image,transform,param,score` rows.
pub fn write_cases_csv<W: Write>(cases: &[RobustnessCase], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image", "transform", "param", "score"])?;
    for c in cases {
        w.write_record([
            c.image.clone(),
            c.transform.name().to_string(),
            c.transform.param(),
            format!("{:.6}", c.score.value()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}
