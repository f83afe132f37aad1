//! VGG16 conv weights (conv1_1 through conv5_1) and the portable container format.
//!
//! Container layout:
//!
//! ```text
//! magic      8 bytes   "DSIMW001"
//! header_len u64 LE    length of the JSON header in bytes
//! header     UTF-8 JSON
//! padding    zeros up to the next 64-byte boundary
//! payload    little-endian f32 blobs, each starting on a 64-byte boundary
//! ```
//!
//! Header offsets are relative to the payload start. Each layer record points
//! at its kernel (`byte_offset`/`byte_length`, shape `[out, in, 3, 3]`) and its
//! bias (`bias_offset`/`bias_length`). The optional test vector carries a PNG
//! input image and the conv5_1 activation the exporter computed for it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::FeatureTensor;
use crate::error::{Error, Result};
use crate::image::Image;

pub const MAGIC: &[u8; 8] = b"DSIMW001";
pub const FORMAT_VERSION: u32 = 1;
/// Alignment of every payload blob and of the payload start.
pub const ALIGN: usize = 64;

/// `(name, in_channels, out_channels)` for every layer up to conv5_1, in order.
pub const VGG16_LAYERS: [(&str, usize, usize); 11] = [
    ("conv1_1", 3, 64),
    ("conv1_2", 64, 64),
    ("conv2_1", 64, 128),
    ("conv2_2", 128, 128),
    ("conv3_1", 128, 256),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv4_1", 256, 512),
    ("conv4_2", 512, 512),
    ("conv4_3", 512, 512),
    ("conv5_1", 512, 512),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelOrder {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "BGR")]
    Bgr,
}

/// Scale of the raw input before mean/std normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueRange {
    /// samples in `[0, 1]`
    Unit,
    /// samples in `[0, 255]`
    Byte,
}

/// Per-channel normalization applied before the first conv.
///
/// `channel_mean` and `channel_std` are indexed in the network's input channel
/// order, i.e. after any RGB to BGR swap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub channel_mean: [f32; 3],
    pub channel_std: [f32; 3],
    pub channel_order: ChannelOrder,
    pub value_range: ValueRange,
}

impl PreprocessSpec {
    /// torchvision ImageNet statistics.
    pub fn imagenet() -> Self {
        PreprocessSpec {
            channel_mean: [0.485, 0.456, 0.406],
            channel_std: [0.229, 0.224, 0.225],
            channel_order: ChannelOrder::Rgb,
            value_range: ValueRange::Unit,
        }
    }

    pub fn identity() -> Self {
        PreprocessSpec {
            channel_mean: [0.0; 3],
            channel_std: [1.0; 3],
            channel_order: ChannelOrder::Rgb,
            value_range: ValueRange::Unit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::MalformedHeader(format!(
                "preprocess channel_std must be strictly positive, got {:?}",
                self.channel_std
            )));
        }
        if self.channel_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::MalformedHeader("preprocess channel_mean not finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3]` row-major.
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Reference input and its expected conv5_1 activation, embedded by the exporter.
#[derive(Clone, Debug, PartialEq)]
pub struct TestVector {
    pub image: Image,
    pub expected: FeatureTensor,
}

#[derive(Clone, Debug)]
pub struct WeightContainer {
    layers: Vec<ConvLayer>,
    pub format_version: u32,
    pub source: String,
    pub preprocess: PreprocessSpec,
    test_vector: Option<TestVector>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    source: String,
    preprocess: PreprocessSpec,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_vector: Option<TestVectorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload_sha256: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    byte_offset: usize,
    byte_length: usize,
    bias_offset: usize,
    bias_length: usize,
}

#[derive(Serialize, Deserialize)]
struct TestVectorRecord {
    input_image_png_bytes_offset: usize,
    input_image_png_bytes_length: usize,
    expected_conv5_1_offset: usize,
    expected_conv5_1_length: usize,
    expected_conv5_1_shape: [usize; 3],
}

impl WeightContainer {
    /// Validates and wraps a layer list.
    pub fn new(layers: Vec<ConvLayer>, source: impl Into<String>, preprocess: PreprocessSpec) -> Result<Self> {
        let container = WeightContainer {
            layers,
            format_version: FORMAT_VERSION,
            source: source.into(),
            preprocess,
            test_vector: None,
        };
        container.validate()?;
        Ok(container)
    }

    /// Deterministic He-initialized weights with the VGG16 layer chain.
    ///
    /// Not a perceptual model. Used for tests and smoke runs where no
    /// exported checkpoint is available.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = VGG16_LAYERS
            .iter()
            .map(|&(name, cin, cout)| {
                let std = (2.0 / (cin * 9) as f32).sqrt();
                let kernel_dist = Normal::new(0.0f32, std).expect("positive std");
                let bias_dist = Normal::new(0.0f32, 0.01).expect("positive std");
                ConvLayer {
                    name: name.to_string(),
                    in_channels: cin,
                    out_channels: cout,
                    kernel: (0..cout * cin * 9).map(|_| kernel_dist.sample(&mut rng)).collect(),
                    bias: (0..cout).map(|_| bias_dist.sample(&mut rng)).collect(),
                }
            })
            .collect();
        WeightContainer::new(layers, format!("seeded-he-init:{seed}"), PreprocessSpec::imagenet())
            .expect("generated layers follow the VGG16 chain")
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn test_vector(&self) -> Option<&TestVector> {
        self.test_vector.as_ref()
    }

    pub fn with_test_vector(mut self, tv: TestVector) -> Self {
        self.test_vector = Some(tv);
        self
    }

    /// Runs the embedded test image through the backbone and compares it with
    /// the stored conv5_1 activation. Returns the max absolute difference, or
    /// `None` when the container carries no test vector.
    pub fn verify_test_vector(&self, tolerance: f32) -> Result<Option<f32>> {
        let Some(tv) = &self.test_vector else {
            return Ok(None);
        };
        let got = crate::backbone::extract_features(&tv.image, self)?;
        let diff = got.max_abs_diff(&tv.expected).ok_or_else(|| {
            Error::MalformedHeader(format!(
                "test vector shape {:?} differs from backbone output {:?}",
                tv.expected.shape(),
                got.shape()
            ))
        })?;
        if diff > tolerance || diff.is_nan() {
            return Err(Error::TestVectorMismatch {
                max_abs_diff: diff,
                tolerance,
            });
        }
        Ok(Some(diff))
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        for (i, &(name, cin, cout)) in VGG16_LAYERS.iter().enumerate() {
            let Some(layer) = self.layers.get(i) else {
                return Err(Error::ShapeChain {
                    layer: name.into(),
                    detail: format!("layer missing (container has {} layers)", self.layers.len()),
                });
            };
            if layer.name != name {
                return Err(Error::ShapeChain {
                    layer: name.into(),
                    detail: format!("expected {name} at position {i}, found {}", layer.name),
                });
            }
            if layer.in_channels != cin || layer.out_channels != cout {
                return Err(Error::ShapeChain {
                    layer: name.into(),
                    detail: format!(
                        "expected {cin}->{cout} channels, found {}->{}",
                        layer.in_channels, layer.out_channels
                    ),
                });
            }
            if layer.kernel.len() != cout * cin * 9 || layer.bias.len() != cout {
                return Err(Error::ShapeChain {
                    layer: name.into(),
                    detail: format!(
                        "kernel/bias sizes {}/{} do not match [{cout}, {cin}, 3, 3]/[{cout}]",
                        layer.kernel.len(),
                        layer.bias.len()
                    ),
                });
            }
            if layer.kernel.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: name.into(), tensor: "kernel" });
            }
            if layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: name.into(), tensor: "bias" });
            }
        }
        if self.layers.len() > VGG16_LAYERS.len() {
            return Err(Error::ShapeChain {
                layer: self.layers[VGG16_LAYERS.len()].name.clone(),
                detail: "unexpected layer after conv5_1".into(),
            });
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::MalformedHeader("missing DSIMW001 magic".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::MalformedHeader(format!("header length {header_len} exceeds file")))?;
        let header: Header = serde_json::from_slice(&bytes[16..header_end])
            .map_err(|e| Error::MalformedHeader(e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let payload_start = align_up(header_end);
        let payload = bytes
            .get(payload_start..)
            .ok_or_else(|| Error::MalformedHeader("payload region missing".into()))?;
        if let Some(expected) = &header.payload_sha256 {
            let found = hex::encode(Sha256::digest(payload));
            if !found.eq_ignore_ascii_case(expected) {
                return Err(Error::DigestMismatch {
                    expected: expected.clone(),
                    found,
                });
            }
        }
        header.preprocess.validate()?;

        let mut layers = Vec::with_capacity(header.layers.len());
        for (i, rec) in header.layers.iter().enumerate() {
            let shape_err = |detail: String| Error::ShapeChain {
                layer: rec.name.clone(),
                detail,
            };
            if rec.dtype != "f32" {
                return Err(shape_err(format!("dtype {:?}, expected \"f32\"", rec.dtype)));
            }
            let [cout, cin, kh, kw] = rec.shape[..] else {
                return Err(shape_err(format!("kernel shape {:?} is not 4-D", rec.shape)));
            };
            if (kh, kw) != (3, 3) {
                return Err(shape_err(format!("kernel is {kh}x{kw}, expected 3x3")));
            }
            if let Some(&(name, want_in, want_out)) = VGG16_LAYERS.get(i) {
                if rec.name != name || cin != want_in || cout != want_out {
                    let name = if rec.name == name { rec.name.clone() } else { name.to_string() };
                    return Err(Error::ShapeChain {
                        layer: name,
                        detail: format!(
                            "expected {} [{want_out}, {want_in}, 3, 3] at position {i}, found {} {:?}",
                            VGG16_LAYERS[i].0, rec.name, rec.shape
                        ),
                    });
                }
            }
            let kernel = read_f32s(payload, rec.byte_offset, rec.byte_length, cout * cin * 9)
                .map_err(|d| shape_err(format!("kernel: {d}")))?;
            let bias = read_f32s(payload, rec.bias_offset, rec.bias_length, cout)
                .map_err(|d| shape_err(format!("bias: {d}")))?;
            layers.push(ConvLayer {
                name: rec.name.clone(),
                in_channels: cin,
                out_channels: cout,
                kernel,
                bias,
            });
        }

        let mut container = WeightContainer {
            layers,
            format_version: header.format_version,
            source: header.source,
            preprocess: header.preprocess,
            test_vector: None,
        };
        container.validate()?;

        if let Some(tv) = header.test_vector {
            let png = payload
                .get(tv.input_image_png_bytes_offset..)
                .and_then(|p| p.get(..tv.input_image_png_bytes_length))
                .ok_or_else(|| Error::MalformedHeader("test vector image out of bounds".into()))?;
            let image = Image::from_png_bytes(png)?;
            let [c, h, w] = tv.expected_conv5_1_shape;
            let data = read_f32s(payload, tv.expected_conv5_1_offset, tv.expected_conv5_1_length, c * h * w)
                .map_err(|d| Error::MalformedHeader(format!("test vector activation: {d}")))?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: "conv5_1".into(),
                    tensor: "test vector activation",
                });
            }
            container.test_vector = Some(TestVector {
                image,
                expected: FeatureTensor::new(c, h, w, data)?,
            });
        }
        Ok(container)
    }

    /// Serializes to the container format, including a payload digest.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut push = |bytes: &[u8]| {
            payload.resize(align_up(payload.len()), 0);
            let offset = payload.len();
            payload.extend_from_slice(bytes);
            (offset, bytes.len())
        };
        let mut records = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (byte_offset, byte_length) = push(&f32_bytes(&layer.kernel));
            let (bias_offset, bias_length) = push(&f32_bytes(&layer.bias));
            records.push(LayerRecord {
                name: layer.name.clone(),
                shape: vec![layer.out_channels, layer.in_channels, 3, 3],
                dtype: "f32".into(),
                byte_offset,
                byte_length,
                bias_offset,
                bias_length,
            });
        }
        let test_vector = match &self.test_vector {
            Some(tv) => {
                let (img_off, img_len) = push(&tv.image.to_png_bytes()?);
                let (act_off, act_len) = push(&f32_bytes(tv.expected.data()));
                Some(TestVectorRecord {
                    input_image_png_bytes_offset: img_off,
                    input_image_png_bytes_length: img_len,
                    expected_conv5_1_offset: act_off,
                    expected_conv5_1_length: act_len,
                    expected_conv5_1_shape: tv.expected.shape(),
                })
            }
            None => None,
        };
        let header = Header {
            format_version: self.format_version,
            source: self.source.clone(),
            preprocess: self.preprocess.clone(),
            layers: records,
            test_vector,
            payload_sha256: Some(hex::encode(Sha256::digest(&payload))),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(align_up(16 + header.len()) + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.resize(align_up(out.len()), 0);
        out.extend_from_slice(&payload);
        Ok(out)
    }
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f32s(payload: &[u8], offset: usize, length: usize, count: usize) -> std::result::Result<Vec<f32>, String> {
    if length != count * 4 {
        return Err(format!("byte_length {length} does not hold {count} f32 values"));
    }
    let bytes = payload
        .get(offset..)
        .and_then(|p| p.get(..length))
        .ok_or_else(|| format!("bytes {offset}..{} outside payload of {}", offset + length, payload.len()))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect())
}
