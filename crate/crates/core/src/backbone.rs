//! VGG16 forward pass from the input image through conv5_1.
//!
//! Every conv layer is a 3x3 convolution with zero padding 1 and stride 1,
//! followed by ReLU. A 2x2 stride-2 max-pool (floor mode) follows conv1_2,
//! conv2_2, conv3_3 and conv4_3. The returned activation is conv5_1, so the
//! output grid is `(H / 16, W / 16)` with integer division.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::weights::{ChannelOrder, ConvLayer, PreprocessSpec, ValueRange, WeightContainer};

/// Channels produced by conv5_1.
pub const FEATURE_CHANNELS: usize = 512;

/// Layers followed by a max-pool.
const POOL_AFTER: [&str; 4] = ["conv1_2", "conv2_2", "conv3_3", "conv4_3"];

/// Upper bound on the im2col scratch buffer, in floats.
const IM2COL_BUDGET: usize = 4 << 20;

/// A channel-first `[channels, height, width]` block of `f32` activations.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Config(format!(
                "tensor [{channels}, {height}, {width}] needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(FeatureTensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureTensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Spatial positions per channel.
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.positions();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn max_abs_diff(&self, other: &FeatureTensor) -> Option<f32> {
        if self.shape() != other.shape() {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }
}

/// Whether the conv5_1 output is taken after its ReLU (the default) or before it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    PostRelu,
    PreRelu,
}

/// Normalizes an image into a channel-first tensor per `spec`.
pub fn preprocess(img: &Image, spec: &PreprocessSpec) -> FeatureTensor {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let scale = match spec.value_range {
        ValueRange::Unit => 1.0,
        ValueRange::Byte => 255.0,
    };
    let src_channel = |c: usize| match spec.channel_order {
        ChannelOrder::Rgb => c,
        ChannelOrder::Bgr => 2 - c,
    };
    let mut data = vec![0.0f32; 3 * n];
    let pixels = img.pixels();
    for c in 0..3 {
        let src = src_channel(c);
        let (mean, std) = (spec.channel_mean[c], spec.channel_std[c]);
        let plane = &mut data[c * n..(c + 1) * n];
        for (i, out) in plane.iter_mut().enumerate() {
            *out = (pixels[i * 3 + src] * scale - mean) / std;
        }
    }
    FeatureTensor {
        channels: 3,
        height: h,
        width: w,
        data,
    }
}

/// 3x3 convolution, zero padding 1, stride 1, bias added, no activation.
///
/// Lowered to im2col + SGEMM, processed in row bands so the scratch buffer
/// stays bounded for large inputs.
pub fn conv3x3(input: &FeatureTensor, layer: &ConvLayer) -> FeatureTensor {
    assert_eq!(
        input.channels, layer.in_channels,
        "{}: input has {} channels",
        layer.name, input.channels
    );
    let (cin, h, w) = (input.channels, input.height, input.width);
    let cout = layer.out_channels;
    let k = cin * 9;
    let plane = h * w;
    let mut out = vec![0.0f32; cout * plane];

    let rows_per_band = (IM2COL_BUDGET / (k * w).max(1)).clamp(1, h.max(1));
    let mut col = vec![0.0f32; k * rows_per_band * w];

    let mut r0 = 0;
    while r0 < h {
        let rows = rows_per_band.min(h - r0);
        let n = rows * w;
        im2col_band(input, r0, rows, &mut col[..k * n]);
        // SAFETY: all strides describe in-bounds, non-overlapping row-major views;
        // `out` receives a [cout, n] block starting at column r0 * w with row stride `plane`.
        unsafe {
            matrixmultiply::sgemm(
                cout,
                k,
                n,
                1.0,
                layer.kernel.as_ptr(),
                k as isize,
                1,
                col.as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr().add(r0 * w),
                plane as isize,
                1,
            );
        }
        r0 += rows;
    }

    for (o, bias) in layer.bias.iter().enumerate() {
        for v in &mut out[o * plane..(o + 1) * plane] {
            *v += bias;
        }
    }
    FeatureTensor {
        channels: cout,
        height: h,
        width: w,
        data: out,
    }
}

/// Fills `col` (shape `[cin * 9, rows * w]`) for output rows `r0..r0 + rows`.
fn im2col_band(input: &FeatureTensor, r0: usize, rows: usize, col: &mut [f32]) {
    let (cin, h, w) = (input.channels, input.height, input.width);
    let n = rows * w;
    for c in 0..cin {
        let src = input.channel(c);
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut col[((c * 3 + ky) * 3 + kx) * n..][..n];
                for r in 0..rows {
                    let row = &mut dst[r * w..(r + 1) * w];
                    let sy = (r0 + r) as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                    // output x reads input x + kx - 1
                    match kx {
                        0 => {
                            row[0] = 0.0;
                            row[1..].copy_from_slice(&src_row[..w - 1]);
                        }
                        1 => row.copy_from_slice(src_row),
                        _ => {
                            row[..w - 1].copy_from_slice(&src_row[1..]);
                            row[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

pub fn relu_inplace(t: &mut FeatureTensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

/// 2x2 max-pool with stride 2; a trailing odd row or column is dropped.
pub fn max_pool2x2(input: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = (input.channels, input.height, input.width);
    let (oh, ow) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let src = input.channel(ch);
        for y in 0..oh {
            let top = &src[2 * y * w..];
            let bottom = &src[(2 * y + 1) * w..];
            for x in 0..ow {
                let m = top[2 * x]
                    .max(top[2 * x + 1])
                    .max(bottom[2 * x])
                    .max(bottom[2 * x + 1]);
                data.push(m);
            }
        }
    }
    FeatureTensor {
        channels: c,
        height: oh,
        width: ow,
        data,
    }
}

/// Spatial size of the conv5_1 grid for an `height x width` input.
pub fn output_grid(height: usize, width: usize) -> (usize, usize) {
    (height / 16, width / 16)
}

/// conv5_1 activations (post-ReLU) for `img`.
pub fn extract_features(img: &Image, weights: &WeightContainer) -> Result<FeatureTensor> {
    extract_features_with(img, weights, Activation::PostRelu)
}

pub fn extract_features_with(
    img: &Image,
    weights: &WeightContainer,
    activation: Activation,
) -> Result<FeatureTensor> {
    if !img.meets_backbone_minimum() {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: Image::MIN_SIDE,
        });
    }
    let mut x = preprocess(img, &weights.preprocess);
    let layers = weights.layers();
    for (i, layer) in layers.iter().enumerate() {
        x = conv3x3(&x, layer);
        let last = i + 1 == layers.len();
        if !last || activation == Activation::PostRelu {
            relu_inplace(&mut x);
        }
        if POOL_AFTER.contains(&layer.name.as_str()) {
            x = max_pool2x2(&x);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureTensor {
        let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        FeatureTensor::new(c, h, w, data).unwrap()
    }

    fn random_layer(rng: &mut ChaCha8Rng, cin: usize, cout: usize) -> ConvLayer {
        ConvLayer {
            name: "test".into(),
            in_channels: cin,
            out_channels: cout,
            kernel: (0..cout * cin * 9).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: (0..cout).map(|_| rng.random_range(-0.5..0.5)).collect(),
        }
    }

    fn conv_oracle(input: &FeatureTensor, layer: &ConvLayer) -> Vec<f32> {
        let (cin, h, w) = (input.channels, input.height, input.width);
        let mut out = vec![0.0f32; layer.out_channels * h * w];
        for o in 0..layer.out_channels {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = layer.bias[o];
                    for c in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = y as isize + ky as isize - 1;
                                let sx = x as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += layer.kernel[((o * cin + c) * 3 + ky) * 3 + kx]
                                    * input.get(c, sy as usize, sx as usize);
                            }
                        }
                    }
                    out[(o * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let cin = if trial % 2 == 0 { 1 } else { 3 };
            let h = rng.random_range(1..=8);
            let w = rng.random_range(1..=8);
            let input = random_tensor(&mut rng, cin, h, w);
            let layer = random_layer(&mut rng, cin, 4);
            let got = conv3x3(&input, &layer);
            let want = conv_oracle(&input, &layer);
            let err = got
                .data()
                .iter()
                .zip(&want)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max);
            assert!(err <= 1e-5, "trial {trial}: {h}x{w} err {err}");
        }
    }

    #[test]
    fn pool_drops_trailing_row_and_column() {
        let t = FeatureTensor::new(1, 3, 5, (0..15).map(|v| v as f32).collect()).unwrap();
        let p = max_pool2x2(&t);
        assert_eq!(p.shape(), [1, 1, 2]);
        assert_eq!(p.data(), &[6.0, 8.0]);
    }

    #[test]
    fn preprocess_imagenet_zero_image() {
        let img = Image::filled(4, 3, [0.0; 3]).unwrap();
        let t = preprocess(&img, &PreprocessSpec::imagenet());
        let want = [-2.1179f32, -2.0357, -1.8044];
        for (c, w) in want.iter().enumerate() {
            assert!(t.channel(c).iter().all(|v| (v - w).abs() < 1e-4));
        }
    }

    #[test]
    fn preprocess_bgr_byte_range() {
        let img = Image::filled(2, 2, [0.2, 0.4, 0.6]).unwrap();
        let spec = PreprocessSpec {
            channel_mean: [100.0, 50.0, 0.0],
            channel_std: [2.0, 1.0, 1.0],
            channel_order: ChannelOrder::Bgr,
            value_range: ValueRange::Byte,
        };
        let t = preprocess(&img, &spec);
        assert!((t.get(0, 0, 0) - (0.6 * 255.0 - 100.0) / 2.0).abs() < 1e-4);
        assert!((t.get(1, 1, 1) - (0.4 * 255.0 - 50.0)).abs() < 1e-4);
        assert!((t.get(2, 0, 1) - 0.2 * 255.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_undersized_images() {
        let weights = WeightContainer::seeded(1);
        let img = Image::filled(31, 64, [0.5; 3]).unwrap();
        assert!(matches!(
            extract_features(&img, &weights),
            Err(Error::ImageTooSmall { width: 31, .. })
        ));
    }
}
