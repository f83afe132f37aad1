//! Helpers shared by the integration suites: weight selection, the image
//! corpus, container surgery and loop-only reference implementations.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use deepssim::backbone::FeatureTensor;
use deepssim::weights::{ChannelOrder, ValueRange, MAGIC};
use deepssim::{Image, WeightContainer};
use sha2::{Digest, Sha256};

pub const SEED: u64 = 7;

/// Weights from `$DEEPSIM_WEIGHTS` when set, otherwise the seeded container.
pub fn weights() -> &'static WeightContainer {
    static W: OnceLock<WeightContainer> = OnceLock::new();
    W.get_or_init(|| match std::env::var_os("DEEPSIM_WEIGHTS") {
        Some(path) => WeightContainer::load(&path)
            .unwrap_or_else(|e| panic!("DEEPSIM_WEIGHTS={}: {e}", Path::new(&path).display())),
        None => WeightContainer::seeded(SEED),
    })
}

pub fn trained_weights() -> bool {
    std::env::var_os("DEEPSIM_WEIGHTS").is_some()
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// The 20 natural test images, sorted by file name.
pub fn corpus() -> Vec<(String, Image)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir())
        .expect("tests/data")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, Image::open(&p).expect("corpus image"))
        })
        .collect()
}

/// Deterministic textured image; `seed` varies the pattern.
pub fn pattern(width: usize, height: usize, seed: u64) -> Image {
    let f = 0.07 + (seed % 11) as f32 * 0.013;
    let g = 0.11 + (seed % 7) as f32 * 0.021;
    Image::from_fn(width, height, |x, y| {
        let (x, y) = (x as f32, y as f32);
        [
            0.5 + 0.45 * (f * x + 0.3 * y).sin(),
            0.5 + 0.45 * (g * y - 0.2 * x + seed as f32).cos(),
            0.5 + 0.45 * (0.05 * (x * y).sqrt() + f * g * x).sin(),
        ]
    })
    .expect("pattern samples are in range")
}

/// Splits a container file into its JSON header and payload.
pub fn split_container(bytes: &[u8]) -> (serde_json::Value, Vec<u8>) {
    assert_eq!(&bytes[..8], MAGIC);
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    let payload_start = (16 + len).div_ceil(64) * 64;
    (header, bytes[payload_start..].to_vec())
}

/// Reassembles a container, recomputing the payload digest so content
/// edits are not rejected as tampering.
pub fn join_container(mut header: serde_json::Value, payload: &[u8]) -> Vec<u8> {
    header["payload_sha256"] = hex::encode(Sha256::digest(payload)).into();
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.resize(out.len().div_ceil(64) * 64, 0);
    out.extend_from_slice(payload);
    out
}

// ---- loop-only reference implementations ----

/// Direct 3x3 convolution with zero padding, no activation.
pub fn conv_loops(input: &FeatureTensor, kernel: &[f32], bias: &[f32], cout: usize) -> FeatureTensor {
    let (cin, h, w) = (input.channels(), input.height(), input.width());
    let mut out = vec![0.0f32; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o] as f64;
                for i in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                continue;
                            }
                            let k = kernel[((o * cin + i) * 3 + ky) * 3 + kx] as f64;
                            acc += k * input.get(i, sy as usize, sx as usize) as f64;
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc as f32;
            }
        }
    }
    FeatureTensor::new(cout, h, w, out).unwrap()
}

pub fn pool_loops(input: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = (input.channels(), input.height() / 2, input.width() / 2);
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let v = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|&(dy, dx)| input.get(ch, 2 * y + dy, 2 * x + dx))
                    .fold(f32::NEG_INFINITY, f32::max);
                out.push(v);
            }
        }
    }
    FeatureTensor::new(c, h, w, out).unwrap()
}

/// Full backbone by plain loops, mirroring the VGG16 prefix up to conv5_1.
pub fn backbone_loops(img: &Image, weights: &WeightContainer, post_relu: bool) -> FeatureTensor {
    let spec = &weights.preprocess;
    let (w, h) = (img.width(), img.height());
    let scale = match spec.value_range {
        ValueRange::Unit => 1.0,
        ValueRange::Byte => 255.0,
    };
    let mut data = vec![0.0f32; 3 * w * h];
    for c in 0..3 {
        let src = match spec.channel_order {
            ChannelOrder::Rgb => c,
            ChannelOrder::Bgr => 2 - c,
        };
        for y in 0..h {
            for x in 0..w {
                data[(c * h + y) * w + x] = (img.pixel(x, y)[src] * scale - spec.channel_mean[c]) / spec.channel_std[c];
            }
        }
    }
    let mut t = FeatureTensor::new(3, h, w, data).unwrap();
    let n = weights.layers().len();
    for (i, layer) in weights.layers().iter().enumerate() {
        t = conv_loops(&t, &layer.kernel, &layer.bias, layer.out_channels);
        if i + 1 < n || post_relu {
            for v in t.data_mut() {
                *v = v.max(0.0);
            }
        }
        if matches!(layer.name.as_str(), "conv1_2" | "conv2_2" | "conv3_3" | "conv4_3") {
            t = pool_loops(&t);
        }
    }
    t
}

/// Gram matrix by triple loop in f64.
pub fn gram_loops(f: &FeatureTensor, normalize: bool) -> Vec<f64> {
    let (c, n) = (f.channels(), f.height() * f.width());
    let mut g = vec![0.0f64; c * c];
    for i in 0..c {
        for j in 0..c {
            let mut acc = 0.0f64;
            for p in 0..n {
                acc += f.channel(i)[p] as f64 * f.channel(j)[p] as f64;
            }
            g[i * c + j] = if normalize { acc / n as f64 } else { acc };
        }
    }
    g
}

/// Windowed population statistics straight from the definition, one window
/// at a time in row-major order.
pub fn window_stats_loops(gx: &[f64], gy: &[f64], dim: usize, window: usize, stride: usize) -> Vec<(f64, f64, f64)> {
    let steps = (dim - window) / stride + 1;
    let mut out = Vec::new();
    for wy in 0..steps {
        for wx in 0..steps {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for r in wy * stride..wy * stride + window {
                for c in wx * stride..wx * stride + window {
                    xs.push(gx[r * dim + c]);
                    ys.push(gy[r * dim + c]);
                }
            }
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
            let vy = ys.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
            let cov = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
            out.push((vx, vy, cov));
        }
    }
    out
}

pub fn pearson_direct(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|y| y * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

/// Average rank by counting: `1 + #less + (#equal - 1) / 2`.
pub fn ranks_by_counting(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_direct(a: &[f64], b: &[f64]) -> f64 {
    pearson_direct(&ranks_by_counting(a), &ranks_by_counting(b))
}

/// Tau-b from pair counts.
pub fn kendall_direct(a: &[f64], b: &[f64]) -> f64 {
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 && db == 0.0 {
                continue;
            }
            if da == 0.0 {
                tie_a += 1;
            } else if db == 0.0 {
                tie_b += 1;
            } else if (da > 0.0) == (db > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let n1 = (conc + disc + tie_a) as f64;
    let n2 = (conc + disc + tie_b) as f64;
    (conc - disc) as f64 / (n1 * n2).sqrt()
}
