//! DeepSSIM and DeepSSIM-Lite scores.
//!
//! Both images go through the backbone to conv5_1, each activation is reduced
//! to its Gram matrix, and the two Gram matrices are compared with an
//! SSIM-style contrast/structure term averaged over windows of the Gram grid:
//!
//! ```text
//! Q = 1/k * sum_i (2 cov_i + xi) / (var_x,i + var_y,i + xi)
//! ```
//!
//! The standard variant uses non-overlapping 4x4 windows (k = 16384 for a
//! 512x512 grid). The Lite variant uses a single window covering the whole grid.
//! Statistics are population statistics over the window entries.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backbone::{extract_features_with, Activation, FeatureTensor};
use crate::error::{Error, Result};
use crate::gram::{gram, GramMatrix};
use crate::image::Image;
use crate::weights::WeightContainer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Standard,
    /// Single global window.
    Lite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    /// Window side over the Gram grid. Ignored by [`Variant::Lite`].
    pub window: usize,
    /// Step between window origins. Ignored by [`Variant::Lite`].
    pub stride: usize,
    /// Stabilizer added to numerator and denominator.
    pub xi: f64,
    /// Divide the Gram matrix by the number of spatial positions.
    pub normalize_gram: bool,
    pub variant: Variant,
    /// Take conv5_1 before or after its ReLU.
    pub activation: Activation,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            window: 4,
            stride: 4,
            xi: 1e-8,
            normalize_gram: true,
            variant: Variant::Standard,
            activation: Activation::PostRelu,
        }
    }
}

impl SimilarityConfig {
    pub fn lite() -> Self {
        SimilarityConfig {
            variant: Variant::Lite,
            ..Default::default()
        }
    }

    /// `(window, stride)` actually used for a `dim x dim` grid.
    pub fn geometry(&self, dim: usize) -> (usize, usize) {
        match self.variant {
            Variant::Standard => (self.window, self.stride),
            Variant::Lite => (dim, dim),
        }
    }

    /// Checks the window tiles a `dim x dim` grid and `xi` is usable.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::Config(format!("xi must be > 0, got {}", self.xi)));
        }
        let (window, stride) = self.geometry(dim);
        if window == 0 || stride == 0 || window > dim {
            return Err(Error::Config(format!(
                "window {window} / stride {stride} invalid for a {dim}x{dim} grid"
            )));
        }
        if !(dim - window).is_multiple_of(stride) {
            return Err(Error::Config(format!(
                "window {window} with stride {stride} does not tile a {dim}x{dim} grid"
            )));
        }
        Ok(())
    }
}

/// Population statistics of one window pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

/// Per-window variance/covariance of two equally sized Gram matrices.
///
/// Windows are visited row-major by origin.
pub fn window_stats(gx: &GramMatrix, gy: &GramMatrix, cfg: &SimilarityConfig) -> Result<Vec<WindowStats>> {
    let dim = gx.dim();
    if gy.dim() != dim {
        return Err(Error::Config(format!(
            "Gram matrices differ in size: {dim} vs {}",
            gy.dim()
        )));
    }
    cfg.validate(dim)?;
    let (window, stride) = cfg.geometry(dim);
    let steps = (dim - window) / stride + 1;
    let count = (window * window) as f64;

    let mut out = Vec::with_capacity(steps * steps);
    for wy in 0..steps {
        for wx in 0..steps {
            let (r0, c0) = (wy * stride, wx * stride);
            let (mut sx, mut sy) = (0.0f64, 0.0f64);
            for r in r0..r0 + window {
                let (rx, ry) = (&gx.row(r)[c0..c0 + window], &gy.row(r)[c0..c0 + window]);
                sx += rx.iter().map(|&v| f64::from(v)).sum::<f64>();
                sy += ry.iter().map(|&v| f64::from(v)).sum::<f64>();
            }
            let (mx, my) = (sx / count, sy / count);
            let (mut vx, mut vy, mut cxy) = (0.0f64, 0.0f64, 0.0f64);
            for r in r0..r0 + window {
                let (rx, ry) = (&gx.row(r)[c0..c0 + window], &gy.row(r)[c0..c0 + window]);
                for (&a, &b) in rx.iter().zip(ry) {
                    let (da, db) = (f64::from(a) - mx, f64::from(b) - my);
                    vx += da * da;
                    vy += db * db;
                    cxy += da * db;
                }
            }
            out.push(WindowStats {
                var_x: vx / count,
                var_y: vy / count,
                cov: cxy / count,
            });
        }
    }
    Ok(out)
}

/// Mean of the per-window `(2 cov + xi) / (var_x + var_y + xi)` terms.
pub fn pool_window_scores(stats: &[WindowStats], xi: f64) -> f64 {
    let total: f64 = stats
        .iter()
        .map(|s| (2.0 * s.cov + xi) / (s.var_x + s.var_y + xi))
        .sum();
    total / stats.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityScore(pub f64);

impl QualityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for QualityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// Compares two precomputed Gram matrices.
pub fn compare_grams(gx: &GramMatrix, gy: &GramMatrix, cfg: &SimilarityConfig) -> Result<QualityScore> {
    let stats = window_stats(gx, gy, cfg)?;
    Ok(QualityScore(pool_window_scores(&stats, cfg.xi)))
}

/// DeepSSIM between a reference `x` and a test image `y` of any sizes ≥ 32x32.
pub fn deepssim(x: &Image, y: &Image, weights: &WeightContainer, cfg: &SimilarityConfig) -> Result<QualityScore> {
    DeepSsim::new(weights, cfg.clone())?.score(x, y)
}

/// DeepSSIM with a single global window and no feature reweighting.
pub fn deepssim_lite(x: &Image, y: &Image, weights: &WeightContainer) -> Result<QualityScore> {
    deepssim(x, y, weights, &SimilarityConfig::lite())
}

/// Reweights conv5_1 features in place before the Gram matrix is formed.
///
/// This is where an attention calibration of the features plugs in; no
/// calibration is applied unless a hook is installed.
pub type FeatureHook = dyn Fn(&mut FeatureTensor) + Send + Sync;

/// A configured scorer: weights, similarity settings and an optional feature hook.
#[derive(Clone)]
pub struct DeepSsim<'w> {
    weights: &'w WeightContainer,
    cfg: SimilarityConfig,
    hook: Option<Arc<FeatureHook>>,
}

impl<'w> DeepSsim<'w> {
    pub fn new(weights: &'w WeightContainer, cfg: SimilarityConfig) -> Result<Self> {
        cfg.validate(crate::backbone::FEATURE_CHANNELS)?;
        Ok(DeepSsim {
            weights,
            cfg,
            hook: None,
        })
    }

    pub fn with_feature_hook(mut self, hook: Arc<FeatureHook>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn config(&self) -> &SimilarityConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &WeightContainer {
        self.weights
    }

    pub fn features(&self, img: &Image) -> Result<FeatureTensor> {
        let mut f = extract_features_with(img, self.weights, self.cfg.activation)?;
        if let Some(hook) = &self.hook {
            hook(&mut f);
        }
        Ok(f)
    }

    /// Deep structure representation of `img`.
    pub fn representation(&self, img: &Image) -> Result<GramMatrix> {
        Ok(gram(&self.features(img)?, self.cfg.normalize_gram))
    }

    pub fn compare(&self, gx: &GramMatrix, gy: &GramMatrix) -> Result<QualityScore> {
        compare_grams(gx, gy, &self.cfg)
    }

    pub fn score(&self, reference: &Image, test: &Image) -> Result<QualityScore> {
        let gx = self.representation(reference)?;
        let gy = self.representation(test)?;
        self.compare(&gx, &gy)
    }
}
