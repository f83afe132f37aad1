//! Full-reference image quality from the structure of deep features.
//!
//! Each image is passed through VGG16 up to conv5_1; the resulting feature
//! maps are reduced to a 512x512 Gram matrix of channel self-correlations.
//! That matrix has the same size for every input resolution, so a reference
//! and a test image may differ arbitrarily in size or geometry. The two Gram
//! matrices are compared with SSIM-style windowed variance/covariance
//! statistics ([`deepssim`]) or with a single global window
//! ([`deepssim_lite`]).
//!
//! ```no_run
//! use deepssim::{deepssim, Image, SimilarityConfig, WeightContainer};
//!
//! let weights = WeightContainer::load("vgg16.dsimw")?;
//! let reference = Image::open("ref.png")?;
//! let test = Image::open("upscaled.png")?;
//! let q = deepssim(&reference, &test, &weights, &SimilarityConfig::default())?;
//! println!("{q}");
//! # Ok::<(), deepssim::Error>(())
//! ```
//!
//! The crate also carries the evaluation side: correlation criteria
//! ([`correlation`]), manifest loading and dataset adapters ([`dataset`],
//! [`adapters`]), the benchmark harness ([`eval`]) and a geometric
//! robustness bench ([`robustness`]).

pub mod adapters;
pub mod backbone;
pub mod correlation;
pub mod dataset;
pub mod distort;
mod error;
pub mod eval;
pub mod gram;
mod image;
pub mod robustness;
pub mod similarity;
pub mod weights;

pub use crate::backbone::{extract_features, Activation, FeatureTensor};
pub use crate::error::{Error, Result};
pub use crate::gram::{gram, GramMatrix};
pub use crate::image::Image;
pub use crate::similarity::{
    deepssim, deepssim_lite, window_stats, DeepSsim, QualityScore, SimilarityConfig, Variant,
};
pub use crate::weights::{PreprocessSpec, WeightContainer};
