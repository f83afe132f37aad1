//! Channel self-correlation (Gram) matrices of feature tensors.

use crate::backbone::FeatureTensor;

/// Square `dim x dim` Gram matrix; `dim` is the feature channel count (512 for conv5_1).
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    dim: usize,
    n_positions: usize,
    data: Vec<f32>,
}

impl GramMatrix {
    /// Wraps a row-major square matrix.
    ///
    /// # Panics
    /// If `data.len() != dim * dim`.
    pub fn from_raw(dim: usize, n_positions: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), dim * dim, "Gram data must be {dim}x{dim}");
        GramMatrix {
            dim,
            n_positions,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Spatial positions the matrix was accumulated over.
    pub fn n_positions(&self) -> usize {
        self.n_positions
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// `F * F^T` over the flattened `[channels, positions]` view of `features`,
/// divided by the number of positions when `normalize` is set.
///
/// The result is exactly symmetric: the upper triangle is mirrored.
pub fn gram(features: &FeatureTensor, normalize: bool) -> GramMatrix {
    let c = features.channels();
    let n = features.positions();
    let mut data = vec![0.0f32; c * c];
    if n > 0 && c > 0 {
        let alpha = if normalize { 1.0 / n as f32 } else { 1.0 };
        let f = features.data();
        // SAFETY: `f` is a row-major [c, n] matrix; its transpose is read via
        // swapped strides. `data` is a distinct row-major [c, c] buffer.
        unsafe {
            matrixmultiply::sgemm(
                c,
                n,
                c,
                alpha,
                f.as_ptr(),
                n as isize,
                1,
                f.as_ptr(),
                1,
                n as isize,
                0.0,
                data.as_mut_ptr(),
                c as isize,
                1,
            );
        }
        for i in 0..c {
            for j in 0..i {
                data[i * c + j] = data[j * c + i];
            }
        }
    }
    GramMatrix {
        dim: c,
        n_positions: n,
        data,
    }
}
