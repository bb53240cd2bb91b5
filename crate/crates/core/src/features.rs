//! Random Fourier features for the Gaussian kernel.
//!
//! `phi_i(x) = sqrt(2/r) * cos(omega_i . x + b_i)` with `omega_i ~ N(0, I/lambda^2)`
//! and `b_i ~ U[0, 2 pi)`, so that `E[phi(x) . phi(y)] = exp(-|x-y|^2 / (2 lambda^2))`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sample::SampleView;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    frequencies: Vec<f64>,
    offsets: Vec<f64>,
    scale: f64,
    rank: usize,
    dim: usize,
}

impl FeatureMap {
    /// Builds a map from explicit parameters (`frequencies` is `rank x dim`,
    /// row-major).
    pub fn from_parts(frequencies: Vec<f64>, offsets: Vec<f64>, dim: usize) -> Result<Self> {
        let rank = offsets.len();
        if rank == 0 || dim == 0 || frequencies.len() != rank * dim {
            return Err(invalid("feature map shape mismatch"));
        }
        Ok(Self {
            frequencies,
            offsets,
            scale: (2.0 / rank as f64).sqrt(),
            rank,
            dim,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

/// A finite-dimensional feature map `phi: R^d -> R^r`.
pub trait Featurizer: Sync {
    fn rank(&self) -> usize;
    fn dim(&self) -> usize;
    fn featurize_into(&self, x: &[f64], out: &mut [f64]);

    fn featurize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.rank()];
        self.featurize_into(x, &mut out);
        Ok(out)
    }

    /// Features of every row, as an `n x rank` row-major buffer.
    fn featurize_all(&self, s: SampleView<'_>) -> Result<Vec<f64>> {
        if s.d() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: s.d(),
            });
        }
        let r = self.rank();
        let mut out = vec![0.0; s.n() * r];
        let rows_per_chunk = 64;
        crate::par::for_each_chunk_mut(&mut out, rows_per_chunk * r, |c, chunk| {
            for (k, row_out) in chunk.chunks_mut(r).enumerate() {
                self.featurize_into(s.row(c * rows_per_chunk + k), row_out);
            }
        });
        Ok(out)
    }

    /// Mean feature vector over the rows of `s`.
    fn mean_embedding(&self, s: SampleView<'_>) -> Result<Vec<f64>> {
        let r = self.rank();
        let feats = self.featurize_all(s)?;
        let mut mean = vec![0.0; r];
        for row in feats.chunks(r) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let inv = 1.0 / s.n() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        Ok(mean)
    }
}

impl Featurizer for FeatureMap {
    fn rank(&self) -> usize {
        self.rank
    }

    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn featurize_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let w = &self.frequencies[i * self.dim..(i + 1) * self.dim];
            let proj: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            *o = self.scale * (proj + self.offsets[i]).cos();
        }
    }
}

/// Identity features; the induced kernel is the linear kernel `u . v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearFeatures {
    pub dim: usize,
}

impl Featurizer for LinearFeatures {
    fn rank(&self) -> usize {
        self.dim
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn featurize_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Draws `r` random Fourier features for a Gaussian kernel of the given
/// bandwidth in `d` dimensions.
pub fn rff_draw(bandwidth: f64, r: usize, d: usize, rng: &mut RngStream) -> Result<FeatureMap> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if r == 0 || d == 0 {
        return Err(invalid("feature rank and dimension must be positive"));
    }
    let inv = 1.0 / bandwidth;
    let frequencies = (0..r * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * inv)
        .collect();
    let offsets = (0..r).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    FeatureMap::from_parts(frequencies, offsets, d)
}
