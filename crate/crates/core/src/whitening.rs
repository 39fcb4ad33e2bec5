//! ZCA whitening fitted over a set of images.
//!
//! The transform is `E (D + eps)^{-1/2} E^T`, where `E`/`D` are the
//! eigenvectors/eigenvalues of the (1/N) covariance of the flattened images.
//! By default each image is standardized (zero mean, unit variance over its
//! own pixels) before it enters the covariance and before it is transformed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gemm;
use crate::linalg::{symmetric_eigen, EigenSolver};
use crate::tensor::{standardize_in_place, Tensor4};

/// Regularization added to every covariance eigenvalue.
pub const DEFAULT_ZCA_EPSILON: f64 = 1e-3;

/// Rows accumulated per covariance update.
const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcaOptions {
    pub epsilon: f64,
    /// Standardize each sample before fitting and applying.
    pub standardize: bool,
    pub solver: EigenSolver,
}

impl Default for ZcaOptions {
    fn default() -> Self {
        ZcaOptions {
            epsilon: DEFAULT_ZCA_EPSILON,
            standardize: true,
            solver: EigenSolver::TridiagonalQl,
        }
    }
}

/// A fitted whitening matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform {
    dim: usize,
    matrix: Vec<f32>,
    epsilon: f64,
    fitted_on: usize,
    standardize: bool,
}

impl ZcaTransform {
    /// The identity transform (standardization only, when enabled).
    pub fn identity(dim: usize, standardize: bool) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        ZcaTransform {
            dim,
            matrix,
            epsilon: 0.0,
            fitted_on: 0,
            standardize,
        }
    }

    /// Rebuilds a transform from stored parts, validating shape and symmetry.
    pub fn from_parts(
        dim: usize,
        matrix: Vec<f32>,
        epsilon: f64,
        fitted_on: usize,
        standardize: bool,
    ) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(shape_err!(
                "ZCA matrix for dimension {dim} needs {} entries, got {}",
                dim * dim,
                matrix.len()
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) || !(epsilon >= 0.0) {
            return Err(Error::Data("ZCA matrix or epsilon is not finite".into()));
        }
        Ok(ZcaTransform {
            dim,
            matrix,
            epsilon,
            fitted_on,
            standardize,
        })
    }

    /// Fits on `count` row vectors of length `dim` stored back to back.
    pub fn fit_rows(rows: &[f32], dim: usize, options: ZcaOptions) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(shape_err!(
                "{} values do not form rows of length {dim}",
                rows.len()
            ));
        }
        let count = rows.len() / dim;
        if count < 2 {
            return Err(Error::Fit(alloc::format!(
                "ZCA needs at least 2 samples, got {count}"
            )));
        }
        if !(options.epsilon >= 0.0) || !options.epsilon.is_finite() {
            return Err(Error::Config(alloc::format!(
                "ZCA epsilon must be finite and non-negative, got {}",
                options.epsilon
            )));
        }

        let prepare = |src: &[f32], dst: &mut Vec<f32>| {
            dst.clear();
            dst.extend_from_slice(src);
            if options.standardize {
                standardize_in_place(dst);
            }
        };

        // pass 1: mean
        let mut scratch = Vec::with_capacity(dim);
        let mut mean = vec![0.0f64; dim];
        for row in rows.chunks_exact(dim) {
            prepare(row, &mut scratch);
            for (m, &x) in mean.iter_mut().zip(&scratch) {
                *m += x as f64;
            }
        }
        for m in mean.iter_mut() {
            *m /= count as f64;
        }

        // pass 2: centered second moment, fixed chunk order
        let mut cov = vec![0.0f64; dim * dim];
        let mut block = vec![0.0f64; CHUNK_ROWS * dim];
        for chunk in rows.chunks(CHUNK_ROWS * dim) {
            let n = chunk.len() / dim;
            for (r, row) in chunk.chunks_exact(dim).enumerate() {
                prepare(row, &mut scratch);
                for ((dst, &x), m) in block[r * dim..(r + 1) * dim].iter_mut().zip(&scratch).zip(&mean) {
                    *dst = x as f64 - m;
                }
            }
            gemm::accumulate_gram(n, dim, &block[..n * dim], &mut cov);
        }
        let inv_n = 1.0 / count as f64;
        for c in cov.iter_mut() {
            *c *= inv_n;
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariance contains non-finite entries".into()));
        }
        // symmetrize away accumulation rounding
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (cov[i * dim + j] + cov[j * dim + i]);
                cov[i * dim + j] = s;
                cov[j * dim + i] = s;
            }
        }

        let matrix = whitening_matrix(&cov, dim, options.epsilon, options.solver)?;
        Ok(ZcaTransform {
            dim,
            matrix: matrix.iter().map(|&v| v as f32).collect(),
            epsilon: options.epsilon,
            fitted_on: count,
            standardize: options.standardize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn fitted_on(&self) -> usize {
        self.fitted_on
    }

    pub fn standardizes(&self) -> bool {
        self.standardize
    }

    /// Row-major `dim x dim` matrix.
    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[i * n + j] as f64 - self.matrix[j * n + i] as f64).abs());
            }
        }
        worst
    }

    /// Whitens `count` rows of length `dim` stored back to back.
    pub fn apply_rows(&self, rows: &[f32]) -> Result<Vec<f32>> {
        let dim = self.dim;
        if rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(shape_err!(
                "ZCA expects rows of length {dim}, got {} values",
                rows.len()
            ));
        }
        let m64: Vec<f64> = self.matrix.iter().map(|&v| v as f64).collect();
        let mut out = Vec::with_capacity(rows.len());
        let mut scratch = Vec::with_capacity(dim);
        let mut block = vec![0.0f64; CHUNK_ROWS * dim];
        let mut prod = vec![0.0f64; CHUNK_ROWS * dim];
        for chunk in rows.chunks(CHUNK_ROWS * dim) {
            let n = chunk.len() / dim;
            for (r, row) in chunk.chunks_exact(dim).enumerate() {
                scratch.clear();
                scratch.extend_from_slice(row);
                if self.standardize {
                    standardize_in_place(&mut scratch);
                }
                for (dst, &x) in block[r * dim..(r + 1) * dim].iter_mut().zip(&scratch) {
                    *dst = x as f64;
                }
            }
            // rows x M^T == rows x M (M symmetric)
            gemm::matmul(n, dim, dim, &block[..n * dim], &m64, &mut prod[..n * dim]);
            out.extend(prod[..n * dim].iter().map(|&v| v as f32));
        }
        Ok(out)
    }
}

fn whitening_matrix(cov: &[f64], dim: usize, epsilon: f64, solver: EigenSolver) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(cov, dim, solver)?;
    // scaled[j] = (lambda_j + eps)^{-1/2} * e_j
    let mut scaled = eig.vectors.clone();
    for j in 0..dim {
        let lambda = eig.values[j].max(0.0) + epsilon;
        if !(lambda > 0.0) {
            return Err(Error::Fit(alloc::format!(
                "covariance eigenvalue {j} is {:e}; whitening needs epsilon > 0 for rank-deficient data",
                eig.values[j]
            )));
        }
        let s = 1.0 / libm::sqrt(lambda);
        for v in scaled[j * dim..(j + 1) * dim].iter_mut() {
            *v *= s;
        }
    }
    // M = E^T-rows^T * scaled-rows
    let mut m = vec![0.0f64; dim * dim];
    gemm::matmul_at_b(dim, dim, dim, &eig.vectors, &scaled, &mut m);
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (m[i * dim + j] + m[j * dim + i]);
            m[i * dim + j] = s;
            m[j * dim + i] = s;
        }
    }
    Ok(m)
}

/// Fits ZCA over a batch of images with per-image standardization.
pub fn fit_zca(images: &Tensor4, epsilon: f64) -> Result<ZcaTransform> {
    fit_zca_with(
        images,
        ZcaOptions {
            epsilon,
            ..ZcaOptions::default()
        },
    )
}

pub fn fit_zca_with(images: &Tensor4, options: ZcaOptions) -> Result<ZcaTransform> {
    ZcaTransform::fit_rows(images.data(), images.dims().sample_len(), options)
}

/// Whitens every image of the batch, keeping its dimensions.
pub fn apply_zca(transform: &ZcaTransform, images: &Tensor4) -> Result<Tensor4> {
    let dims = images.dims();
    if dims.sample_len() != transform.dim() {
        return Err(shape_err!(
            "image {dims} has {} values per sample, transform expects {}",
            dims.sample_len(),
            transform.dim()
        ));
    }
    Tensor4::from_vec(dims, transform.apply_rows(images.data())?)
}
