//! Linear probes: quadrant features, ridge-regression decoder and accuracy.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gemm::{accumulate_gram, matmul, matmul_at_b};
use crate::linalg::cholesky_solve;
use crate::tensor::Tensor4;

pub const NUM_CLASSES: usize = 10;
/// Default ridge as a fraction of the mean diagonal of `XᵀX`.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-3;
const CHUNK_ROWS: usize = 512;

/// Row-major `rows × cols` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Features {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if cols == 0 {
            return Err(shape_err!("features need at least one column"));
        }
        if data.len() != rows * cols {
            return Err(shape_err!("{} values do not fill a {rows}x{cols} feature matrix", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("features contain non-finite values".into()));
        }
        Ok(Features { rows, cols, data })
    }

    /// Flattens each sample of a tensor into one row.
    pub fn flatten(t: &Tensor4) -> Self {
        let d = t.dims();
        Features {
            rows: d.batch,
            cols: d.sample_len(),
            data: t.data().to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Reorders columns so that new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.cols {
            return Err(shape_err!("permutation of length {} for {} columns", perm.len(), self.cols));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(perm.iter().map(|&p| row[p]));
        }
        Ok(Features { data, ..*self })
    }

    /// Augmented rows `[x, 1]` in f64 for the row range.
    fn augmented(&self, start: usize, end: usize) -> Vec<f64> {
        let f = self.cols;
        let mut out = Vec::with_capacity((end - start) * (f + 1));
        for r in start..end {
            out.extend(self.row(r).iter().map(|&v| v as f64));
            out.push(1.0);
        }
        out
    }
}

/// Per-channel means over the four spatial quadrants, ordered TL, TR, BL, BR.
pub fn quadrants_features(output: &Tensor4) -> Result<Features> {
    let d = output.dims();
    if !d.height.is_multiple_of(2) || !d.width.is_multiple_of(2) {
        return Err(shape_err!("quadrant features need even height and width, got {d}"));
    }
    let (hh, hw) = (d.height / 2, d.width / 2);
    let inv = 1.0 / (hh * hw) as f64;
    let cols = 4 * d.channels;
    let mut data = vec![0.0f32; d.batch * cols];
    for b in 0..d.batch {
        let sample = output.sample(b);
        for (q, (i0, j0)) in [(0, 0), (0, hw), (hh, 0), (hh, hw)].into_iter().enumerate() {
            for c in 0..d.channels {
                let plane = &sample[c * d.plane_len()..(c + 1) * d.plane_len()];
                let mut acc = 0.0f64;
                for i in i0..i0 + hh {
                    acc += plane[i * d.width + j0..i * d.width + j0 + hw].iter().map(|&v| v as f64).sum::<f64>();
                }
                data[b * cols + q * d.channels + c] = (acc * inv) as f32;
            }
        }
    }
    Ok(Features {
        rows: d.batch,
        cols,
        data,
    })
}

/// Least-squares map from features to one-hot class scores.
///
/// Weights are stored row-major as `(feature_dim + 1) × num_classes`, the
/// last row being the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecoder {
    feature_dim: usize,
    num_classes: usize,
    weights: Vec<f64>,
    ridge: f64,
}

impl LinearDecoder {
    pub fn from_parts(feature_dim: usize, num_classes: usize, weights: Vec<f64>, ridge: f64) -> Result<Self> {
        if weights.len() != (feature_dim + 1) * num_classes {
            return Err(shape_err!(
                "decoder weights of length {} do not match {} features and {num_classes} classes",
                weights.len(),
                feature_dim
            ));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("decoder weights contain non-finite values".into()));
        }
        Ok(LinearDecoder {
            feature_dim,
            num_classes,
            weights,
            ridge,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Class scores, row-major `rows × num_classes`.
    pub fn scores(&self, features: &Features) -> Result<Vec<f64>> {
        if features.cols != self.feature_dim {
            return Err(shape_err!(
                "decoder expects {} features, got {}",
                self.feature_dim,
                features.cols
            ));
        }
        let (f1, k) = (self.feature_dim + 1, self.num_classes);
        let mut out = vec![0.0f64; features.rows * k];
        for start in (0..features.rows).step_by(CHUNK_ROWS) {
            let end = (start + CHUNK_ROWS).min(features.rows);
            let x = features.augmented(start, end);
            matmul(end - start, f1, k, &x, &self.weights, &mut out[start * k..end * k]);
        }
        Ok(out)
    }

    /// Highest-scoring class per row, ties to the lowest index.
    pub fn predict(&self, features: &Features) -> Result<Vec<usize>> {
        let scores = self.scores(features)?;
        Ok(scores.chunks(self.num_classes).map(argmax).collect())
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels(features: &Features, labels: &[u8], num_classes: usize) -> Result<()> {
    if labels.len() != features.rows {
        return Err(shape_err!("{} labels for {} feature rows", labels.len(), features.rows));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_classes) {
        return Err(Error::Data(alloc::format!("label {l} outside 0..{num_classes}")));
    }
    Ok(())
}

/// `DEFAULT_RIDGE_SCALE · trace(XᵀX) / F` over the feature columns.
pub fn default_ridge(features: &Features) -> f64 {
    let trace: f64 = features.data.iter().map(|&v| (v as f64) * (v as f64)).sum();
    DEFAULT_RIDGE_SCALE * trace / features.cols as f64
}

/// Solves `(XᵀX + ridge·P) W = XᵀY` for `X = [features, 1]` and one-hot `Y`,
/// where `P` penalizes the feature rows but not the bias row.
pub fn fit_decoder(features: &Features, labels: &[u8], num_classes: usize, ridge: f64) -> Result<LinearDecoder> {
    check_labels(features, labels, num_classes)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(alloc::format!("ridge must be finite and non-negative, got {ridge}")));
    }
    if features.rows == 0 {
        return Err(Error::Fit("cannot fit a decoder on zero samples".into()));
    }
    let (f, k) = (features.cols, num_classes);
    let f1 = f + 1;
    let mut gram = vec![0.0f64; f1 * f1];
    let mut rhs = vec![0.0f64; f1 * k];
    let mut part = vec![0.0f64; f1 * k];
    for start in (0..features.rows).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(features.rows);
        let x = features.augmented(start, end);
        accumulate_gram(end - start, f1, &x, &mut gram);
        let mut y = vec![0.0f64; (end - start) * k];
        for (r, &l) in labels[start..end].iter().enumerate() {
            y[r * k + l as usize] = 1.0;
        }
        matmul_at_b(end - start, f1, k, &x, &y, &mut part);
        rhs.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    for i in 0..f {
        gram[i * f1 + i] += ridge;
    }
    cholesky_solve(&gram, f1, &mut rhs, k)?;
    LinearDecoder::from_parts(f, k, rhs, ridge)
}

/// Fraction of rows whose predicted class equals the label.
pub fn evaluate_accuracy(decoder: &LinearDecoder, features: &Features, labels: &[u8]) -> Result<f64> {
    check_labels(features, labels, decoder.num_classes)?;
    if labels.is_empty() {
        return Err(Error::Data("cannot evaluate on zero samples".into()));
    }
    let predicted = decoder.predict(features)?;
    let hits = predicted.iter().zip(labels).filter(|(p, &l)| **p == l as usize).count();
    Ok(hits as f64 / labels.len() as f64)
}
