//! Dense NCHW tensors and the valid-convolution substrate.
//!
//! Values are stored as `f32`; every reduction (convolution, pooling,
//! moments) accumulates in `f64` and rounds once on store.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gemm;

/// Dimensions of a batched feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims4 {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims4 {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Dims4 {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of entries in one batch element.
    pub const fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn plane_len(&self) -> usize {
        self.height * self.width
    }

    fn check_positive(&self) -> Result<()> {
        if self.batch == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(shape_err!("dimensions must be strictly positive, got {self}"));
        }
        Ok(())
    }
}

impl core::fmt::Display for Dims4 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Batched feature map, `batch x channels x height x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: Dims4,
    data: Vec<f32>,
}

impl Tensor4 {
    /// All-zero tensor. Panics if any dimension is zero.
    pub fn zeros(dims: Dims4) -> Self {
        assert!(!dims.is_empty(), "tensor dimensions must be positive, got {dims}");
        Tensor4 {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn filled(dims: Dims4, value: f32) -> Self {
        let mut t = Self::zeros(dims);
        t.data.fill(value);
        t
    }

    /// Wraps `data`, checking the length against `dims` and rejecting
    /// non-finite entries.
    pub fn from_vec(dims: Dims4, data: Vec<f32>) -> Result<Self> {
        dims.check_positive()?;
        if data.len() != dims.len() {
            return Err(shape_err!(
                "tensor {dims} needs {} values, got {}",
                dims.len(),
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(alloc::format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, c: usize, i: usize, j: usize) -> usize {
        let d = &self.dims;
        debug_assert!(b < d.batch && c < d.channels && i < d.height && j < d.width);
        ((b * d.channels + c) * d.height + i) * d.width + j
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, i: usize, j: usize) -> f32 {
        self.data[self.index(b, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, i: usize, j: usize, value: f32) {
        let k = self.index(b, c, i, j);
        self.data[k] = value;
    }

    pub fn sample(&self, b: usize) -> &[f32] {
        let n = self.dims.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.dims.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Gathers the listed batch elements, in order, into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Tensor4> {
        if indices.is_empty() {
            return Err(shape_err!("cannot select an empty batch"));
        }
        let n = self.dims.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &b in indices {
            if b >= self.dims.batch {
                return Err(shape_err!(
                    "batch index {b} out of range for {}",
                    self.dims
                ));
            }
            data.extend_from_slice(self.sample(b));
        }
        Ok(Tensor4 {
            dims: Dims4 {
                batch: indices.len(),
                ..self.dims
            },
            data,
        })
    }

    /// Same data viewed with new dimensions of equal total size.
    pub fn reshape(self, dims: Dims4) -> Result<Tensor4> {
        dims.check_positive()?;
        if dims.len() != self.data.len() {
            return Err(shape_err!("cannot reshape {} into {dims}", self.dims));
        }
        Ok(Tensor4 {
            dims,
            data: self.data,
        })
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Dimensions of a filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelDims {
    pub out_channels: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
}

impl KernelDims {
    pub const fn new(out_channels: usize, in_channels: usize, height: usize, width: usize) -> Self {
        KernelDims {
            out_channels,
            in_channels,
            height,
            width,
        }
    }

    /// Number of weights per filter (`in_channels * height * width`).
    pub const fn fan_in(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub const fn len(&self) -> usize {
        self.out_channels * self.fan_in()
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl core::fmt::Display for KernelDims {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.out_channels, self.in_channels, self.height, self.width
        )
    }
}

/// Filter bank `out x in x kh x kw`; filter `o` is the contiguous slice
/// `data[o * fan_in .. (o + 1) * fan_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    dims: KernelDims,
    data: Vec<f32>,
}

impl WeightTensor {
    pub fn zeros(dims: KernelDims) -> Self {
        assert!(!dims.is_empty(), "kernel dimensions must be positive, got {dims}");
        WeightTensor {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_vec(dims: KernelDims, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() {
            return Err(shape_err!("kernel dimensions must be positive, got {dims}"));
        }
        if data.len() != dims.len() {
            return Err(shape_err!(
                "weights {dims} need {} values, got {}",
                dims.len(),
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite weight".into()));
        }
        Ok(WeightTensor { dims, data })
    }

    pub fn dims(&self) -> KernelDims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn filter(&self, o: usize) -> &[f32] {
        let n = self.dims.fan_in();
        &self.data[o * n..(o + 1) * n]
    }

    pub fn filter_mut(&mut self, o: usize) -> &mut [f32] {
        let n = self.dims.fan_in();
        &mut self.data[o * n..(o + 1) * n]
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, u: usize, v: usize) -> f32 {
        let d = &self.dims;
        self.data[((o * d.in_channels + c) * d.height + u) * d.width + v]
    }

    /// Euclidean norm of every filter.
    pub fn filter_norms(&self) -> Vec<f64> {
        (0..self.dims.out_channels)
            .map(|o| {
                libm::sqrt(
                    self.filter(o)
                        .iter()
                        .map(|&w| w as f64 * w as f64)
                        .sum::<f64>(),
                )
            })
            .collect()
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&w| w as f64 * w as f64).sum()
    }

    /// `||self - other||_F / max(||other||_F, tiny)`.
    pub fn relative_distance(&self, other: &WeightTensor) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        libm::sqrt(diff) / libm::sqrt(other.norm_sq()).max(1e-30)
    }
}

/// Copies the `kh x kw` patches of one `c x h x w` sample into a
/// `(c*kh*kw) x (oh*ow)` column matrix, row index `c*kh*kw + u*kw + v`.
fn im2col_sample(src: &[f32], c: usize, h: usize, w: usize, kh: usize, kw: usize, dst: &mut [f64]) {
    let cols = (h - kh + 1) * (w - kw + 1);
    im2col_strided(src, c, h, w, kh, kw, dst, cols, 0);
}

/// Unfolds one sample into columns `offset..offset + positions` of a
/// matrix whose rows are `stride` long.
#[allow(clippy::too_many_arguments)]
fn im2col_strided(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    dst: &mut [f64],
    stride: usize,
    offset: usize,
) {
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let cols = oh * ow;
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for u in 0..kh {
            for v in 0..kw {
                let row = (ch * kh + u) * kw + v;
                let out = &mut dst[row * stride + offset..row * stride + offset + cols];
                for i in 0..oh {
                    let line = &plane[(i + u) * w + v..(i + u) * w + v + ow];
                    for (d, s) in out[i * ow..(i + 1) * ow].iter_mut().zip(line) {
                        *d = *s as f64;
                    }
                }
            }
        }
    }
}

fn check_kernel_fits(op: &str, dims: Dims4, kh: usize, kw: usize) -> Result<()> {
    if kh == 0 || kw == 0 {
        return Err(shape_err!("{op}: kernel {kh}x{kw} must be non-empty"));
    }
    if dims.height < kh || dims.width < kw {
        return Err(shape_err!(
            "{op}: kernel {kh}x{kw} larger than input plane {}x{}",
            dims.height,
            dims.width
        ));
    }
    Ok(())
}

const CONV_GROUP_COLUMNS: usize = 4096;

/// Valid (unpadded), stride-1 cross-correlation:
/// `out[b,o,i,j] = sum_{c,u,v} input[b,c,i+u,j+v] * weights[o,c,u,v]`.
pub fn conv2d_valid(input: &Tensor4, weights: &WeightTensor) -> Result<Tensor4> {
    let d = input.dims();
    let k = weights.dims();
    if d.channels != k.in_channels {
        return Err(shape_err!(
            "conv2d_valid: input has {} channels ({d}) but weights expect {} ({k})",
            d.channels,
            k.in_channels
        ));
    }
    check_kernel_fits("conv2d_valid", d, k.height, k.width)?;
    let oh = d.height - k.height + 1;
    let ow = d.width - k.width + 1;
    let fan_in = k.fan_in();
    let positions = oh * ow;

    // several samples share one product so the multiply sees wide operands
    let group = (CONV_GROUP_COLUMNS / positions).clamp(1, d.batch.max(1));
    let w64: Vec<f64> = weights.data().iter().map(|&x| x as f64).collect();
    let mut cols = vec![0.0f64; fan_in * positions * group];
    let mut prod = vec![0.0f64; k.out_channels * positions * group];
    let out_dims = Dims4::new(d.batch, k.out_channels, oh, ow);
    let mut out = Vec::with_capacity(out_dims.len());
    for first in (0..d.batch).step_by(group) {
        let n = group.min(d.batch - first);
        let stride = n * positions;
        for s in 0..n {
            let src = input.sample(first + s);
            im2col_strided(src, d.channels, d.height, d.width, k.height, k.width, &mut cols, stride, s * positions);
        }
        gemm::matmul(k.out_channels, fan_in, stride, &w64, &cols, &mut prod);
        for s in 0..n {
            for o in 0..k.out_channels {
                let row = &prod[o * stride + s * positions..o * stride + (s + 1) * positions];
                out.extend(row.iter().map(|&v| v as f32));
            }
        }
    }
    Ok(Tensor4 {
        dims: out_dims,
        data: out,
    })
}

/// Same result as [`conv2d_valid`], computed tap by tap over the nonzero
/// weights only. Faster for heavily pruned filters.
pub fn conv2d_sparse(input: &Tensor4, weights: &WeightTensor) -> Result<Tensor4> {
    let d = input.dims();
    let k = weights.dims();
    if d.channels != k.in_channels {
        return Err(shape_err!(
            "conv2d_sparse: input has {} channels ({d}) but weights expect {} ({k})",
            d.channels,
            k.in_channels
        ));
    }
    check_kernel_fits("conv2d_sparse", d, k.height, k.width)?;
    let oh = d.height - k.height + 1;
    let ow = d.width - k.width + 1;
    let taps: Vec<Vec<(usize, f64)>> = (0..k.out_channels)
        .map(|o| {
            weights
                .filter(o)
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(r, &w)| {
                    let (c, rem) = (r / (k.height * k.width), r % (k.height * k.width));
                    let (u, v) = (rem / k.width, rem % k.width);
                    (c * d.plane_len() + u * d.width + v, w as f64)
                })
                .collect()
        })
        .collect();
    let out_dims = Dims4::new(d.batch, k.out_channels, oh, ow);
    let mut out = Vec::with_capacity(out_dims.len());
    let mut acc = vec![0.0f64; oh * ow];
    for b in 0..d.batch {
        let x = input.sample(b);
        for filter in &taps {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &(offset, w) in filter {
                for i in 0..oh {
                    let row = &x[offset + i * d.width..offset + i * d.width + ow];
                    for (a, &xv) in acc[i * ow..(i + 1) * ow].iter_mut().zip(row) {
                        *a += w * xv as f64;
                    }
                }
            }
            out.extend(acc.iter().map(|&v| v as f32));
        }
    }
    Ok(Tensor4 {
        dims: out_dims,
        data: out,
    })
}

/// Patch unfolding: output channel `c*kh*kw + u*kw + v` at `(i, j)` holds
/// `input[b, c, i+u, j+v]`. A 1x1 convolution of the result with the
/// flattened filters equals [`conv2d_valid`].
pub fn unfold(input: &Tensor4, kh: usize, kw: usize) -> Result<Tensor4> {
    let d = input.dims();
    check_kernel_fits("unfold", d, kh, kw)?;
    let oh = d.height - kh + 1;
    let ow = d.width - kw + 1;
    let rows = d.channels * kh * kw;
    let out_dims = Dims4::new(d.batch, rows, oh, ow);
    let mut cols = vec![0.0f64; rows * oh * ow];
    let mut out = Vec::with_capacity(out_dims.len());
    for b in 0..d.batch {
        im2col_sample(input.sample(b), d.channels, d.height, d.width, kh, kw, &mut cols);
        out.extend(cols.iter().map(|&v| v as f32));
    }
    Ok(Tensor4 {
        dims: out_dims,
        data: out,
    })
}

/// 2x2 average pooling with stride 2.
pub fn avg_pool2(input: &Tensor4) -> Result<Tensor4> {
    let d = input.dims();
    if !d.height.is_multiple_of(2) || !d.width.is_multiple_of(2) {
        return Err(shape_err!(
            "avg_pool2: plane {}x{} must have even height and width",
            d.height,
            d.width
        ));
    }
    let (oh, ow) = (d.height / 2, d.width / 2);
    let out_dims = Dims4::new(d.batch, d.channels, oh, ow);
    let mut out = Vec::with_capacity(out_dims.len());
    for plane in input.data().chunks_exact(d.plane_len()) {
        for i in 0..oh {
            let top = &plane[2 * i * d.width..(2 * i + 1) * d.width];
            let bottom = &plane[(2 * i + 1) * d.width..(2 * i + 2) * d.width];
            for j in 0..ow {
                let s = top[2 * j] as f64
                    + top[2 * j + 1] as f64
                    + bottom[2 * j] as f64
                    + bottom[2 * j + 1] as f64;
                out.push((s * 0.25) as f32);
            }
        }
    }
    Ok(Tensor4 {
        dims: out_dims,
        data: out,
    })
}

/// Per-sample standard deviations below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Mean and population standard deviation of a slice, in `f64`.
pub fn moments(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, libm::sqrt(var))
}

/// Standardizes one flattened sample in place; constant samples become zeros.
pub fn standardize_in_place(values: &mut [f32]) {
    let (mean, std) = moments(values);
    if !(std >= DEGENERATE_STD) {
        values.fill(0.0);
        return;
    }
    let inv = 1.0 / std;
    for v in values.iter_mut() {
        *v = ((*v as f64 - mean) * inv) as f32;
    }
}

/// Subtracts each batch element's mean and divides by its standard
/// deviation, both taken over all channels and positions.
pub fn standardize_sample(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    let n = out.dims.sample_len();
    for sample in out.data.chunks_exact_mut(n) {
        standardize_in_place(sample);
    }
    out
}
