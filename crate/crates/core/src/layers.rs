//! Hebbian convolutional layers: selection, adaptive thresholds, pruning
//! masks and the per-batch training step.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Error, Result};
use crate::hebbian::{hebbian_update_via_gradient, HebbRule, PlasticityBatch};
use crate::tensor::{avg_pool2, conv2d_sparse, conv2d_valid, standardize_sample, Dims4, KernelDims, Tensor4, WeightTensor};

/// How a layer computes the activity it transmits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ActivationMode {
    /// Binary winner-take-all, one winner per position.
    #[default]
    WtaBinary,
    /// Binary k-winners-take-all.
    KWta(usize),
    /// Mean-subtracted, rectified activity.
    Triangle,
}

impl ActivationMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wta" => Some(ActivationMode::WtaBinary),
            "triangle" => Some(ActivationMode::Triangle),
            _ => {
                let k = s.strip_prefix("kwta:")?.parse().ok()?;
                (k >= 1).then_some(ActivationMode::KWta(k))
            }
        }
    }
}

impl core::fmt::Display for ActivationMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ActivationMode::WtaBinary => f.write_str("wta"),
            ActivationMode::KWta(k) => write!(f, "kwta:{k}"),
            ActivationMode::Triangle => f.write_str("triangle"),
        }
    }
}

/// Shape and behaviour of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub filters: usize,
    pub kernel: usize,
    pub activation: ActivationMode,
    /// Winners per position for plasticity.
    pub plasticity_k: usize,
    /// Fraction of connections kept by the pruning mask, in (0, 1].
    pub prune_density: f64,
}

impl LayerSpec {
    pub fn validate(&self, in_channels: usize) -> Result<()> {
        if self.filters == 0 || self.kernel == 0 || in_channels == 0 {
            return Err(Error::Config(alloc::format!(
                "layer needs positive filters/kernel/inputs, got {} filters, kernel {}, {in_channels} inputs",
                self.filters,
                self.kernel
            )));
        }
        if !(self.prune_density > 0.0 && self.prune_density <= 1.0) {
            return Err(Error::Config(alloc::format!(
                "prune density must lie in (0, 1], got {}",
                self.prune_density
            )));
        }
        if self.plasticity_k == 0 || self.plasticity_k > self.filters {
            return Err(Error::Config(alloc::format!(
                "plasticity k = {} must lie in 1..={}",
                self.plasticity_k,
                self.filters
            )));
        }
        match self.activation {
            ActivationMode::KWta(k) if k == 0 || k > self.filters => Err(Error::Config(alloc::format!(
                "k-WTA k = {k} must lie in 1..={}",
                self.filters
            ))),
            ActivationMode::Triangle if self.filters < 2 => {
                Err(Error::Config("triangle activation needs at least 2 filters".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Constants of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub rule: HebbRule,
    pub learning_rate: f64,
    /// Additive gain of the threshold controller.
    pub threshold_rate: f64,
    /// EMA coefficient for the firing-rate estimate.
    pub ema_alpha: f64,
}

/// One Hebbian convolutional layer and its homeostatic state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    weights: WeightTensor,
    bias: Vec<f32>,
    mask: WeightTensor,
    rate_ema: Vec<f32>,
    activation: ActivationMode,
    plasticity_k: usize,
    prune_density: f64,
}

/// Result of a training step.
#[derive(Debug, Clone)]
pub struct LayerStep {
    /// Activation output, pooled unless the step was unpooled.
    pub output: Tensor4,
    /// Plasticity wins per channel in this batch.
    pub wins: Vec<usize>,
}

/// Layers at or below this connectivity convolve over nonzero taps only.
const SPARSE_CONV_DENSITY: f64 = 0.1;
const RESCUE_SEED: u64 = 0x5e_ed0f_f11e;

impl ConvLayer {
    /// Random layer: i.i.d. normal weights, masked and normalized.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, spec: &LayerSpec, rng: &mut R) -> Result<Self> {
        spec.validate(in_channels)?;
        let dims = KernelDims::new(spec.filters, in_channels, spec.kernel, spec.kernel);
        let mask = sample_mask(dims, spec.prune_density, rng);
        let data = (0..dims.len())
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                v as f32
            })
            .collect();
        let weights = WeightTensor::from_vec(dims, data)?;
        let target = spec.plasticity_k as f32 / spec.filters as f32;
        let mut layer = ConvLayer {
            weights,
            bias: vec![0.0; spec.filters],
            mask,
            rate_ema: vec![target; spec.filters],
            activation: spec.activation,
            plasticity_k: spec.plasticity_k,
            prune_density: spec.prune_density,
        };
        layer.apply_mask_and_normalize();
        Ok(layer)
    }

    /// Reassembles a layer from stored state.
    pub fn from_parts(
        weights: WeightTensor,
        bias: Vec<f32>,
        mask: WeightTensor,
        rate_ema: Vec<f32>,
        activation: ActivationMode,
        plasticity_k: usize,
        prune_density: f64,
    ) -> Result<Self> {
        let dims = weights.dims();
        let n = dims.out_channels;
        if mask.dims() != dims || bias.len() != n || rate_ema.len() != n {
            return Err(shape_err!(
                "layer parts disagree: weights {dims}, mask {}, {} biases, {} rates",
                mask.dims(),
                bias.len(),
                rate_ema.len()
            ));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Data("mask entries must be 0 or 1".into()));
        }
        if rate_ema.iter().any(|r| !(0.0..=1.0).contains(r)) || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Data("firing rates must lie in [0, 1] and biases be finite".into()));
        }
        let spec = LayerSpec {
            filters: n,
            kernel: dims.height,
            activation,
            plasticity_k,
            prune_density,
        };
        spec.validate(dims.in_channels)?;
        Ok(ConvLayer {
            weights,
            bias,
            mask,
            rate_ema,
            activation,
            plasticity_k,
            prune_density,
        })
    }

    pub fn weights(&self) -> &WeightTensor {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn mask(&self) -> &WeightTensor {
        &self.mask
    }

    pub fn rate_ema(&self) -> &[f32] {
        &self.rate_ema
    }

    pub fn activation(&self) -> ActivationMode {
        self.activation
    }

    pub fn plasticity_k(&self) -> usize {
        self.plasticity_k
    }

    pub fn prune_density(&self) -> f64 {
        self.prune_density
    }

    pub fn filters(&self) -> usize {
        self.weights.dims().out_channels
    }

    /// Target firing rate `plasticity_k / N`.
    pub fn target_rate(&self) -> f64 {
        self.plasticity_k as f64 / self.filters() as f64
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            filters: self.filters(),
            kernel: self.weights.dims().height,
            activation: self.activation,
            plasticity_k: self.plasticity_k,
            prune_density: self.prune_density,
        }
    }

    /// Output dimensions (after pooling) for an input of `dims`.
    pub fn output_dims(&self, dims: Dims4) -> Result<Dims4> {
        let k = self.weights.dims();
        if dims.channels != k.in_channels || dims.height < k.height || dims.width < k.width {
            return Err(shape_err!("input {dims} does not fit layer weights {k}"));
        }
        let (h, w) = (dims.height - k.height + 1, dims.width - k.width + 1);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("layer output plane {h}x{w} cannot be pooled by 2"));
        }
        Ok(Dims4::new(dims.batch, k.out_channels, h / 2, w / 2))
    }

    /// Zeroes pruned weights and rescales every filter to unit norm.
    /// A filter left with no surviving mass gets fresh random values on its
    /// surviving entries.
    pub fn apply_mask_and_normalize(&mut self) {
        let n = self.filters();
        for o in 0..n {
            let mask = self.mask.filter(o);
            let filter = self.weights.filter_mut(o);
            for (w, &m) in filter.iter_mut().zip(mask) {
                if m == 0.0 {
                    *w = 0.0;
                }
            }
            let mut norm_sq: f64 = filter.iter().map(|&w| w as f64 * w as f64).sum();
            if !(norm_sq > 0.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(RESCUE_SEED ^ o as u64);
                for (w, &m) in filter.iter_mut().zip(mask) {
                    if m != 0.0 {
                        let v: f64 = StandardNormal.sample(&mut rng);
                        *w = v as f32;
                    }
                }
                norm_sq = filter.iter().map(|&w| w as f64 * w as f64).sum();
            }
            let inv = 1.0 / libm::sqrt(norm_sq);
            for w in filter.iter_mut() {
                *w = (*w as f64 * inv) as f32;
            }
        }
    }

    /// Moves the firing-rate estimate toward this batch's win fractions and
    /// nudges each bias toward the target rate.
    pub fn update_thresholds(&mut self, plasticity_output: &Tensor4, threshold_rate: f64, ema_alpha: f64) -> Result<()> {
        let d = plasticity_output.dims();
        if d.channels != self.filters() {
            return Err(shape_err!(
                "plasticity output {d} has {} channels, layer has {}",
                d.channels,
                self.filters()
            ));
        }
        let wins = count_wins(plasticity_output);
        let columns = (d.batch * d.plane_len()) as f64;
        let target = self.target_rate();
        let alpha = ema_alpha.clamp(0.0, 1.0);
        for ((ema, bias), &w) in self.rate_ema.iter_mut().zip(self.bias.iter_mut()).zip(&wins) {
            let observed = w as f64 / columns;
            let next = ((1.0 - alpha) * *ema as f64 + alpha * observed).clamp(0.0, 1.0);
            *ema = next as f32;
            *bias = (*bias as f64 + threshold_rate * (target - *ema as f64)) as f32;
        }
        Ok(())
    }

    /// Standardized input, linear response and biased response.
    fn respond(&self, x: &Tensor4) -> Result<(Tensor4, Tensor4, Tensor4)> {
        let xs = standardize_sample(x);
        let preact = if self.prune_density <= SPARSE_CONV_DENSITY {
            conv2d_sparse(&xs, &self.weights)?
        } else {
            conv2d_valid(&xs, &self.weights)?
        };
        let mut biased = preact.clone();
        let d = biased.dims();
        let plane = d.plane_len();
        for (k, chunk) in biased.data_mut().chunks_exact_mut(plane).enumerate() {
            let b = self.bias[k % d.channels];
            if b != 0.0 {
                chunk.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok((xs, preact, biased))
    }

    fn activate(&self, biased: &Tensor4) -> Result<Tensor4> {
        match self.activation {
            ActivationMode::WtaBinary => wta_select(biased, 1),
            ActivationMode::KWta(k) => wta_select(biased, k),
            ActivationMode::Triangle => triangle_activation(biased),
        }
    }

    /// Inference: pooled activation output, no state change.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.output_dims(x.dims())?;
        let (_, _, biased) = self.respond(x)?;
        avg_pool2(&self.activate(&biased)?)
    }

    /// One training step on a batch; returns the pooled activation output
    /// computed with the pre-update weights.
    pub fn forward_train(&mut self, x: &Tensor4, params: &StepParams) -> Result<LayerStep> {
        self.output_dims(x.dims())?;
        let step = self.forward_train_unpooled(x, params)?;
        Ok(LayerStep {
            output: avg_pool2(&step.output)?,
            wins: step.wins,
        })
    }

    /// Training step without the final pooling; `output` is the raw
    /// activation at every convolution position.
    pub fn forward_train_unpooled(&mut self, x: &Tensor4, params: &StepParams) -> Result<LayerStep> {
        let (xs, preact, biased) = self.respond(x)?;
        let activation = self.activate(&biased)?;
        let plastic = match self.activation {
            ActivationMode::WtaBinary if self.plasticity_k == 1 => activation.clone(),
            ActivationMode::KWta(k) if k == self.plasticity_k => activation.clone(),
            _ => wta_select(&biased, self.plasticity_k)?,
        };

        if params.learning_rate != 0.0 {
            let batch = PlasticityBatch::new(&xs, &plastic, &preact)?;
            let delta = hebbian_update_via_gradient(params.rule, &batch, &self.weights)?;
            for (w, d) in self.weights.data_mut().iter_mut().zip(delta.data()) {
                *w = (*w as f64 + params.learning_rate * *d as f64) as f32;
            }
            self.apply_mask_and_normalize();
        }
        self.update_thresholds(&plastic, params.threshold_rate, params.ema_alpha)?;
        Ok(LayerStep {
            output: activation,
            wins: count_wins(&plastic),
        })
    }
}

fn count_wins(binary: &Tensor4) -> Vec<usize> {
    let d = binary.dims();
    let mut wins = vec![0usize; d.channels];
    for (k, chunk) in binary.data().chunks_exact(d.plane_len()).enumerate() {
        wins[k % d.channels] += chunk.iter().filter(|&&v| v != 0.0).count();
    }
    wins
}

/// Per-filter mask keeping exactly `ceil(density * fan_in)` entries (at least one).
pub fn sample_mask<R: Rng + ?Sized>(dims: KernelDims, density: f64, rng: &mut R) -> WeightTensor {
    let fan_in = dims.fan_in();
    let keep = (libm::ceil(density * fan_in as f64) as usize).clamp(1, fan_in);
    let mut mask = WeightTensor::zeros(dims);
    for o in 0..dims.out_channels {
        let filter = mask.filter_mut(o);
        if keep == fan_in {
            filter.fill(1.0);
        } else {
            for idx in rand::seq::index::sample(rng, fan_in, keep) {
                filter[idx] = 1.0;
            }
        }
    }
    mask
}

/// Binary k-winners-take-all across channels at every position; ties go
/// to the lowest channel index.
pub fn wta_select(input: &Tensor4, k: usize) -> Result<Tensor4> {
    let d = input.dims();
    if k == 0 || k > d.channels {
        return Err(shape_err!("wta_select: k = {k} must lie in 1..={}", d.channels));
    }
    let plane = d.plane_len();
    let mut out = Tensor4::zeros(d);
    let mut column: Vec<(f32, usize)> = Vec::with_capacity(d.channels);
    for b in 0..d.batch {
        let base = b * d.channels * plane;
        for p in 0..plane {
            if k == 1 {
                let mut best = 0;
                let mut best_v = input.data()[base + p];
                for c in 1..d.channels {
                    let v = input.data()[base + c * plane + p];
                    if v > best_v {
                        best = c;
                        best_v = v;
                    }
                }
                out.data_mut()[base + best * plane + p] = 1.0;
                continue;
            }
            column.clear();
            column.extend((0..d.channels).map(|c| (input.data()[base + c * plane + p], c)));
            if k < d.channels {
                column.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            }
            for &(_, c) in &column[..k] {
                out.data_mut()[base + c * plane + p] = 1.0;
            }
        }
    }
    Ok(out)
}

/// `max(0, a - mean over channels of a)` at every position.
pub fn triangle_activation(input: &Tensor4) -> Result<Tensor4> {
    let d = input.dims();
    if d.channels < 2 {
        return Err(shape_err!("triangle activation needs at least 2 channels, got {d}"));
    }
    let plane = d.plane_len();
    let mut out = Tensor4::zeros(d);
    let mut mean = vec![0.0f64; plane];
    for b in 0..d.batch {
        let base = b * d.channels * plane;
        mean.fill(0.0);
        for c in 0..d.channels {
            for (m, &v) in mean.iter_mut().zip(&input.data()[base + c * plane..base + (c + 1) * plane]) {
                *m += v as f64;
            }
        }
        let inv = 1.0 / d.channels as f64;
        for c in 0..d.channels {
            let src = &input.data()[base + c * plane..base + (c + 1) * plane];
            let dst = &mut out.data_mut()[base + c * plane..base + (c + 1) * plane];
            for ((o, &v), &m) in dst.iter_mut().zip(src).zip(&mean) {
                let r = v as f64 - m * inv;
                *o = if r > 0.0 { r as f32 } else { 0.0 };
            }
        }
    }
    Ok(out)
}
