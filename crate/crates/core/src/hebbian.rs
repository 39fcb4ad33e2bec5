//! Hebbian weight updates for convolutional filters.
//!
//! Two independent routes compute the same update:
//!
//! * [`hebbian_update_direct`] unfolds the layer input into per-position
//!   patches and applies the rule to each `(patch, output)` pair.
//! * [`hebbian_update_via_gradient`] differentiates a surrogate loss
//!   `L = -1/2 * sum(y^2)`, where `y` is the surrogate output of
//!   [`surrogate_value`], with `dL/dy` evaluated at the layer's real output
//!   instead of at `y`. The negated gradient is the Hebbian update.
//!
//! Neither route applies a learning rate; updates are summed over the batch
//! and every spatial position.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{unfold, Dims4, Tensor4, WeightTensor};

/// The supported local learning rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HebbRule {
    /// `dw ~ y x`
    PlainHebb,
    /// `dw ~ y (x - w)`
    #[default]
    Instar,
    /// `dw ~ y (x - y w)`
    Oja,
}

impl HebbRule {
    pub const ALL: [HebbRule; 3] = [HebbRule::PlainHebb, HebbRule::Instar, HebbRule::Oja];

    pub fn name(self) -> &'static str {
        match self {
            HebbRule::PlainHebb => "hebb",
            HebbRule::Instar => "instar",
            HebbRule::Oja => "oja",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hebb" | "plain" | "plainhebb" => Some(HebbRule::PlainHebb),
            "instar" => Some(HebbRule::Instar),
            "oja" => Some(HebbRule::Oja),
            _ => None,
        }
    }

    /// Coefficient of `w` subtracted from the patch for a unit with output `y`.
    #[inline]
    fn decay(self, y: f64) -> f64 {
        match self {
            HebbRule::PlainHebb => 0.0,
            HebbRule::Instar => 1.0,
            HebbRule::Oja => y,
        }
    }
}

/// The signals one plasticity step needs.
#[derive(Debug, Clone, Copy)]
pub struct PlasticityBatch<'a> {
    /// Layer input, after per-sample standardization.
    pub x: &'a Tensor4,
    /// Real (binary) output used for plasticity.
    pub y_real: &'a Tensor4,
    /// Linear convolution output `w * x`.
    pub preact: &'a Tensor4,
}

impl<'a> PlasticityBatch<'a> {
    /// Checks that the three tensors are mutually consistent and that the
    /// plasticity output is binary.
    pub fn new(x: &'a Tensor4, y_real: &'a Tensor4, preact: &'a Tensor4) -> Result<Self> {
        if y_real.dims() != preact.dims() {
            return Err(shape_err!(
                "plasticity output {} and pre-activation {} differ",
                y_real.dims(),
                preact.dims()
            ));
        }
        if x.dims().batch != y_real.dims().batch {
            return Err(shape_err!(
                "input {} and plasticity output {} have different batch sizes",
                x.dims(),
                y_real.dims()
            ));
        }
        if let Some(v) = y_real.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(alloc::format!(
                "plasticity output must be binary, found {v}"
            )));
        }
        Ok(PlasticityBatch { x, y_real, preact })
    }

    fn check_against(&self, w: &WeightTensor) -> Result<Dims4> {
        let xd = self.x.dims();
        let k = w.dims();
        let yd = self.y_real.dims();
        if xd.channels != k.in_channels || xd.height < k.height || xd.width < k.width {
            return Err(shape_err!("input {xd} does not fit weights {k}"));
        }
        let expect = Dims4::new(xd.batch, k.out_channels, xd.height - k.height + 1, xd.width - k.width + 1);
        if yd != expect {
            return Err(shape_err!(
                "plasticity output {yd} inconsistent with input {xd} and weights {k} (expected {expect})"
            ));
        }
        Ok(yd)
    }
}

/// Surrogate output whose gradient (under the output overwrite) yields the
/// rule: `preact` for plain Hebb, `preact - |w_o|^2 / 2` for Instar and
/// `preact - y_real |w_o|^2 / 2` for Oja.
pub fn surrogate_value(
    rule: HebbRule,
    preact: &Tensor4,
    w: &WeightTensor,
    y_real: &Tensor4,
) -> Result<Tensor4> {
    let d = preact.dims();
    if d.channels != w.dims().out_channels || y_real.dims() != d {
        return Err(shape_err!(
            "surrogate: pre-activation {d}, output {} and weights {} disagree",
            y_real.dims(),
            w.dims()
        ));
    }
    let half_sq: Vec<f64> = w.filter_norms().iter().map(|n| 0.5 * n * n).collect();
    let mut out = preact.clone();
    if rule == HebbRule::PlainHebb {
        return Ok(out);
    }
    let plane = d.plane_len();
    for (k, (o, yr)) in out.data_mut().iter_mut().zip(y_real.data()).enumerate() {
        let c = (k / plane) % d.channels;
        let v = *o as f64 - rule.decay(*yr as f64) * half_sq[c];
        *o = v as f32;
    }
    Ok(out)
}

fn finish(w: &WeightTensor, acc: Vec<f64>) -> WeightTensor {
    WeightTensor::from_vec(w.dims(), acc.into_iter().map(|v| v as f32).collect())
        .expect("update has the weight dimensions")
}

/// Update computed patch by patch over the unfolded input:
/// `delta_o = sum_{b,i,j} y (x_patch - decay(y) w_o)`.
pub fn hebbian_update_direct(
    rule: HebbRule,
    batch: &PlasticityBatch<'_>,
    w: &WeightTensor,
) -> Result<WeightTensor> {
    let yd = batch.check_against(w)?;
    let k = w.dims();
    let fan_in = k.fan_in();
    let patches = unfold(batch.x, k.height, k.width)?;
    let positions = yd.plane_len();

    let mut acc = vec![0.0f64; k.len()];
    let mut patch = vec![0.0f64; fan_in];
    for b in 0..yd.batch {
        let cols = patches.sample(b);
        for p in 0..positions {
            let mut loaded = false;
            for o in 0..k.out_channels {
                let y = batch.y_real.data()[(b * k.out_channels + o) * positions + p] as f64;
                if y == 0.0 {
                    continue;
                }
                if !loaded {
                    for (r, dst) in patch.iter_mut().enumerate() {
                        *dst = cols[r * positions + p] as f64;
                    }
                    loaded = true;
                }
                let decay = rule.decay(y);
                let dst = &mut acc[o * fan_in..(o + 1) * fan_in];
                for ((a, &xp), &wo) in dst.iter_mut().zip(&patch).zip(w.filter(o)) {
                    *a += y * (xp - decay * wo as f64);
                }
            }
        }
    }
    Ok(finish(w, acc))
}

/// Update computed as `-dL/dw` of the surrogate loss, by a reverse pass
/// through the surrogate output and the convolution.
pub fn hebbian_update_via_gradient(
    rule: HebbRule,
    batch: &PlasticityBatch<'_>,
    w: &WeightTensor,
) -> Result<WeightTensor> {
    let yd = batch.check_against(w)?;
    let k = w.dims();
    let xd = batch.x.dims();
    let positions = yd.plane_len();
    let ow = yd.width;

    // dL/dy at the overwritten output: L = -1/2 y^2  =>  dL/dy = -y_real
    let y_real = batch.y_real.data();
    let grad_y = |idx: usize| -(y_real[idx] as f64);

    let mut grad_w = vec![0.0f64; k.len()];

    // surrogate node: y = preact - decay(y_real) * |w_o|^2 / 2
    //   dL/dpreact = dL/dy ; dL/dw_o += -(sum dL/dy * decay) * w_o
    for o in 0..k.out_channels {
        let mut s = 0.0f64;
        for b in 0..yd.batch {
            let base = (b * k.out_channels + o) * positions;
            for p in 0..positions {
                let g = grad_y(base + p);
                if g != 0.0 {
                    s += g * rule.decay(y_real[base + p] as f64);
                }
            }
        }
        if s != 0.0 {
            let dst = &mut grad_w[o * k.fan_in()..(o + 1) * k.fan_in()];
            for (g, &wo) in dst.iter_mut().zip(w.filter(o)) {
                *g -= s * wo as f64;
            }
        }
    }

    // convolution node: dL/dw[o,c,u,v] = sum_{b,i,j} dL/dpreact[b,o,i,j] x[b,c,i+u,j+v]
    let x = batch.x.data();
    for b in 0..yd.batch {
        for o in 0..k.out_channels {
            let base = (b * k.out_channels + o) * positions;
            for p in 0..positions {
                let g = grad_y(base + p);
                if g == 0.0 {
                    continue;
                }
                let (i, j) = (p / ow, p % ow);
                let mut idx = o * k.fan_in();
                for c in 0..k.in_channels {
                    let plane = &x[(b * xd.channels + c) * xd.plane_len()..];
                    for u in 0..k.height {
                        let row = &plane[(i + u) * xd.width + j..(i + u) * xd.width + j + k.width];
                        for &xv in row {
                            grad_w[idx] += g * xv as f64;
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    Ok(finish(w, grad_w.into_iter().map(|g| -g).collect()))
}

/// Trains one linear unit `y = w . x` with Oja's rule, cycling through
/// `data` (rows of length `dim`) in order for `steps` updates.
///
/// The returned weight vector is not renormalized; Oja's rule keeps its
/// norm near one and aligns it with the leading principal component.
pub fn oja_fixed_point_demo(data: &[f64], dim: usize, steps: usize, lr: f64) -> Result<Vec<f64>> {
    if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
        return Err(Error::Fit(alloc::format!(
            "Oja demo needs a non-empty set of {dim}-dimensional rows, got {} values",
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0_1a);
    let mut w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = libm::sqrt(w.iter().map(|v| v * v).sum::<f64>());
    w.iter_mut().for_each(|v| *v /= norm);

    let rows = data.len() / dim;
    for t in 0..steps {
        let x = &data[(t % rows) * dim..(t % rows + 1) * dim];
        let y: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        for (wi, &xi) in w.iter_mut().zip(x) {
            *wi += lr * y * (xi - y * *wi);
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("Oja weights diverged; lower the learning rate".into()));
    }
    Ok(w)
}
