//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `HEBB`, `u32` version, the training
//! configuration, `u32` epochs done, `u32` layer count, then per layer its
//! kernel dims, activation, plasticity k and density followed by weights,
//! biases, mask and firing-rate EMA as `f32`, and finally the ZCA transform.
//! A standalone ZCA file uses magic `HZCA` and holds only the last section.

use std::fs;
use std::path::Path;

use hebbconv_core::{
    ActivationMode, ConvLayer, HebbRule, KernelDims, Network, NetworkConfig, Schedule, WeightTensor, ZcaTransform,
};

use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"HEBB";
pub const ZCA_MAGIC: &[u8; 4] = b"HZCA";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub network: Network,
    pub zca: ZcaTransform,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(MAGIC);
        w.u32(VERSION);
        write_config(&mut w, &self.config);
        w.u32(self.network.epochs_done() as u32);
        w.u32(self.network.layers().len() as u32);
        for layer in self.network.layers() {
            write_layer(&mut w, layer);
        }
        write_zca(&mut w, &self.zca);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MAGIC)?;
        let config = read_config(&mut r)?;
        let epochs_done = r.u32("epochs done")? as usize;
        let count = r.u32("layer count")? as usize;
        if count != config.layers.len() {
            return Err(Error::Format(format!(
                "{count} stored layers but the stored configuration has {}",
                config.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            layers.push(read_layer(&mut r).map_err(|e| prefix(e, &format!("layer {}", i + 1)))?);
        }
        let network = Network::from_layers(layers, config.input, epochs_done)?;
        if network.specs() != config.layers {
            return Err(Error::Format("stored layers disagree with the stored configuration".into()));
        }
        let zca = read_zca(&mut r)?;
        r.finish()?;
        let (c, h, w) = config.input;
        if zca.dim() != c * h * w {
            return Err(Error::Format(format!(
                "ZCA dimension {} does not match {c}x{h}x{w} inputs",
                zca.dim()
            )));
        }
        Ok(Checkpoint { config, network, zca })
    }

    /// Fails with a compatibility error unless the stored layers have the
    /// shapes `config` asks for.
    pub fn check_compatible(&self, config: &NetworkConfig) -> Result<()> {
        if self.config.input != config.input {
            return Err(Error::Compat(format!(
                "checkpoint input {:?} but configuration input {:?}",
                self.config.input, config.input
            )));
        }
        if self.config.layers.len() != config.layers.len() {
            return Err(Error::Compat(format!(
                "checkpoint has {} layers, configuration {}",
                self.config.layers.len(),
                config.layers.len()
            )));
        }
        for (i, (a, b)) in self.config.layers.iter().zip(&config.layers).enumerate() {
            if a.filters != b.filters || a.kernel != b.kernel {
                return Err(Error::Compat(format!(
                    "layer {}: checkpoint has {} filters of size {}, configuration {} of size {}",
                    i + 1,
                    a.filters,
                    a.kernel,
                    b.filters,
                    b.kernel
                )));
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| prefix(e, &path.display().to_string()))
}

pub fn zca_to_bytes(zca: &ZcaTransform) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(ZCA_MAGIC);
    w.u32(VERSION);
    write_zca(&mut w, zca);
    w.0
}

pub fn zca_from_bytes(bytes: &[u8]) -> Result<ZcaTransform> {
    let mut r = Reader::new(bytes);
    r.magic(ZCA_MAGIC)?;
    let zca = read_zca(&mut r)?;
    r.finish()?;
    Ok(zca)
}

pub fn save_zca(zca: &ZcaTransform, path: &Path) -> Result<()> {
    fs::write(path, zca_to_bytes(zca)).map_err(io_err(path))
}

pub fn load_zca(path: &Path) -> Result<ZcaTransform> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    zca_from_bytes(&bytes).map_err(|e| prefix(e, &path.display().to_string()))
}

fn prefix(e: Error, context: &str) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{context}: {m}")),
        other => other,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(4 * v.len());
        for x in v {
            self.bytes(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!(
                "truncated while reading {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32("version")?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}, expected {VERSION}")));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("{what}: absurd length {n}")))?;
        let raw = self.take(len, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after offset {}",
                self.bytes.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn write_config(w: &mut Writer, c: &NetworkConfig) {
    w.u32(c.input.0 as u32);
    w.u32(c.input.1 as u32);
    w.u32(c.input.2 as u32);
    w.u32(c.epochs as u32);
    w.u32(c.batch_size as u32);
    w.f64(c.learning_rate);
    w.f64(c.threshold_rate);
    w.f64(c.ema_horizon_epochs);
    w.u8(HebbRule::ALL.iter().position(|&r| r == c.rule).unwrap() as u8);
    w.u8(match c.schedule {
        Schedule::Concurrent => 0,
        Schedule::Greedy => 1,
    });
    w.u64(c.seed);
    w.u32(c.layers.len() as u32);
    for l in &c.layers {
        w.u32(l.filters as u32);
        w.u32(l.kernel as u32);
        write_activation(w, l.activation);
        w.u32(l.plasticity_k as u32);
        w.f64(l.prune_density);
    }
}

fn read_config(r: &mut Reader) -> Result<NetworkConfig> {
    let input = (
        r.u32("input channels")? as usize,
        r.u32("input height")? as usize,
        r.u32("input width")? as usize,
    );
    let epochs = r.u32("epochs")? as usize;
    let batch_size = r.u32("batch size")? as usize;
    let learning_rate = r.f64("learning rate")?;
    let threshold_rate = r.f64("threshold rate")?;
    let ema_horizon_epochs = r.f64("EMA horizon")?;
    let rule = *HebbRule::ALL
        .get(r.u8("rule")? as usize)
        .ok_or_else(|| Error::Format("unknown rule tag".into()))?;
    let schedule = match r.u8("schedule")? {
        0 => Schedule::Concurrent,
        1 => Schedule::Greedy,
        t => return Err(Error::Format(format!("unknown schedule tag {t}"))),
    };
    let seed = r.u64("seed")?;
    let count = r.u32("configured layer count")? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        layers.push(hebbconv_core::LayerSpec {
            filters: r.u32("filters")? as usize,
            kernel: r.u32("kernel")? as usize,
            activation: read_activation(r)?,
            plasticity_k: r.u32("plasticity k")? as usize,
            prune_density: r.f64("prune density")?,
        });
    }
    let config = NetworkConfig {
        input,
        layers,
        epochs,
        batch_size,
        learning_rate,
        threshold_rate,
        ema_horizon_epochs,
        rule,
        schedule,
        seed,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("stored configuration is invalid: {e}")))?;
    Ok(config)
}

fn write_activation(w: &mut Writer, a: ActivationMode) {
    let (tag, k) = match a {
        ActivationMode::WtaBinary => (0, 1),
        ActivationMode::KWta(k) => (1, k),
        ActivationMode::Triangle => (2, 0),
    };
    w.u8(tag);
    w.u32(k as u32);
}

fn read_activation(r: &mut Reader) -> Result<ActivationMode> {
    let tag = r.u8("activation")?;
    let k = r.u32("activation k")? as usize;
    match tag {
        0 => Ok(ActivationMode::WtaBinary),
        1 => Ok(ActivationMode::KWta(k)),
        2 => Ok(ActivationMode::Triangle),
        t => Err(Error::Format(format!("unknown activation tag {t}"))),
    }
}

fn write_layer(w: &mut Writer, layer: &ConvLayer) {
    let d = layer.weights().dims();
    for v in [d.out_channels, d.in_channels, d.height, d.width] {
        w.u32(v as u32);
    }
    write_activation(w, layer.activation());
    w.u32(layer.plasticity_k() as u32);
    w.f64(layer.prune_density());
    w.f32s(layer.weights().data());
    w.f32s(layer.bias());
    w.f32s(layer.mask().data());
    w.f32s(layer.rate_ema());
}

fn read_layer(r: &mut Reader) -> Result<ConvLayer> {
    let dims = KernelDims::new(
        r.u32("filters")? as usize,
        r.u32("in channels")? as usize,
        r.u32("kernel height")? as usize,
        r.u32("kernel width")? as usize,
    );
    let activation = read_activation(r)?;
    let plasticity_k = r.u32("plasticity k")? as usize;
    let density = r.f64("prune density")?;
    let len = dims
        .out_channels
        .checked_mul(dims.in_channels)
        .and_then(|v| v.checked_mul(dims.height))
        .and_then(|v| v.checked_mul(dims.width))
        .ok_or_else(|| Error::Format("kernel dims overflow".into()))?;
    let weights = WeightTensor::from_vec(dims, r.f32s(len, "weights")?)?;
    let bias = r.f32s(dims.out_channels, "biases")?;
    let mask = WeightTensor::from_vec(dims, r.f32s(len, "mask")?)?;
    let rate_ema = r.f32s(dims.out_channels, "firing rates")?;
    Ok(ConvLayer::from_parts(weights, bias, mask, rate_ema, activation, plasticity_k, density)?)
}

fn write_zca(w: &mut Writer, z: &ZcaTransform) {
    w.u32(z.dim() as u32);
    w.f64(z.epsilon());
    w.u64(z.fitted_on() as u64);
    w.u8(z.standardizes() as u8);
    w.f32s(z.matrix());
}

fn read_zca(r: &mut Reader) -> Result<ZcaTransform> {
    let dim = r.u32("ZCA dimension")? as usize;
    let epsilon = r.f64("ZCA epsilon")?;
    let fitted_on = r.u64("ZCA sample count")? as usize;
    let standardize = match r.u8("ZCA standardize flag")? {
        0 => false,
        1 => true,
        t => return Err(Error::Format(format!("bad standardize flag {t}"))),
    };
    let len = dim
        .checked_mul(dim)
        .ok_or_else(|| Error::Format("ZCA dimension overflow".into()))?;
    let matrix = r.f32s(len, "ZCA matrix")?;
    Ok(ZcaTransform::from_parts(dim, matrix, epsilon, fitted_on, standardize)?)
}
