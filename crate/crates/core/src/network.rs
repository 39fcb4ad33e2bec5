//! Multi-layer Hebbian network, its configuration and the training loop.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::hebbian::HebbRule;
use crate::layers::{ActivationMode, ConvLayer, LayerSpec, StepParams};
use crate::tensor::{Dims4, Tensor4};

/// Order in which layers learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Every batch flows through all layers and all of them learn.
    #[default]
    Concurrent,
    /// Layer `l` trains for all epochs on the frozen output of layers `< l`.
    Greedy,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Concurrent => "concurrent",
            Schedule::Greedy => "greedy",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "concurrent" => Some(Schedule::Concurrent),
            "greedy" => Some(Schedule::Greedy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Channels, height and width of one input image.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub threshold_rate: f64,
    /// Horizon of the firing-rate EMA as a fraction of an epoch.
    pub ema_horizon_epochs: f64,
    pub rule: HebbRule,
    pub schedule: Schedule,
    pub seed: u64,
}

impl NetworkConfig {
    /// Three WTA layers, dense connectivity (100/196/400 filters, kernels 5/3/3).
    pub fn default_preset() -> Self {
        let layer = |filters, kernel| LayerSpec {
            filters,
            kernel,
            activation: ActivationMode::WtaBinary,
            plasticity_k: 1,
            prune_density: 1.0,
        };
        NetworkConfig {
            input: (3, 32, 32),
            layers: alloc::vec![layer(100, 5), layer(196, 3), layer(400, 3)],
            epochs: 20,
            batch_size: 128,
            learning_rate: 0.01,
            threshold_rate: 0.02,
            ema_horizon_epochs: 0.1,
            rule: HebbRule::Instar,
            schedule: Schedule::Concurrent,
            seed: 0,
        }
    }

    /// Default preset with triangle activations and 1% connectivity above layer 1.
    pub fn triangle_pruned_preset() -> Self {
        let mut cfg = Self::default_preset();
        for layer in cfg.layers.iter_mut().skip(1) {
            layer.activation = ActivationMode::Triangle;
            layer.prune_density = 0.01;
        }
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(Self::default_preset()),
            "triangle-pruned" => Some(Self::triangle_pruned_preset()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        for (name, v) in [
            ("learning rate", self.learning_rate),
            ("threshold rate", self.threshold_rate),
            ("EMA horizon", self.ema_horizon_epochs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        let mut dims = Dims4::new(1, c, h, w);
        for (i, spec) in self.layers.iter().enumerate() {
            spec.validate(dims.channels).map_err(|e| Error::Config(alloc::format!("layer {}: {e}", i + 1)))?;
            if dims.height < spec.kernel || dims.width < spec.kernel {
                return Err(Error::Config(alloc::format!(
                    "layer {}: kernel {} exceeds input plane {}x{}",
                    i + 1,
                    spec.kernel,
                    dims.height,
                    dims.width
                )));
            }
            let (oh, ow) = (dims.height - spec.kernel + 1, dims.width - spec.kernel + 1);
            if oh % 2 != 0 || ow % 2 != 0 {
                return Err(Error::Config(alloc::format!(
                    "layer {}: output plane {oh}x{ow} cannot be pooled by 2",
                    i + 1
                )));
            }
            dims = Dims4::new(1, spec.filters, oh / 2, ow / 2);
        }
        Ok(())
    }

    /// Per-layer pooled output dimensions for a single image.
    pub fn output_dims(&self) -> Result<Vec<Dims4>> {
        self.validate()?;
        let (c, h, w) = self.input;
        let mut dims = Dims4::new(1, c, h, w);
        let mut out = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            dims = Dims4::new(1, spec.filters, (dims.height - spec.kernel).div_ceil(2), (dims.width - spec.kernel).div_ceil(2));
            out.push(dims);
        }
        Ok(out)
    }

    /// EMA coefficient per batch for a training set of `samples` images.
    pub fn ema_alpha(&self, samples: usize) -> f64 {
        let batches_per_epoch = samples as f64 / self.batch_size as f64;
        (1.0 / (self.ema_horizon_epochs * batches_per_epoch)).min(1.0)
    }

    pub fn describe(&self) -> String {
        let mut s = alloc::format!(
            "input {}x{}x{}, rule {}, schedule {}, epochs {}, batch {}, lr {}, threshold rate {}, ema horizon {} epochs, seed {}",
            self.input.0,
            self.input.1,
            self.input.2,
            self.rule.name(),
            self.schedule.name(),
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.threshold_rate,
            self.ema_horizon_epochs,
            self.seed
        );
        for (i, l) in self.layers.iter().enumerate() {
            s.push_str(&alloc::format!(
                "\nlayer {}: {} filters, {}x{} kernel, activation {}, plasticity k {}, density {}",
                i + 1,
                l.filters,
                l.kernel,
                l.kernel,
                l.activation,
                l.plasticity_k,
                l.prune_density
            ));
        }
        s
    }
}

/// Where a training step happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    /// Layer that learned in this step (`None` when all of them did).
    pub layer: Option<usize>,
    /// Plasticity wins summed over channels, per trained layer.
    pub total_wins: [usize; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<ConvLayer>,
    input: (usize, usize, usize),
    epochs_done: usize,
}

impl Network {
    /// Fresh network drawn from the configuration's seed.
    pub fn new(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.layers.len());
        let mut channels = config.input.0;
        for spec in &config.layers {
            layers.push(ConvLayer::new(channels, spec, &mut rng)?);
            channels = spec.filters;
        }
        Ok(Network {
            layers,
            input: config.input,
            epochs_done: 0,
        })
    }

    pub fn from_layers(layers: Vec<ConvLayer>, input: (usize, usize, usize), epochs_done: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut dims = Dims4::new(1, input.0, input.1, input.2);
        for (i, layer) in layers.iter().enumerate() {
            dims = layer
                .output_dims(dims)
                .map_err(|e| shape_err!("layer {} incompatible with its input: {e}", i + 1))?;
        }
        Ok(Network {
            layers,
            input,
            epochs_done,
        })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn input(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Layer specs of this network (used to rebuild its initialization).
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(ConvLayer::spec).collect()
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let d = x.dims();
        if (d.channels, d.height, d.width) != self.input {
            return Err(shape_err!(
                "network expects {}x{}x{} images, got {d}",
                self.input.0,
                self.input.1,
                self.input.2
            ));
        }
        Ok(())
    }

    /// Pooled output of every layer, without touching any state.
    pub fn forward(&self, x: &Tensor4) -> Result<Vec<Tensor4>> {
        self.check_input(x)?;
        let mut outputs: Vec<Tensor4> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.forward(outputs.last().unwrap_or(x))?;
            outputs.push(next);
        }
        Ok(outputs)
    }

    fn forward_through(&self, x: &Tensor4, upto: usize) -> Result<Tensor4> {
        let mut cur = x.clone();
        for layer in &self.layers[..upto] {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Trains for `config.epochs` further epochs on `data`, calling
    /// `observer` after every step.
    ///
    /// Epoch `e` shuffles the data with a stream derived from `(seed, e)`,
    /// so a run interrupted at an epoch boundary and resumed from a
    /// checkpoint follows the same trajectory.
    pub fn train<F>(&mut self, config: &NetworkConfig, data: &Tensor4, mut observer: F) -> Result<()>
    where
        F: FnMut(&StepInfo, &Network),
    {
        config.validate()?;
        self.check_input(data)?;
        if self.specs() != config.layers {
            return Err(Error::Config("network layers do not match the configuration".into()));
        }
        let n = data.dims().batch;
        let params = StepParams {
            rule: config.rule,
            learning_rate: config.learning_rate,
            threshold_rate: config.threshold_rate,
            ema_alpha: config.ema_alpha(n),
        };
        let first = self.epochs_done;
        match config.schedule {
            Schedule::Concurrent => {
                for epoch in first..first + config.epochs {
                    for (batch, idx) in epoch_batches(config.seed, epoch, n, config.batch_size).iter().enumerate() {
                        let mut x = data.select(idx)?;
                        let mut info = StepInfo {
                            epoch,
                            batch,
                            layer: None,
                            total_wins: [0; 4],
                        };
                        for (l, layer) in self.layers.iter_mut().enumerate() {
                            let step = layer.forward_train(&x, &params)?;
                            if l < 4 {
                                info.total_wins[l] = step.wins.iter().sum();
                            }
                            x = step.output;
                        }
                        observer(&info, self);
                    }
                    self.epochs_done = epoch + 1;
                }
            }
            Schedule::Greedy => {
                for l in 0..self.layers.len() {
                    for epoch in first..first + config.epochs {
                        for (batch, idx) in epoch_batches(config.seed, epoch, n, config.batch_size).iter().enumerate() {
                            let x = self.forward_through(&data.select(idx)?, l)?;
                            let step = self.layers[l].forward_train(&x, &params)?;
                            let mut info = StepInfo {
                                epoch,
                                batch,
                                layer: Some(l),
                                total_wins: [0; 4],
                            };
                            if l < 4 {
                                info.total_wins[l] = step.wins.iter().sum();
                            }
                            observer(&info, self);
                        }
                    }
                }
                self.epochs_done = first + config.epochs;
            }
        }
        Ok(())
    }
}

/// Shuffled index batches for one epoch; the last batch may be short.
pub fn epoch_batches(seed: u64, epoch: usize, samples: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Builds and trains a network from scratch.
pub fn network_train(config: &NetworkConfig, data: &Tensor4) -> Result<Network> {
    if data.dims().batch == 0 {
        return Err(Error::Fit("training set is empty".into()));
    }
    let mut net = Network::new(config)?;
    net.train(config, data, |_, _| {})?;
    Ok(net)
}
