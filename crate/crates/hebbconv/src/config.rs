//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # lines starting with '#' are comments
//! preset = triangle-pruned
//! epochs = 5
//! layer2.prune_density = 0.05
//! ```
//!
//! Keys: `preset`, `input_channels`, `input_height`, `input_width`,
//! `epochs`, `batch_size`, `learning_rate`, `threshold_rate`,
//! `ema_horizon_epochs`, `rule` (hebb, instar, oja), `schedule`
//! (concurrent, greedy), `seed`, `zca_epsilon`, `layers` (layer count) and
//! per layer `layerN.filters`, `layerN.kernel`, `layerN.activation`
//! (wta, kwta:K, triangle), `layerN.plasticity_k`, `layerN.prune_density`.
//! `preset` and `layers` apply first regardless of their position; any other
//! key is an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use hebbconv_core::whitening::DEFAULT_ZCA_EPSILON;
use hebbconv_core::{ActivationMode, HebbRule, NetworkConfig, Schedule};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub zca_epsilon: f64,
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let network = NetworkConfig::preset(name)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}' (expected default or triangle-pruned)")))?;
        Ok(ExperimentConfig {
            network,
            zca_epsilon: DEFAULT_ZCA_EPSILON,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", no + 1)))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if pairs.insert(key.clone(), (no + 1, value)).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", no + 1)));
            }
        }

        let mut cfg = match pairs.remove("preset") {
            Some((_, name)) => Self::preset(&name)?,
            None => Self::preset("default")?,
        };
        if let Some((line, v)) = pairs.remove("layers") {
            let count: usize = parse_value(line, "layers", &v)?;
            let layers = &mut cfg.network.layers;
            if count == 0 {
                return Err(Error::Config(format!("line {line}: at least one layer is required")));
            }
            let last = *layers.last().expect("presets have layers");
            layers.resize(count, last);
        }

        for (key, (line, v)) in &pairs {
            let line = *line;
            let net = &mut cfg.network;
            match key.as_str() {
                "input_channels" => net.input.0 = parse_value(line, key, v)?,
                "input_height" => net.input.1 = parse_value(line, key, v)?,
                "input_width" => net.input.2 = parse_value(line, key, v)?,
                "epochs" => net.epochs = parse_value(line, key, v)?,
                "batch_size" => net.batch_size = parse_value(line, key, v)?,
                "learning_rate" => net.learning_rate = parse_value(line, key, v)?,
                "threshold_rate" => net.threshold_rate = parse_value(line, key, v)?,
                "ema_horizon_epochs" => net.ema_horizon_epochs = parse_value(line, key, v)?,
                "seed" => net.seed = parse_value(line, key, v)?,
                "rule" => {
                    net.rule = HebbRule::from_name(v)
                        .ok_or_else(|| Error::Config(format!("line {line}: unknown rule '{v}'")))?
                }
                "schedule" => {
                    net.schedule = Schedule::from_name(v)
                        .ok_or_else(|| Error::Config(format!("line {line}: unknown schedule '{v}'")))?
                }
                "zca_epsilon" => cfg.zca_epsilon = parse_value(line, key, v)?,
                _ => set_layer_key(net, line, key, v)?,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(self.zca_epsilon > 0.0 && self.zca_epsilon.is_finite()) {
            return Err(Error::Config(format!("zca_epsilon must be positive, got {}", self.zca_epsilon)));
        }
        Ok(())
    }

    /// Text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let n = &self.network;
        let mut s = String::new();
        let _ = writeln!(s, "input_channels = {}", n.input.0);
        let _ = writeln!(s, "input_height = {}", n.input.1);
        let _ = writeln!(s, "input_width = {}", n.input.2);
        let _ = writeln!(s, "epochs = {}", n.epochs);
        let _ = writeln!(s, "batch_size = {}", n.batch_size);
        let _ = writeln!(s, "learning_rate = {:?}", n.learning_rate);
        let _ = writeln!(s, "threshold_rate = {:?}", n.threshold_rate);
        let _ = writeln!(s, "ema_horizon_epochs = {:?}", n.ema_horizon_epochs);
        let _ = writeln!(s, "rule = {}", n.rule.name());
        let _ = writeln!(s, "schedule = {}", n.schedule.name());
        let _ = writeln!(s, "seed = {}", n.seed);
        let _ = writeln!(s, "zca_epsilon = {:?}", self.zca_epsilon);
        let _ = writeln!(s, "layers = {}", n.layers.len());
        for (i, l) in n.layers.iter().enumerate() {
            let p = format!("layer{}", i + 1);
            let _ = writeln!(s, "{p}.filters = {}", l.filters);
            let _ = writeln!(s, "{p}.kernel = {}", l.kernel);
            let _ = writeln!(s, "{p}.activation = {}", l.activation);
            let _ = writeln!(s, "{p}.plasticity_k = {}", l.plasticity_k);
            let _ = writeln!(s, "{p}.prune_density = {:?}", l.prune_density);
        }
        s
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: invalid value '{v}' for '{key}'")))
}

fn set_layer_key(net: &mut NetworkConfig, line: usize, key: &str, v: &str) -> Result<()> {
    let unknown = || Error::Config(format!("line {line}: unknown key '{key}'"));
    let (prefix, field) = key.split_once('.').ok_or_else(unknown)?;
    let index: usize = prefix
        .strip_prefix("layer")
        .and_then(|n| n.parse().ok())
        .ok_or_else(unknown)?;
    let count = net.layers.len();
    let layer = index
        .checked_sub(1)
        .and_then(|i| net.layers.get_mut(i))
        .ok_or_else(|| Error::Config(format!("line {line}: '{key}' refers to a missing layer (network has {count})")))?;
    match field {
        "filters" => layer.filters = parse_value(line, key, v)?,
        "kernel" => layer.kernel = parse_value(line, key, v)?,
        "plasticity_k" => layer.plasticity_k = parse_value(line, key, v)?,
        "prune_density" => layer.prune_density = parse_value(line, key, v)?,
        "activation" => {
            layer.activation = ActivationMode::parse(v)
                .ok_or_else(|| Error::Config(format!("line {line}: unknown activation '{v}'")))?
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# desk run\nepochs = 5\npreset = triangle-pruned\nlayer3.prune_density = 0.05\nrule = oja\n",
        )
        .unwrap();
        assert_eq!(cfg.network.epochs, 5);
        assert_eq!(cfg.network.rule, HebbRule::Oja);
        assert_eq!(cfg.network.layers[1].activation, ActivationMode::Triangle);
        assert_eq!(cfg.network.layers[2].prune_density, 0.05);
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::preset("triangle-pruned").unwrap();
        cfg.network.learning_rate = 0.0123;
        cfg.network.layers[0].activation = ActivationMode::KWta(3);
        cfg.network.layers[0].plasticity_k = 2;
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_malformed_keys_rejected() {
        for text in [
            "epoch = 3",
            "layer9.filters = 3",
            "layer1.width = 3",
            "epochs = three",
            "epochs 3",
            "epochs = 1\nepochs = 2",
            "rule = hebbian",
            "learning_rate = -1",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn layer_count_changes() {
        let cfg = ExperimentConfig::parse("layers = 2").unwrap();
        assert_eq!(cfg.network.layers.len(), 2);
        assert!(ExperimentConfig::parse("layers = 0").is_err());
    }
}
