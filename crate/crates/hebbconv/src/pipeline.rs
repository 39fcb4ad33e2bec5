//! End-to-end steps shared by the CLI and the tests: whitening a dataset,
//! training, and probing every layer with a linear decoder.

use std::thread;

use hebbconv_core::evaluation::{default_ridge, NUM_CLASSES};
use hebbconv_core::network::StepInfo;
use hebbconv_core::whitening::{fit_zca_with, ZcaOptions};
use hebbconv_core::{
    apply_zca, evaluate_accuracy, fit_decoder, quadrants_features, Features, Network, NetworkConfig, Tensor4,
    ZcaTransform,
};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};

const CHUNK: usize = 250;

/// Fits ZCA (per-image standardization, eigenvalue floor `epsilon`).
pub fn fit_whitening(images: &Tensor4, epsilon: f64) -> Result<ZcaTransform> {
    let options = ZcaOptions {
        epsilon,
        ..ZcaOptions::default()
    };
    Ok(fit_zca_with(images, options)?)
}

fn workers(items: usize) -> usize {
    let n = thread::available_parallelism().map_or(1, |n| n.get());
    n.min(items.div_ceil(CHUNK)).max(1)
}

/// Runs `f` over consecutive sample ranges on worker threads and returns
/// the per-range results in order.
fn map_chunks<T, F>(samples: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T> + Sync,
{
    let ranges: Vec<(usize, usize)> = (0..samples)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(samples)))
        .collect();
    let n = workers(samples);
    let per = ranges.len().div_ceil(n).max(1);
    thread::scope(|scope| {
        let handles: Vec<_> = ranges
            .chunks(per)
            .map(|group| {
                let f = &f;
                scope.spawn(move || group.iter().map(|&(s, e)| f(s, e)).collect::<Result<Vec<T>>>())
            })
            .collect();
        let mut out = Vec::with_capacity(ranges.len());
        for h in handles {
            out.extend(h.join().expect("worker thread panicked")?);
        }
        Ok(out)
    })
}

/// Whitens a batch of images, fanning out over threads.
pub fn whiten(zca: &ZcaTransform, images: &Tensor4) -> Result<Tensor4> {
    let d = images.dims();
    let parts = map_chunks(d.batch, |s, e| {
        let idx: Vec<usize> = (s..e).collect();
        Ok(apply_zca(zca, &images.select(&idx)?)?.into_vec())
    })?;
    Ok(Tensor4::from_vec(d, parts.concat())?)
}

/// Fits the whitening on `images`, then trains a fresh network on the
/// whitened images.
pub fn train_from_scratch<F>(
    config: &NetworkConfig,
    zca_epsilon: f64,
    images: &Tensor4,
    observer: F,
) -> Result<Checkpoint>
where
    F: FnMut(&StepInfo, &Network),
{
    let zca = fit_whitening(images, zca_epsilon)?;
    let whitened = whiten(&zca, images)?;
    let mut network = Network::new(config)?;
    network.train(config, &whitened, observer)?;
    Ok(Checkpoint {
        config: config.clone(),
        network,
        zca,
    })
}

/// Names of the probes `probe_features` returns for a network of `layers`
/// layers: quadrant features of every hidden layer, then the raw output.
pub fn probe_names(layers: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..layers).map(|l| format!("l{l}_quadrants")).collect();
    names.push("final".into());
    names
}

/// Probe features of whitened images, one matrix per probe.
pub fn probe_features(network: &Network, whitened: &Tensor4) -> Result<Vec<Features>> {
    let layers = network.layers().len();
    let parts = map_chunks(whitened.dims().batch, |s, e| {
        let idx: Vec<usize> = (s..e).collect();
        let outs = network.forward(&whitened.select(&idx)?)?;
        let mut feats = Vec::with_capacity(layers);
        for out in &outs[..layers - 1] {
            feats.push(quadrants_features(out)?);
        }
        feats.push(Features::flatten(&outs[layers - 1]));
        Ok(feats)
    })?;
    let mut merged = Vec::with_capacity(layers);
    for p in 0..layers {
        let cols = parts.first().map_or(0, |f: &Vec<Features>| f[p].cols());
        let rows: usize = parts.iter().map(|f| f[p].rows()).sum();
        let data: Vec<f32> = parts.iter().flat_map(|f| f[p].data().iter().copied()).collect();
        merged.push(Features::from_vec(rows, cols, data)?);
    }
    Ok(merged)
}

/// One probe accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub probe: String,
    pub accuracy: f64,
}

/// Fits a decoder per probe on the training features and scores it on the
/// test features.
pub fn evaluate_probes(
    network: &Network,
    train: (&Tensor4, &[u8]),
    test: (&Tensor4, &[u8]),
) -> Result<Vec<ProbeResult>> {
    if train.0.dims().batch == 0 || test.0.dims().batch == 0 {
        return Err(Error::Config("evaluation needs non-empty train and test sets".into()));
    }
    let train_feats = probe_features(network, train.0)?;
    let test_feats = probe_features(network, test.0)?;
    let names = probe_names(network.layers().len());
    let mut out = Vec::with_capacity(names.len());
    for ((name, tr), te) in names.into_iter().zip(&train_feats).zip(&test_feats) {
        let decoder = fit_decoder(tr, train.1, NUM_CLASSES, default_ridge(tr))?;
        out.push(ProbeResult {
            probe: name,
            accuracy: evaluate_accuracy(&decoder, te, test.1)?,
        });
    }
    Ok(out)
}

/// Decoder accuracy on the given probe with training labels permuted.
pub fn shuffled_label_accuracy(train: &Features, labels: &[u8], test: &Features, test_labels: &[u8], seed: u64) -> Result<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut shuffled = labels.to_vec();
    shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let decoder = fit_decoder(train, &shuffled, NUM_CLASSES, default_ridge(train))?;
    Ok(evaluate_accuracy(&decoder, test, test_labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hebbconv_core::Dims4;

    #[test]
    fn chunked_whitening_matches_direct() {
        let d = Dims4::new(600, 1, 2, 2);
        let data: Vec<f32> = (0..d.len()).map(|i| ((i * 37) % 101) as f32 / 50.0).collect();
        let x = Tensor4::from_vec(d, data).unwrap();
        let zca = fit_whitening(&x, 1e-3).unwrap();
        assert_eq!(whiten(&zca, &x).unwrap(), apply_zca(&zca, &x).unwrap());
    }

    #[test]
    fn probe_names_follow_depth() {
        assert_eq!(probe_names(3), ["l1_quadrants", "l2_quadrants", "final"]);
        assert_eq!(probe_names(1), ["final"]);
    }
}
