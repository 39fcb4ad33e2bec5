use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use hebbconv::checkpoint::{load_zca, save_zca};
use hebbconv::cifar::{load_cifar10_subset, Cifar10Set, Split};
use hebbconv::core::{Network, NetworkConfig};
use hebbconv::pipeline::{evaluate_probes, fit_whitening, whiten};
use hebbconv::{
    export_receptive_fields, load_checkpoint, save_checkpoint, Checkpoint, Error, ExperimentConfig, Report,
    ReportEntry, Result,
};

#[derive(Parser)]
#[command(name = "hebbconv", version, about = "Hebbian convolutional networks on CIFAR-10")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the ZCA whitening on the training images.
    Whiten {
        #[command(flatten)]
        setup: Setup,
        /// Directory holding the CIFAR-10 binary batches.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (receives zca.bin).
        #[arg(long)]
        out: PathBuf,
        /// Use only the first N training images.
        #[arg(long)]
        subset: Option<usize>,
    },
    /// Train a network and write a checkpoint.
    Train {
        #[command(flatten)]
        setup: Setup,
        /// Directory holding the CIFAR-10 binary batches.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (receives checkpoint.bin and config.txt).
        #[arg(long)]
        out: PathBuf,
        /// Use only the first N training images.
        #[arg(long)]
        subset: Option<usize>,
        /// Reuse a whitening fitted by `whiten`.
        #[arg(long)]
        zca: Option<PathBuf>,
        /// Continue training from a checkpoint for `--epochs` more epochs.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Linear-probe accuracies of trained (and optionally untrained) networks.
    Eval {
        /// Directory holding the CIFAR-10 binary batches.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to evaluate; repeat for several networks.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Number of training images used to fit the decoders.
        #[arg(long)]
        subset: Option<usize>,
        /// Number of test images scored.
        #[arg(long)]
        test_subset: Option<usize>,
        /// Also probe the freshly initialized network of each checkpoint.
        #[arg(long)]
        with_untrained: bool,
        /// Directory receiving report.json and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the receptive fields of one layer as an image grid.
    ExportRf {
        /// Trained checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Layer number, starting at 1.
        #[arg(long, default_value_t = 1)]
        layer: usize,
        /// Output file (.png or .ppm) or directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a configuration or the state of a checkpoint.
    Inspect {
        #[command(flatten)]
        setup: Setup,
        /// Checkpoint to summarize; without it the resolved configuration is printed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Setup {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network preset: default or triangle-pruned.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

impl Setup {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::preset("default")?,
        };
        if let Some(seed) = self.seed {
            cfg.network.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.network.epochs = epochs;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Whiten {
            setup,
            data,
            out,
            subset,
        } => cmd_whiten(&setup.resolve()?, &data, &out, subset),
        Command::Train {
            setup,
            data,
            out,
            subset,
            zca,
            resume,
        } => cmd_train(&setup, &data, &out, subset, zca.as_deref(), resume.as_deref()),
        Command::Eval {
            data,
            checkpoints,
            subset,
            test_subset,
            with_untrained,
            out,
        } => cmd_eval(&data, &checkpoints, subset, test_subset, with_untrained, out.as_deref()),
        Command::ExportRf { checkpoint, layer, out } => cmd_export_rf(&checkpoint, layer, &out),
        Command::Inspect { setup, checkpoint } => match checkpoint {
            Some(path) => cmd_inspect(&load_checkpoint(&path)?),
            None => {
                print!("{}", setup.resolve()?.to_text());
                Ok(())
            }
        },
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_split(data: &Path, split: Split, subset: Option<usize>) -> Result<Cifar10Set> {
    let set = load_cifar10_subset(data, split, subset.unwrap_or(usize::MAX))?;
    if set.is_empty() {
        return Err(Error::Config(format!("no {split:?} images selected from {}", data.display())));
    }
    eprintln!("loaded {} {split:?} images from {}", set.len(), data.display());
    Ok(set)
}

fn cmd_whiten(cfg: &ExperimentConfig, data: &Path, out: &Path, subset: Option<usize>) -> Result<()> {
    let set = load_split(data, Split::Train, subset)?;
    let start = Instant::now();
    let zca = fit_whitening(&set.to_tensor()?, cfg.zca_epsilon)?;
    create_dir(out)?;
    let path = out.join("zca.bin");
    save_zca(&zca, &path)?;
    eprintln!(
        "fitted {}-dimensional ZCA on {} images in {:.1} s -> {}",
        zca.dim(),
        zca.fitted_on(),
        start.elapsed().as_secs_f64(),
        path.display()
    );
    Ok(())
}

fn cmd_train(
    setup: &Setup,
    data: &Path,
    out: &Path,
    subset: Option<usize>,
    zca_path: Option<&Path>,
    resume: Option<&Path>,
) -> Result<()> {
    let set = load_split(data, Split::Train, subset)?;
    let images = set.to_tensor()?;
    let start = Instant::now();
    let (config, zca, mut network) = match resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            let mut config = ck.config.clone();
            if setup.config.is_some() || setup.preset.is_some() {
                ck.check_compatible(&setup.resolve()?.network)?;
            }
            if let Some(seed) = setup.seed {
                config.seed = seed;
            }
            if let Some(epochs) = setup.epochs {
                config.epochs = epochs;
            }
            (config, ck.zca, ck.network)
        }
        None => {
            let cfg = setup.resolve()?;
            let zca = match zca_path {
                Some(p) => load_zca(p)?,
                None => fit_whitening(&images, cfg.zca_epsilon)?,
            };
            let network = Network::new(&cfg.network)?;
            (cfg.network, zca, network)
        }
    };
    eprintln!("{}", config.describe());
    let whitened = whiten(&zca, &images)?;
    let batches = images.dims().batch.div_ceil(config.batch_size);
    network.train(&config, &whitened, |info, _| {
        if info.batch + 1 == batches {
            eprintln!(
                "epoch {}{} done ({:.1} s)",
                info.epoch + 1,
                info.layer.map(|l| format!(" of layer {}", l + 1)).unwrap_or_default(),
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    create_dir(out)?;
    let path = out.join("checkpoint.bin");
    let ck = Checkpoint { config, network, zca };
    save_checkpoint(&ck, &path)?;
    let text = ExperimentConfig {
        network: ck.config.clone(),
        zca_epsilon: ck.zca.epsilon(),
    }
    .to_text();
    write_file(&out.join("config.txt"), &text)?;
    eprintln!("wrote {} after {} epochs", path.display(), ck.network.epochs_done());
    Ok(())
}

/// Preset name when the layers match one, the file stem otherwise.
fn network_label(config: &NetworkConfig, path: &Path) -> String {
    for name in ["default", "triangle-pruned"] {
        let preset = NetworkConfig::preset(name).expect("known preset");
        if preset.layers == config.layers && preset.input == config.input {
            return name.to_string();
        }
    }
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_eval(
    data: &Path,
    checkpoints: &[PathBuf],
    subset: Option<usize>,
    test_subset: Option<usize>,
    with_untrained: bool,
    out: Option<&Path>,
) -> Result<()> {
    let start = Instant::now();
    let train = load_split(data, Split::Train, subset)?;
    let test = load_split(data, Split::Test, test_subset)?;
    let (train_x, test_x) = (train.to_tensor()?, test.to_tensor()?);
    let mut report = Report::default();
    for path in checkpoints {
        let ck = load_checkpoint(path)?;
        let label = network_label(&ck.config, path);
        let train_w = whiten(&ck.zca, &train_x)?;
        let test_w = whiten(&ck.zca, &test_x)?;
        let mut runs = vec![("trained", ck.network.clone())];
        if with_untrained {
            runs.push(("untrained", Network::new(&ck.config)?));
        }
        for (state, network) in runs {
            let results = evaluate_probes(&network, (&train_w, train.labels()), (&test_w, test.labels()))?;
            for r in results {
                eprintln!("{label} {state} {}: {:.2}%", r.probe, 100.0 * r.accuracy);
                report.entries.push(ReportEntry {
                    network: label.clone(),
                    layer: r.probe,
                    state: state.to_string(),
                    accuracy: r.accuracy,
                    n_train: train.len(),
                    n_test: test.len(),
                    seed: ck.config.seed,
                });
            }
        }
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("report.json"), &report.to_json()?)?;
        write_file(&dir.join("report.txt"), &text)?;
    }
    Ok(())
}

fn cmd_export_rf(checkpoint: &Path, layer: usize, out: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let count = ck.network.layers().len();
    if layer == 0 || layer > count {
        return Err(Error::Config(format!("--layer must be between 1 and {count}, got {layer}")));
    }
    let is_file = matches!(
        out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm")
    );
    let path = if is_file {
        out.to_path_buf()
    } else {
        create_dir(out)?;
        out.join(format!("rf_layer{layer}.png"))
    };
    let image = export_receptive_fields(&ck.network, layer - 1, &path)?;
    eprintln!("wrote {}x{} grid to {}", image.width, image.height, path.display());
    Ok(())
}

fn summary(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
        n += 1;
    }
    (min, sum / n.max(1) as f64, max)
}

fn cmd_inspect(ck: &Checkpoint) -> Result<()> {
    println!("{}", ck.config.describe());
    println!("epochs done: {}", ck.network.epochs_done());
    println!(
        "zca: dimension {}, epsilon {}, fitted on {} images, per-image standardization {}",
        ck.zca.dim(),
        ck.zca.epsilon(),
        ck.zca.fitted_on(),
        ck.zca.standardizes()
    );
    for (i, layer) in ck.network.layers().iter().enumerate() {
        let norms = summary(layer.weights().filter_norms().into_iter());
        let rates = summary(layer.rate_ema().iter().map(|&r| r as f64));
        let bias = summary(layer.bias().iter().map(|&b| b as f64));
        let kept = layer.mask().data().iter().filter(|&&m| m != 0.0).count();
        println!("layer {}: weights {}", i + 1, layer.weights().dims());
        println!("  filter norms min/mean/max: {:.6} {:.6} {:.6}", norms.0, norms.1, norms.2);
        println!(
            "  firing rate min/mean/max: {:.5} {:.5} {:.5} (target {:.5})",
            rates.0,
            rates.1,
            rates.2,
            layer.target_rate()
        );
        println!("  bias min/mean/max: {:.4} {:.4} {:.4}", bias.0, bias.1, bias.2);
        println!(
            "  connectivity: {kept} of {} weights ({:.2}%)",
            layer.mask().data().len(),
            100.0 * kept as f64 / layer.mask().data().len() as f64
        );
    }
    Ok(())
}
