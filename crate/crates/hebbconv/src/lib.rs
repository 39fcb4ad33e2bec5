//! Dataset ingestion, configuration files, checkpoints, receptive-field
//! export and experiment pipeline around `hebbconv-core`.

pub mod checkpoint;
pub mod cifar;
pub mod config;
mod error;
pub mod pipeline;
pub mod report;
pub mod rf;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use cifar::{load_cifar10, Cifar10Set, Split};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use hebbconv_core as core;
pub use report::{Report, ReportEntry};
pub use rf::export_receptive_fields;
