#![no_std]
// Negated float comparisons are deliberate NaN guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

mod error;
mod gemm;
pub mod evaluation;
pub mod hebbian;
pub mod layers;
pub mod linalg;
pub mod network;
pub mod tensor;
pub mod whitening;

pub use error::{Error, Result};
pub use evaluation::{evaluate_accuracy, fit_decoder, quadrants_features, Features, LinearDecoder};
pub use hebbian::{hebbian_update_direct, hebbian_update_via_gradient, HebbRule, PlasticityBatch};
pub use layers::{ActivationMode, ConvLayer, LayerSpec};
pub use network::{network_train, Network, NetworkConfig, Schedule};
pub use tensor::{Dims4, KernelDims, Tensor4, WeightTensor};
pub use whitening::{apply_zca, fit_zca, ZcaTransform};
