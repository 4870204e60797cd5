//! Layers, losses, networks and training.

pub mod adam;
pub mod conv;
pub(crate) mod engine;
pub mod loss;
pub mod maxout;
pub mod network;
pub mod train;

pub use adam::Adam;
pub use conv::{complex_conv2d, conv2d, ComplexConvLayer, RealConvLayer};
pub use loss::{complex_mse, complex_mse_batch, real_mse};
pub use maxout::{amu_backward, amu_forward, mu_backward, mu_forward, Selection};
pub use network::{xavier_bound, xavier_init, ConvUnit, Network, Signal, Tape};
pub use train::{
    batch_gradient, evaluate, sample_loss, train, EpochRecord, Sample, TrainReport, TrainerConfig,
};
