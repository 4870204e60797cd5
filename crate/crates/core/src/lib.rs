//! Complex-valued convolutional networks for compounding diverging-wave
//! ultrasound images, with the simulation, beamforming and evaluation chain
//! needed to train and assess them.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod error;
pub mod io;
pub mod metrics;
pub mod netspec;
pub mod nn;
pub mod pipeline;
pub mod sim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{amplitude, Complex, ComplexTensor, RealTensor, Shape};
