//! Complex steerable pyramids, a Gaussian mutual-information bound between
//! subbands, and the wavelet MI segmentation loss built on them.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod bench;
pub mod error;
pub mod fft;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod mi;
pub mod pyramid;
pub mod scalar;

pub use error::{CwmiError, Result};
pub use scalar::Scalar;

pub use loss::{cwmi, CwmiLoss, LossConfig, LossOutput, LossVariant};
pub use metrics::{BinaryMask, InstanceLabeling, MetricsReport};
pub use pyramid::{Decomposition, PyramidConfig, PyramidMode, SteerablePyramid, SubbandStack};

pub type Decomposition64 = pyramid::Decomposition<f64>;
pub type SubbandStack64 = pyramid::SubbandStack<f64>;
pub type SteerablePyramid64 = pyramid::SteerablePyramid<f64>;
pub type FilterBank64 = pyramid::FilterBank<f64>;
pub type SubbandStatistics64 = mi::SubbandStatistics<f64>;
pub type MiResult64 = mi::MiResult<f64>;
pub type LossConfig64 = loss::LossConfig<f64>;
pub type LossOutput64 = loss::LossOutput<f64>;
pub type CwmiLoss64 = loss::CwmiLoss<f64>;
pub type LinearModel64 = harness::LinearModel<f64>;
