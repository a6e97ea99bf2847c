// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod alignment;
pub mod bundle;
pub mod error;
pub mod langid;
pub mod matrix;
pub mod probes;
mod rawfile;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Single-precision probe, the default for experiment runs.
pub type Probe = probes::ProbeParameters<f32>;
/// Double-precision probe, used by the gradient oracles.
pub type Probe64 = probes::ProbeParameters<f64>;
pub type ProbeWeights = probes::ProbeWeights<f32>;
pub type ProbeWeights64 = probes::ProbeWeights<f64>;
pub type Dataset = probes::Dataset<f32>;
pub type Dataset64 = probes::Dataset<f64>;
pub type TTest = stats::TTest<f64>;
pub type ConfidenceInterval = stats::ConfidenceInterval<f64>;
