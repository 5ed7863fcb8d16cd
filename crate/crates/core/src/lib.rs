//! Uncoupled unsourced random access: a link-level simulator and Bayesian joint decoder.
//!
//! Users split a `L*J`-bit message into `L` sub-blocks and send one codeword of a common
//! codebook per sub-slot. The receiver detects active codewords per sub-slot with OAMP and
//! EM-learned priors, stitches them into messages by the statistics of their channels, and
//! the [`theory`] module predicts the resulting error probabilities.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64` aliases fix `f64`.

pub mod channel;
pub mod codebook;
pub mod decision;
pub mod em;
pub mod error;
pub mod gamma;
pub mod harness;
pub mod linalg;
pub mod matching;
pub mod oamp;
pub mod scalar;
pub mod stitch;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type Codebook64 = codebook::Codebook<f64>;
pub type Codebook32 = codebook::Codebook<f32>;
pub type Topology64 = channel::Topology<f64>;
pub type PriorEstimates64 = em::PriorEstimates<f64>;
pub type DetectorOptions64 = oamp::DetectorOptions<f64>;
pub type DetectorResult64 = oamp::DetectorResult<f64>;
pub type ActiveCodewordList64 = decision::ActiveCodewordList<f64>;
pub type ClassAssignment64 = stitch::ClassAssignment<f64>;
