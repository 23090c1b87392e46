//! Multi-solution TSP: invariant preprocessing, an attention policy with several
//! decoders, REINFORCE training, adaptive active search, solution-set metrics and an
//! exhaustive oracle for small instances.

pub mod aas;
pub mod error;
pub mod harness;
pub mod instances;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod rf;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Instance64 = instances::Instance<f64>;
pub type Instance32 = instances::Instance<f32>;
pub type Tour64 = instances::Tour<f64>;
pub type Tour32 = instances::Tour<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Policy64 = policy::Policy<f64>;
pub type Policy32 = policy::Policy<f32>;
pub type SolutionSet64 = metrics::SolutionSet<f64>;
