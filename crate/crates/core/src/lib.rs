//! Kernel two-sample testing with compressed statistics.

pub mod bench;
pub mod error;
pub mod features;
pub mod kernels;
pub mod mmd;
pub mod par;
pub mod rng;
pub mod sample;
pub mod thinning;
pub mod two_sample;

pub use error::{Error, Result};
pub use kernels::{KernelArg, KernelSpec};
pub use rng::RngStream;
pub use sample::{Coreset, Sample, SampleView};
