//! Analytic propagation of Gaussian, Cauchy and α-stable distributions through
//! feedforward networks, with distribution-aware training losses and
//! evaluation metrics.

pub mod data;
pub mod distprop;
pub mod experiments;
mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod train;
pub mod numerics;

pub use error::{Error, Result};
