//! Proxy neural networks for non-linear inverse problems.
//!
//! The crate bundles forward simulators, configuration-loss landscapes,
//! regularized proxy-network training, a two-step BFGS scheme and an
//! evaluation harness that compares it against plain BFGS and gradient
//! descent.

pub mod error;
pub mod eval;
pub mod landscape;
pub mod numcore;
pub mod optimize;
pub mod proxy;
pub mod simulators;

pub use error::{Error, Result};
pub use proxy::model::sha256_hex;
