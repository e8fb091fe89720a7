//! Minimal differentiable numerics for proxy networks: dense and 1-D
//! convolution layers, a reverse-mode tape, Adam, and Fourier features.

pub mod checkpoint;
pub mod fourier;
pub mod kernels;
pub mod network;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use fourier::FourierMap;
pub use kernels::ConvGeometry;
pub use network::{
    Activation, AdamConfig, LayerKind, LayerShape, LayerSpec, LayerVars, NetworkSpec, NetworkState, ParamGrads,
};
pub use tape::{Gradients, Tape, Var};
