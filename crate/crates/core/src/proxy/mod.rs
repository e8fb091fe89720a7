//! Proxy networks `f_θ(Y*, X) ≈ L(Y*, X)`: trajectory encoding, dataset
//! generation, regularized training and differentiable prediction.

pub mod config;
pub mod dataset;
pub mod encoding;
pub mod model;

pub use config::{ArchitectureConfig, RegularizationConfig, TargetTransform, TrainingConfig};
pub use dataset::{generate_dataset, generate_seeded_dataset, Dataset, DatasetHeader};
pub use encoding::{default_slot_budget, encode_trajectory, EncodingDescriptor};
pub use model::{train, train_unregularized, LossHistory, ProxyModel};
