use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Activation, LayerKind, NetworkSpec};

/// Noise scale `σ` on `X` and overprediction penalty `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub sigma: f64,
    pub mu: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self { sigma: 0.0, mu: 1.0 }
    }
}

impl RegularizationConfig {
    pub fn new(sigma: f64, mu: f64) -> Result<Self> {
        let r = Self { sigma, mu };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("sigma must be ≥ 0, got {}", self.sigma)));
        }
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu must be ≥ 1, got {}", self.mu)));
        }
        Ok(())
    }

    /// Per-sample weight: `μ` when the prediction overshoots the target.
    pub fn penalty(&self, prediction: f64, target: f64) -> f64 {
        if prediction > target {
            self.mu
        } else {
            1.0
        }
    }

    /// `weight · (prediction − target)²`.
    pub fn sample_loss(&self, prediction: f64, target: f64) -> f64 {
        let e = prediction - target;
        self.penalty(prediction, target) * (e * e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    Log1p,
}

impl TargetTransform {
    pub fn forward(&self, loss: f64) -> f64 {
        match self {
            TargetTransform::Identity => loss,
            TargetTransform::Log1p => loss.ln_1p(),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => y,
            TargetTransform::Log1p => y.exp_m1(),
        }
    }

    /// `d inverse(y) / dy`.
    pub fn inverse_derivative(&self, y: f64) -> f64 {
        match self {
            TargetTransform::Identity => 1.0,
            TargetTransform::Log1p => y.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Number of true trajectories (inverse problems) in the dataset.
    pub dataset_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Parameter draws `n` per trajectory.
    pub samples_per_trajectory: usize,
    pub seed: u64,
    pub target_transform: TargetTransform,
}

impl TrainingConfig {
    pub fn sample_count(&self) -> usize {
        self.dataset_size * self.samples_per_trajectory
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_size == 0 || self.samples_per_trajectory == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "dataset_size, samples_per_trajectory, epochs and batch_size must be positive",
            ));
        }
        if self.batch_size > self.sample_count() {
            return Err(Error::config(format!(
                "batch_size {} exceeds the {} samples in the dataset",
                self.batch_size,
                self.sample_count()
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Network family and optional Fourier lift of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub kind: LayerKind,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub kernel_size: usize,
    /// Rows of `B`; 0 feeds the network the raw encoded input.
    pub fourier_features: usize,
    pub fourier_scale: f64,
}

impl ArchitectureConfig {
    pub fn dense(widths: &[usize]) -> Self {
        Self {
            kind: LayerKind::Dense,
            widths: widths.to_vec(),
            activation: Activation::Tanh,
            kernel_size: 3,
            fourier_features: 0,
            fourier_scale: 1.0,
        }
    }

    pub fn conv(channels: &[usize], fourier_features: usize) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            widths: channels.to_vec(),
            activation: Activation::Relu,
            kernel_size: 3,
            fourier_features,
            fourier_scale: 1.0,
        }
    }

    /// Network input width for an encoded input of `encoded_width` values.
    pub fn network_input(&self, encoded_width: usize) -> usize {
        if self.fourier_features > 0 {
            2 * self.fourier_features
        } else {
            encoded_width
        }
    }

    pub fn network_spec(&self, encoded_width: usize) -> NetworkSpec {
        let input = self.network_input(encoded_width);
        match self.kind {
            LayerKind::Dense => NetworkSpec::dense(input, &self.widths, self.activation),
            LayerKind::Conv1d => NetworkSpec::conv(input, &self.widths, self.kernel_size, self.activation),
        }
    }
}
