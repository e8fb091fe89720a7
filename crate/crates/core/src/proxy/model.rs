use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ArchitectureConfig, RegularizationConfig, TrainingConfig};
use super::dataset::Dataset;
use super::encoding::EncodingDescriptor;
use crate::error::{Error, Result};
use crate::landscape::{sample_grid, GridSource, InverseProblem, LandscapeGrid};
use crate::numcore::kernels::fourier_lift;
use crate::numcore::{Checkpoint, FourierMap, NetworkSpec, NetworkState, Tape};

const FOURIER_SEED_SALT: u64 = 0xF0F0_B00B;
const NOISE_SEED_SALT: u64 = 0x0153_0153;

/// Trained proxy `f_θ(Y*, X)` with everything needed to reproduce its input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub fourier: Option<FourierMap>,
    pub architecture: ArchitectureConfig,
    pub regularization: RegularizationConfig,
    pub training: TrainingConfig,
    pub encoding: EncodingDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelExtra {
    architecture: ArchitectureConfig,
    regularization: RegularizationConfig,
    training: TrainingConfig,
    encoding: EncodingDescriptor,
}

/// Per-epoch mean training loss.
pub type LossHistory = Vec<f64>;

enum Objective {
    /// Plain `‖f_θ − L‖²`.
    Plain,
    /// Noisy inputs and asymmetric penalty.
    Regularized(RegularizationConfig),
}

impl ProxyModel {
    /// Fresh model with seeded weights and Fourier matrix.
    pub fn new(
        architecture: ArchitectureConfig,
        encoding: EncodingDescriptor,
        training: TrainingConfig,
        regularization: RegularizationConfig,
    ) -> Result<Self> {
        regularization.validate()?;
        let width = encoding.input_width();
        let spec = architecture.network_spec(width);
        spec.validate()?;
        let state = NetworkState::init(&spec, training.seed)?;
        let fourier = if architecture.fourier_features > 0 {
            Some(FourierMap::gaussian(
                architecture.fourier_features,
                width,
                architecture.fourier_scale,
                training.seed ^ FOURIER_SEED_SALT,
            )?)
        } else {
            None
        };
        Ok(Self {
            spec,
            state,
            fourier,
            architecture,
            regularization,
            training,
            encoding,
        })
    }

    /// Same model with every weight and bias zero.
    pub fn zeroed(mut self) -> Self {
        self.state = NetworkState::zeros(&self.spec);
        self
    }

    /// Network input rows from `[scaled slots | normalized X]` rows.
    fn lift(&self, z: Array2<f64>) -> Array2<f64> {
        match &self.fourier {
            Some(f) => fourier_lift(z.view(), f.matrix().view()),
            None => z,
        }
    }

    fn encoded_row(&self, slots: &[f64], xs: &[f64]) -> Vec<f64> {
        let mut z = slots.to_vec();
        z.extend(self.encoding.normalize_params(xs));
        z
    }

    fn check_problem(&self, problem: &InverseProblem) -> Result<()> {
        if problem.system_id() != self.encoding.system || problem.bounds() != self.encoding.param_bounds {
            return Err(Error::shape(format!(
                "model encodes {} problems, got a {} problem",
                self.encoding.system.name(),
                problem.system_id().name()
            )));
        }
        Ok(())
    }

    /// Scaled slot values of the problem's `Y*`.
    pub fn problem_slots(&self, problem: &InverseProblem) -> Result<Vec<f64>> {
        self.check_problem(problem)?;
        let raw = match &problem.true_trajectory {
            Some(y) => self.encoding.raw_slots(y)?,
            None if self.encoding.slot_count() == 0 => Vec::new(),
            None => return Err(Error::shape("model expects a trajectory but problem has none")),
        };
        Ok(self.encoding.scale_slots(&raw))
    }

    /// Prediction from already scaled slots.
    pub fn predict_from_slots(&self, slots: &[f64], xs: &[f64]) -> Result<f64> {
        if slots.len() != self.encoding.slot_count() || xs.len() != self.encoding.param_dim() {
            return Err(Error::shape("slot or parameter count does not match the encoding"));
        }
        let z = Array2::from_shape_vec((1, self.encoding.input_width()), self.encoded_row(slots, xs)).expect("sized");
        let y = self.state.forward_batch(&self.spec, self.lift(z).view())?;
        Ok(self.training.target_transform.inverse(y[[0, 0]]))
    }

    /// `f_θ(Y*, xs)` in loss units; no noise at inference.
    pub fn predict_loss(&self, problem: &InverseProblem, xs: &[f64]) -> Result<f64> {
        problem.bounds().check(xs)?;
        self.predict_from_slots(&self.problem_slots(problem)?, xs)
    }

    /// Prediction and its gradient with respect to raw `xs`.
    pub fn predict_with_gradient(&self, slots: &[f64], xs: &[f64]) -> Result<(f64, Vec<f64>)> {
        if slots.len() != self.encoding.slot_count() || xs.len() != self.encoding.param_dim() {
            return Err(Error::shape("slot or parameter count does not match the encoding"));
        }
        let mut tape = Tape::new();
        let slot_var = tape.leaf(Array2::from_shape_vec((1, slots.len()), slots.to_vec()).expect("sized"));
        let xn = self.encoding.normalize_params(xs);
        let x_var = tape.leaf(Array2::from_shape_vec((1, xn.len()), xn).expect("sized"));
        let z = tape.concat(&[slot_var, x_var])?;
        let input = match &self.fourier {
            Some(f) => tape.fourier(z, f.shared_matrix())?,
            None => z,
        };
        let (out, _) = self.state.forward_on_tape(&self.spec, &mut tape, input)?;
        let y = tape.value(out)[[0, 0]];
        let grads = tape.backward(out)?;
        let outer = self.training.target_transform.inverse_derivative(y);
        let gx = grads.wrt(x_var);
        let scale = self.encoding.param_scale();
        let grad = (0..xs.len()).map(|i| outer * gx[[0, i]] * scale[i]).collect();
        Ok((self.training.target_transform.inverse(y), grad))
    }

    /// Proxy landscape over `Z` for one problem.
    pub fn predict_grid(&self, problem: &InverseProblem, resolution: &[usize], budget: usize) -> Result<LandscapeGrid> {
        let slots = self.problem_slots(problem)?;
        sample_grid(
            &problem.bounds(),
            problem.system.param_names(),
            resolution,
            budget,
            GridSource::Proxy,
            |x| self.predict_from_slots(&slots, x),
        )
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let extra = ModelExtra {
            architecture: self.architecture.clone(),
            regularization: self.regularization,
            training: self.training.clone(),
            encoding: self.encoding.clone(),
        };
        Ok(Checkpoint {
            spec: self.spec.clone(),
            state: self.state.clone(),
            fourier: self
                .fourier
                .as_ref()
                .map(|f| f.matrix().clone())
                .unwrap_or_else(|| Array2::zeros((0, self.encoding.input_width()))),
            extra: Some(serde_json::to_value(extra)?),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let extra: ModelExtra = serde_json::from_value(
            ck.extra
                .ok_or_else(|| Error::format("checkpoint has no proxy-model section"))?,
        )?;
        let fourier = if ck.fourier.nrows() == 0 {
            None
        } else {
            Some(FourierMap::new(ck.fourier))
        };
        let expected = extra.architecture.network_spec(extra.encoding.input_width());
        if expected != ck.spec {
            return Err(Error::format("network spec disagrees with the stored architecture"));
        }
        if let Some(f) = &fourier {
            if f.input_dim() != extra.encoding.input_width()
                || f.matrix().nrows() != extra.architecture.fourier_features
            {
                return Err(Error::format("Fourier matrix does not match the encoding"));
            }
        }
        Ok(Self {
            spec: ck.spec,
            state: ck.state,
            fourier,
            architecture: extra.architecture,
            regularization: extra.regularization,
            training: extra.training,
            encoding: extra.encoding,
        })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.to_checkpoint()?.write_to(w)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::read_from(r)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_checkpoint()?.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::from_bytes(bytes)?)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_dataset(dataset: &Dataset, model: &ProxyModel) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if !dataset.header.encoding.compatible(&model.encoding) {
        return Err(Error::shape(format!(
            "dataset encoding ({} slots for {}) does not match the model ({} slots for {})",
            dataset.header.encoding.slot_count(),
            dataset.header.encoding.system.name(),
            model.encoding.slot_count(),
            model.encoding.system.name()
        )));
    }
    Ok(())
}

fn scaled_slots(model: &ProxyModel, raw: ArrayView2<f64>) -> Array2<f64> {
    let mut out = raw.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let (c, s) = (model.encoding.slot_center[j], model.encoding.slot_scale[j]);
        col.mapv_inplace(|v| (v - c) / s);
    }
    out
}

fn run_training(dataset: &Dataset, mut model: ProxyModel, objective: Objective) -> Result<(ProxyModel, LossHistory)> {
    check_dataset(dataset, &model)?;
    model.training.validate_against(dataset.len())?;
    if let Objective::Regularized(reg) = &objective {
        reg.validate()?;
        model.regularization = *reg;
    } else {
        model.regularization = RegularizationConfig::default();
    }
    model.encoding.fit_scaling(dataset.encoded.view());

    let n = dataset.len();
    let (s, d) = (model.encoding.slot_count(), model.encoding.param_dim());
    let slots = scaled_slots(&model, dataset.encoded.view());
    let transform = model.training.target_transform;
    let targets: Vec<f64> = dataset.targets.iter().map(|&t| transform.forward(t)).collect();
    let bounds = model.encoding.param_bounds.clone();
    let freq: Option<Arc<Array2<f64>>> = model.fourier.as_ref().map(|f| f.shared_matrix());

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(model.training.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(model.training.seed ^ NOISE_SEED_SALT);
    let mut order: Vec<usize> = (0..n).collect();
    let mut noise = vec![0.0; n * d];
    let batch_size = model.training.batch_size;
    let lr = model.training.learning_rate;
    let mut history = Vec::with_capacity(model.training.epochs);

    for epoch in 0..model.training.epochs {
        order.shuffle(&mut shuffle_rng);
        if let Objective::Regularized(_) = objective {
            for v in noise.iter_mut() {
                *v = StandardNormal.sample(&mut noise_rng);
            }
        }
        let mut total = 0.0;
        for (batch, idx) in order.chunks(batch_size).enumerate() {
            let rows = idx.len();
            let mut z = Array2::zeros((rows, s + d));
            let mut target = Array2::zeros((rows, 1));
            for (r, &i) in idx.iter().enumerate() {
                z.slice_mut(s![r, ..s]).assign(&slots.row(i));
                let raw = dataset.params.row(i);
                let x: Vec<f64> = match &objective {
                    Objective::Plain => raw.to_vec(),
                    Objective::Regularized(reg) => (0..d).map(|k| raw[k] + reg.sigma * noise[i * d + k]).collect(),
                };
                for (k, v) in bounds.normalize(&x).into_iter().enumerate() {
                    z[[r, s + k]] = v;
                }
                target[[r, 0]] = targets[i];
            }
            let input = match &freq {
                Some(b) => fourier_lift(z.view(), b.view()),
                None => z,
            };
            let mut tape = Tape::new();
            let x = tape.leaf(input);
            let (pred, vars) = model.state.forward_on_tape(&model.spec, &mut tape, x)?;
            let loss = match &objective {
                Objective::Plain => tape.mse(pred, target)?,
                Objective::Regularized(reg) => {
                    let p = tape.value(pred);
                    let weights = Array2::from_shape_fn((rows, 1), |(r, _)| reg.penalty(p[[r, 0]], target[[r, 0]]));
                    tape.weighted_mse(pred, target, weights)?
                }
            };
            let value = tape.value(loss)[[0, 0]];
            if !value.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch });
            }
            let grads = NetworkState::collect_grads(&tape.backward(loss)?, &vars);
            model.state.adam_step(&grads, lr).map_err(|e| {
                if e.is_numeric() {
                    Error::TrainingDiverged { epoch, batch }
                } else {
                    e
                }
            })?;
            total += value * rows as f64;
        }
        let mean = total / n as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6e}");
        history.push(mean);
    }
    Ok((model, history))
}

/// Minibatch Adam on the regularized loss `μ·(f_θ(Y*, X + σξ) − L)²`,
/// with `μ` applied only to overpredictions and `ξ` redrawn every epoch.
pub fn train(
    dataset: &Dataset,
    model_init: ProxyModel,
    reg: RegularizationConfig,
) -> Result<(ProxyModel, LossHistory)> {
    run_training(dataset, model_init, Objective::Regularized(reg))
}

/// Minibatch Adam on the plain squared error, no noise.
pub fn train_unregularized(dataset: &Dataset, model_init: ProxyModel) -> Result<(ProxyModel, LossHistory)> {
    run_training(dataset, model_init, Objective::Plain)
}

impl TrainingConfig {
    fn validate_against(&self, samples: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::config("epochs, batch_size and learning_rate must be positive"));
        }
        if self.batch_size > samples {
            return Err(Error::config(format!(
                "batch_size {} exceeds the {samples} samples in the dataset",
                self.batch_size
            )));
        }
        Ok(())
    }
}
