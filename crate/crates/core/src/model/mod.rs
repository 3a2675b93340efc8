//! Convolutional patch-to-displacement regressor with hand-written
//! backpropagation and Adam.
//!
//! The network maps a standardized `P x P` patch to a two-component
//! displacement in patch coordinates. Parameters live in one flat vector whose
//! layout is derived from the [`Architecture`] descriptor, which keeps Adam,
//! checkpointing and finite-difference checks simple.

mod arch;
mod checkpoint;
mod layers;
mod scalar;

pub use arch::{Architecture, Layer, ParamSlot, Plan, Shape};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use scalar::Scalar;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patches::{standardize, Dataset};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("checkpoint is truncated")]
    TruncatedFile,
    #[error("bad checkpoint header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Adam moment estimates and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    arch: Architecture,
    plan: Plan,
    params: Vec<T>,
    adam: AdamState<T>,
    seed: u64,
}

/// The 32-bit model used for training and inference.
pub type PolicyModel = Model<f32>;

/// Gradient of the loss with respect to the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub Vec<T>);

/// He-uniform weights, zero biases, zero Adam state.
pub fn init_model<T: Scalar>(arch: &Architecture, seed: u64) -> Result<Model<T>, ModelError> {
    let plan = arch.plan()?;
    let mut params = vec![T::zero(); plan.param_count];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for slot in plan.slots.iter().flatten() {
        let limit = (6.0 / slot.fan_in() as f64).sqrt();
        for p in &mut params[slot.weight_offset..slot.weight_offset + slot.weight_len()] {
            *p = T::from_f64(rng.gen_range(-limit..limit));
        }
    }
    let n = plan.param_count;
    Ok(Model {
        arch: arch.clone(),
        plan,
        params,
        adam: AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
        },
        seed,
    })
}

/// `((du - tu)^2 + (dv - tv)^2) / 2`.
pub fn loss_mse<T: Scalar>(pred: [T; 2], target: [T; 2]) -> T {
    let a = pred[0] - target[0];
    let b = pred[1] - target[1];
    (a * a + b * b) / T::from_f64(2.0)
}

impl<T: Scalar> Model<T> {
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_size * self.arch.input_size
    }

    fn check_input(&self, len: usize) -> Result<(), ModelError> {
        if len != self.input_len() {
            return Err(ModelError::ShapeMismatch(format!(
                "patch has {len} values, model expects {}",
                self.input_len()
            )));
        }
        Ok(())
    }

    /// Predicted displacement for one standardized patch.
    pub fn forward(&self, patch: &[T]) -> Result<[T; 2], ModelError> {
        self.check_input(patch.len())?;
        let tape = layers::forward(&self.arch.layers, &self.plan, &self.params, patch.to_vec(), 1, false);
        let out = tape.acts.last().expect("output present");
        Ok([out[0], out[1]])
    }

    /// Predictions for `batch` patches laid out back to back.
    pub fn forward_batch(&self, patches: &[T]) -> Result<Vec<[T; 2]>, ModelError> {
        if patches.len() % self.input_len() != 0 {
            return Err(ModelError::ShapeMismatch("batch is not a whole number of patches".into()));
        }
        let batch = patches.len() / self.input_len();
        let tape = layers::forward(&self.arch.layers, &self.plan, &self.params, patches.to_vec(), batch, false);
        let out = tape.acts.last().expect("output present");
        Ok(out.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    /// Gradient of [`loss_mse`] for a single sample.
    pub fn backward(&self, patch: &[T], target: [T; 2]) -> Result<Gradients<T>, ModelError> {
        self.check_input(patch.len())?;
        let (grads, _) = self.batch_gradients(patch.to_vec(), &[target]);
        Ok(grads)
    }

    /// Gradient of the batch-mean loss and the summed per-sample loss.
    fn batch_gradients(&self, inputs: Vec<T>, targets: &[[T; 2]]) -> (Gradients<T>, f64) {
        let batch = targets.len();
        let tape = layers::forward(&self.arch.layers, &self.plan, &self.params, inputs, batch, true);
        let out = tape.acts.last().expect("output present");
        let scale = T::one() / T::from_f64(batch as f64);
        let mut grad_out = Vec::with_capacity(2 * batch);
        let mut loss_sum = 0.0;
        for (pred, t) in out.chunks_exact(2).zip(targets) {
            loss_sum += loss_mse([pred[0], pred[1]], *t).to_f64();
            grad_out.push((pred[0] - t[0]) * scale);
            grad_out.push((pred[1] - t[1]) * scale);
        }
        let mut grads = vec![T::zero(); self.plan.param_count];
        layers::backward(&self.arch.layers, &self.plan, &self.params, &tape, grad_out, &mut grads);
        (Gradients(grads), loss_sum)
    }

    /// One bias-corrected Adam update; increments the step count.
    pub fn adam_step(&mut self, grads: &Gradients<T>, hp: &AdamConfig) -> Result<(), ModelError> {
        if grads.0.len() != self.params.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                self.params.len()
            )));
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let b1 = T::from_f64(hp.beta1);
        let b2 = T::from_f64(hp.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - hp.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - hp.beta2.powi(t));
        let lr = T::from_f64(hp.lr);
        let eps = T::from_f64(hp.eps);
        for (((p, m), v), &g) in self
            .params
            .iter_mut()
            .zip(&mut self.adam.m)
            .zip(&mut self.adam.v)
            .zip(&grads.0)
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Mini-batch Adam on the batch-mean MSE. Patches are standardized on the
/// fly. Returns the mean per-sample loss of each epoch, measured before each
/// batch's update.
pub fn train(
    model: &mut PolicyModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<f64>, ModelError> {
    train_with(model, dataset, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after each epoch with `(epoch, mean loss)`.
pub fn train_with(
    model: &mut PolicyModel,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if dataset.patch_size != model.arch.input_size {
        return Err(ModelError::ShapeMismatch(format!(
            "dataset patches are {0}x{0}, model expects {1}x{1}",
            dataset.patch_size, model.arch.input_size
        )));
    }
    if cfg.batch == 0 {
        return Err(ModelError::ShapeMismatch("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let plen = model.input_len();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut inputs = Vec::with_capacity(chunk.len() * plen);
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &dataset.samples[i];
                inputs.extend(standardize(&s.pixels));
                targets.push(s.target);
            }
            let (grads, loss) = model.batch_gradients(inputs, &targets);
            total += loss;
            model.adam_step(&grads, &cfg.adam)?;
        }
        let mean = total / dataset.len() as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(history)
}

/// Mean per-sample loss of `model` over `dataset` without updating it.
pub fn evaluate_loss(model: &PolicyModel, dataset: &Dataset) -> Result<f64, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for chunk in dataset.samples.chunks(256) {
        let mut inputs = Vec::with_capacity(chunk.len() * model.input_len());
        for s in chunk {
            inputs.extend(standardize(&s.pixels));
        }
        for (pred, s) in model.forward_batch(&inputs)?.into_iter().zip(chunk) {
            total += loss_mse(pred, s.target) as f64;
        }
    }
    Ok(total / dataset.len() as f64)
}

#[cfg(test)]
mod tests;
