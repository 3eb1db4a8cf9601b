use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Activation, Gradients, MlpModel, Objective};
use super::TrainingSample;
use crate::cardloss::HeadWeights;
use crate::{Error, Result};

/// Optimiser settings. `weight_decay` is applied to the weight matrices directly
/// after each step (decoupled), not through the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 1e-6,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && self.epochs > 0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: MlpModel,
    /// Mean mini-batch loss of each epoch, measured before each step's update.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Mean loss over `batch` and its exact gradient (no weight decay term).
pub fn loss_and_grads(model: &MlpModel, batch: &[TrainingSample]) -> Result<(f64, Gradients)> {
    model.loss_and_grads(batch)
}

/// Mini-batch SGD with momentum and decoupled weight decay. Batches are drawn
/// from a per-epoch shuffle of `data` seeded by `cfg.seed`.
pub fn train(model: &MlpModel, data: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::usage("training data is empty"));
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = Gradients::zeros_like(&model);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (loss, grads) = model.loss_and_grads(&batch)?;
            if !loss.is_finite() || grads.flat().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {steps}"
                )));
            }
            sgd_step(&mut model, &mut velocity, &grads, cfg);
            epoch_total += loss;
            batches += 1;
            steps += 1;
        }
        let mean = epoch_total / batches as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        model,
        epoch_losses,
        steps,
    })
}

fn sgd_step(model: &mut MlpModel, velocity: &mut Gradients, grads: &Gradients, cfg: &TrainConfig) {
    let lr = cfg.learning_rate;
    let shrink = 1.0 - lr * cfg.weight_decay;
    for ((layer, v), g) in model.layers.iter_mut().zip(&mut velocity.layers).zip(&grads.layers) {
        for ((w, v), g) in layer.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
            *v = cfg.momentum * *v - lr * g;
            *w = (*w + *v) * shrink;
        }
        for ((b, v), g) in layer.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
            *v = cfg.momentum * *v - lr * g;
            *b += *v;
        }
    }
}

/// Compares backpropagated gradients with central differences of the mean loss
/// over every parameter and returns the largest relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check(model: &MlpModel, batch: &[TrainingSample], h: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::usage(format!("finite-difference step must be > 0, got {h}")));
    }
    let (_, grads) = model.loss_and_grads(batch)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, analytic) in grads.flat().enumerate() {
        let original = *probe.param_mut(i);
        *probe.param_mut(i) = original + h;
        let up = probe.mean_loss(batch)?;
        *probe.param_mut(i) = original - h;
        let down = probe.mean_loss(batch)?;
        *probe.param_mut(i) = original;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Random model and batch for gradient checking: `input_dim -> hidden -> 2`
/// with counts drawn uniformly from `0..=20` and features from `[-1, 1]`.
pub fn gradient_check_fixture(
    input_dim: usize,
    hidden: &[usize],
    batch_size: usize,
    activation: Activation,
    seed: u64,
) -> Result<(MlpModel, Vec<TrainingSample>)> {
    let model = MlpModel::new(
        input_dim,
        hidden,
        activation,
        HeadWeights::default(),
        Objective::NegBinomial,
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let batch = (0..batch_size)
        .map(|_| TrainingSample {
            features: (0..input_dim).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            count: rng.random_range(0..=20),
        })
        .collect();
    Ok((model, batch))
}
