//! A small dense network that predicts a cardinality distribution from a feature
//! vector, trained by backpropagation and SGD with momentum.
//!
//! The last dense layer emits two pre-activations that the weighted-sigmoid head
//! turns into `(alpha, beta)`; the predicted count is the mode of
//! `NB(alpha, 1/(1+beta))`. A single-output variant trained on squared error
//! serves as a regression baseline.

mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use model::{Activation, DenseLayer, Gradients, LayerGrad, MlpModel, Objective, MODEL_SCHEMA_VERSION};
pub use train::{gradient_check, gradient_check_fixture, loss_and_grads, train, TrainConfig, TrainReport};

/// One input with the cardinality of its ground-truth set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub count: u64,
}

impl TrainingSample {
    pub fn new(features: Vec<f64>, count: u64) -> crate::Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Data("training sample has a non-finite feature".into()));
        }
        Ok(Self { features, count })
    }
}
