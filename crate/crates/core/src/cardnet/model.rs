use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cardloss::{card_grad, card_nll, head_backward, head_forward, regression_loss, AlphaBeta, HeadWeights};
use crate::numerics::nb_mode;
use crate::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// What the final layer predicts and which loss trains it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Two outputs through the weighted-sigmoid head, negative binomial NLL.
    #[default]
    NegBinomial,
    /// One linear output regressing the count, squared error.
    Regression,
}

impl Objective {
    pub fn outputs(self) -> usize {
        match self {
            Objective::NegBinomial => 2,
            Objective::Regression => 1,
        }
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored row-major (`outputs × inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v)),
        );
    }

    fn check(&self) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::Shape("dense layer with a zero dimension".into()));
        }
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::Shape(format!(
                "layer {}x{} holds {} weights and {} biases",
                self.outputs,
                self.inputs,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite layer parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub(crate) fn zeros_like(model: &MlpModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect();
        Self { layers }
    }

    /// Weights then biases, layer by layer; the same order as [`MlpModel::param_count`].
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .copied()
    }

    fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= k);
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    /// Input to each layer; `inputs[0]` is the feature vector.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

/// Dense network followed by a cardinality head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub activation: Activation,
    pub head: HeadWeights,
    #[serde(default)]
    pub objective: Objective,
    /// Seed the weights were initialised from.
    pub seed: u64,
}

impl MlpModel {
    /// Glorot-uniform initialised network with layer sizes
    /// `input_dim -> hidden[0] -> ... -> objective.outputs()` and zero biases.
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        head: HeadWeights,
        objective: Objective,
        seed: u64,
    ) -> Result<Self> {
        head.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden);
        dims.push(objective.outputs());
        if dims.contains(&0) {
            return Err(Error::Shape(format!("layer sizes must be positive, got {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            layers,
            activation,
            head,
            objective,
            seed,
        })
    }

    /// Builds a model from explicit layers, checking that dimensions chain.
    pub fn from_layers(
        layers: Vec<DenseLayer>,
        activation: Activation,
        head: HeadWeights,
        objective: Objective,
    ) -> Result<Self> {
        let model = Self {
            layers,
            activation,
            head,
            objective,
            seed: 0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Shape("model has no layers".into()))?;
        for l in &self.layers {
            l.check()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer emitting {} values feeds a layer expecting {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if last.outputs != self.objective.outputs() {
            return Err(Error::Shape(format!(
                "final layer must emit {} values for {:?}, emits {}",
                self.objective.outputs(),
                self.objective,
                last.outputs
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&current, &mut z);
            let next = if i + 1 < n {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    /// Raw outputs of the final dense layer.
    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).pre.pop().unwrap_or_default())
    }

    /// Predicted Gamma prior `(alpha, beta)` for one input.
    pub fn forward(&self, x: &[f64]) -> Result<AlphaBeta> {
        if self.objective != Objective::NegBinomial {
            return Err(Error::usage("a regression model has no (alpha, beta) head"));
        }
        let out = self.outputs(x)?;
        Ok(head_forward(out[0], out[1], &self.head))
    }

    /// Point prediction of the cardinality: the negative binomial mode, or the
    /// rounded non-negative regression output.
    pub fn predict_count(&self, x: &[f64]) -> Result<u64> {
        match self.objective {
            Objective::NegBinomial => Ok(nb_mode(&self.forward(x)?.cardinality()?)),
            Objective::Regression => {
                let m_hat = self.outputs(x)?[0];
                if !m_hat.is_finite() {
                    return Err(Error::Numeric(format!("regression output {m_hat}")));
                }
                Ok(m_hat.max(0.0).round() as u64)
            }
        }
    }

    /// Loss of one sample and the gradient with respect to the final pre-activations.
    fn sample_loss(&self, out: &[f64], count: u64) -> (f64, [f64; 2]) {
        match self.objective {
            Objective::NegBinomial => {
                let ab = head_forward(out[0], out[1], &self.head);
                let g = card_grad(count, &ab);
                let (ga, gb) = head_backward(out[0], out[1], &self.head, &g);
                (card_nll(count, &ab), [ga, gb])
            }
            Objective::Regression => {
                let (loss, g) = regression_loss(count, out[0]);
                (loss, [g, 0.0])
            }
        }
    }

    /// Adds one sample's loss gradient into `grads` and returns its loss.
    pub(crate) fn accumulate(&self, x: &[f64], count: u64, grads: &mut Gradients) -> Result<f64> {
        self.check_input(x)?;
        let trace = self.trace(x);
        let out = trace.pre.last().expect("validated model has layers");
        let (loss, out_grad) = self.sample_loss(out, count);
        let mut delta: Vec<f64> = out_grad[..self.objective.outputs()].to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, &v)| *gw += d * v);
            }
            if i == 0 {
                break;
            }
            let below = &trace.pre[i - 1];
            delta = (0..layer.inputs)
                .map(|j| {
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(o, &d)| layer.weights[o * layer.inputs + j] * d)
                        .sum();
                    back * self.activation.slope(below[j], input[j])
                })
                .collect();
        }
        Ok(loss)
    }

    /// Mean loss over `batch` and its exact gradient.
    pub fn loss_and_grads(&self, batch: &[super::TrainingSample]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::usage("loss over an empty batch"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for s in batch {
            total += self.accumulate(&s.features, s.count, &mut grads)?;
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((total * inv, grads))
    }

    /// Mean loss over `batch` without gradients.
    pub fn mean_loss(&self, batch: &[super::TrainingSample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::usage("loss over an empty batch"));
        }
        let mut total = 0.0;
        for s in batch {
            let out = self.outputs(&s.features)?;
            total += self.sample_loss(&out, s.count).0;
        }
        Ok(total / batch.len() as f64)
    }
}

#[derive(Serialize)]
struct ModelDocOut<'a, C: Serialize> {
    schema_version: u32,
    config: &'a C,
    layer_dims: Vec<usize>,
    #[serde(flatten)]
    model: &'a MlpModel,
}

#[derive(Deserialize)]
struct ModelDocIn {
    schema_version: u32,
    #[serde(default)]
    #[allow(dead_code)]
    config: serde_json::Value,
    layer_dims: Vec<usize>,
    #[serde(flatten)]
    model: MlpModel,
}

impl MlpModel {
    /// Serialises the model with the configuration that produced it.
    pub fn to_json<C: Serialize>(&self, config: &C) -> Result<String> {
        let doc = ModelDocOut {
            schema_version: MODEL_SCHEMA_VERSION,
            config,
            layer_dims: self.layer_dims(),
            model: self,
        };
        serde_json::to_string(&doc).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocIn = serde_json::from_str(text).map_err(|e| Error::Data(format!("model file: {e}")))?;
        if doc.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "model schema version {} is not supported (expected {MODEL_SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        doc.model.validate()?;
        if doc.layer_dims != doc.model.layer_dims() {
            return Err(Error::Shape(format!(
                "declared layer dims {:?} disagree with the stored layers {:?}",
                doc.layer_dims,
                doc.model.layer_dims()
            )));
        }
        Ok(doc.model)
    }
}
