//! Dense ReLU networks: forward evaluation, softmax cross-entropy gradients,
//! seeded mini-batch SGD and the `hexplain-mlp/1` model file.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MODEL_SCHEMA: &str = "hexplain-mlp/1";

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Row-major, channel-interleaved image with values in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self, NeuralError> {
        let img = Image {
            width,
            height,
            channels,
            pixels,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let expected = self.width * self.height * self.channels;
        if self.pixels.len() != expected || expected == 0 {
            return Err(NeuralError::InvalidImage(format!(
                "{}x{}x{} image carries {} values",
                self.width,
                self.height,
                self.channels,
                self.pixels.len()
            )));
        }
        if let Some(v) = self.pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(NeuralError::InvalidImage(format!("pixel value {v} outside [0,1]")));
        }
        Ok(())
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            pixels: vec![0.0; width * height * channels],
        }
    }

    /// Number of features (pixel values).
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                self.row(o)
                    .iter()
                    .zip(x)
                    .fold(self.bias[o], |acc, (w, v)| acc + w * v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Layer>,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::InvalidModel("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(NeuralError::InvalidModel(format!("layer {i} has inconsistent shapes")));
            }
            if l.inputs == 0 || l.outputs == 0 {
                return Err(NeuralError::InvalidModel(format!("layer {i} is empty")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(NeuralError::InvalidModel(format!(
                    "layer {i} expects {} inputs but layer {} yields {}",
                    l.inputs,
                    i - 1,
                    layers[i - 1].outputs
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|w| !w.is_finite()) {
                return Err(NeuralError::InvalidModel(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(NeuralError::InvalidModel("final activation must be identity".into()));
        }
        Ok(MlpModel { layers })
    }

    /// Randomly initialised network with ReLU hidden layers; weights and
    /// biases are uniform in ±1/√fan_in.
    pub fn random(dims: &[usize], seed: u64) -> Result<Self, NeuralError> {
        if dims.len() < 2 {
            return Err(NeuralError::InvalidModel("need input and output dims".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = 1.0 / (fan_in as f64).sqrt();
                Layer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-s..s)).collect(),
                    bias: (0..fan_out).map(|_| rng.gen_range(-s..s)).collect(),
                    activation: if i + 2 == dims.len() {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        MlpModel::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NeuralError> {
        if x.len() != self.input_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Logits for a raw feature vector.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.check_input(x)?;
        Ok(self.logits_unchecked(x))
    }

    pub(crate) fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.affine(&h);
            if l.activation == Activation::Relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h
    }

    pub fn forward(&self, x: &Image) -> Result<Vec<f64>, NeuralError> {
        self.logits(&x.pixels)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, NeuralError> {
        Ok(argmax(&self.logits(x)?))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> usize {
        argmax(&self.logits_unchecked(x))
    }

    /// Softmax class probabilities.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>, NeuralError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Softmax cross-entropy loss and its gradients with respect to every
    /// parameter and to the input.
    pub fn grad(&self, x: &[f64], target: usize) -> Result<Gradient, NeuralError> {
        self.check_input(x)?;
        if target >= self.output_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.output_dim(),
                got: target,
            });
        }
        // forward keeping pre-activations
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut pres: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = l.affine(acts.last().unwrap());
            let a = match l.activation {
                Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
                Activation::Identity => z.clone(),
            };
            pres.push(z);
            acts.push(a);
        }
        let logits = acts.last().unwrap();
        let probs = softmax(logits);
        let loss = cross_entropy(logits, target);

        let mut delta: Vec<f64> = probs.clone();
        delta[target] -= 1.0;
        let mut layers = vec![LayerGradient::default(); self.layers.len()];
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            if l.activation == Activation::Relu {
                for (d, z) in delta.iter_mut().zip(&pres[li]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &acts[li];
            let mut gw = vec![0.0; l.weights.len()];
            for o in 0..l.outputs {
                if delta[o] != 0.0 {
                    for (g, v) in gw[o * l.inputs..(o + 1) * l.inputs].iter_mut().zip(input) {
                        *g = delta[o] * v;
                    }
                }
            }
            let mut back = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                if delta[o] != 0.0 {
                    for (b, w) in back.iter_mut().zip(l.row(o)) {
                        *b += delta[o] * w;
                    }
                }
            }
            layers[li] = LayerGradient {
                weights: gw,
                bias: delta,
            };
            delta = back;
        }
        Ok(Gradient {
            loss,
            layers,
            input: delta,
        })
    }

    pub fn to_json(&self) -> Result<String, NeuralError> {
        let file = ModelFile {
            schema: MODEL_SCHEMA.into(),
            input_dim: self.input_dim(),
            output_dim: self.output_dim(),
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.schema != MODEL_SCHEMA {
            return Err(NeuralError::InvalidModel(format!("unknown schema `{}`", file.schema)));
        }
        let model = MlpModel::new(file.layers)?;
        if model.input_dim() != file.input_dim || model.output_dim() != file.output_dim {
            return Err(NeuralError::InvalidModel(format!(
                "declared dims {}->{} disagree with layers {}->{}",
                file.input_dim,
                file.output_dim,
                model.input_dim(),
                model.output_dim()
            )));
        }
        Ok(model)
    }

    fn apply(&mut self, grad: &[LayerGradient], lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(grad) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub loss: f64,
    pub layers: Vec<LayerGradient>,
    /// ∂loss/∂x
    pub input: Vec<f64>,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    (lse - logits[target]).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Trains a fresh network with the given layer widths (input first, output
/// last) by mini-batch SGD on mean softmax cross-entropy.
pub fn train(
    dataset: &[(Vec<f64>, usize)],
    dims: &[usize],
    cfg: &TrainConfig,
) -> Result<MlpModel, NeuralError> {
    if dataset.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 || cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(NeuralError::InvalidConfig(format!("{cfg:?}")));
    }
    let input = dims.first().copied().unwrap_or(0);
    let output = dims.last().copied().unwrap_or(0);
    for (x, y) in dataset {
        if x.len() != input {
            return Err(NeuralError::DimensionMismatch {
                expected: input,
                got: x.len(),
            });
        }
        if *y >= output {
            return Err(NeuralError::DimensionMismatch {
                expected: output,
                got: *y,
            });
        }
    }
    let mut model = MlpModel::random(dims, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<LayerGradient> = model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect();
            for &i in batch {
                let (x, y) = &dataset[i];
                let g = model.grad(x, *y)?;
                for (a, gl) in acc.iter_mut().zip(&g.layers) {
                    a.weights.iter_mut().zip(&gl.weights).for_each(|(a, d)| *a += d);
                    a.bias.iter_mut().zip(&gl.bias).for_each(|(a, d)| *a += d);
                }
            }
            model.apply(&acc, cfg.learning_rate / batch.len() as f64);
        }
    }
    Ok(model)
}

/// Fraction of examples whose predicted class equals the label.
pub fn accuracy(model: &MlpModel, dataset: &[(Vec<f64>, usize)]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let hits = dataset
        .iter()
        .filter(|(x, y)| model.predict(x).ok() == Some(*y))
        .count();
    hits as f64 / dataset.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_net(inputs: usize, classes: usize) -> MlpModel {
        let mut bias = vec![0.0; classes];
        bias[0] = 1.0;
        MlpModel::new(vec![
            Layer {
                inputs,
                outputs: 3,
                weights: vec![0.0; 3 * inputs],
                bias: vec![0.0; 3],
                activation: Activation::Relu,
            },
            Layer {
                inputs: 3,
                outputs: classes,
                weights: vec![0.0; 3 * classes],
                bias,
                activation: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn constant_network_predicts_class_zero() {
        let m = constant_net(4, 2);
        for x in [[0.0; 4], [1.0; 4], [0.3, 0.9, 0.1, 0.5]] {
            assert_eq!(m.predict(&x).unwrap(), 0);
            assert!(m.grad(&x, 1).unwrap().input.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn identity_network() {
        let m = MlpModel::new(vec![Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![0.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(m.logits(&[0.37]).unwrap(), vec![0.37]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = MlpModel::random(&[3, 4, 2], 1).unwrap();
        assert!(matches!(m.logits(&[0.0; 2]), Err(NeuralError::DimensionMismatch { .. })));
        assert!(m.grad(&[0.0; 4], 0).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn loss_decreases_along_negative_gradient() {
        let m = MlpModel::random(&[5, 6, 3], 4).unwrap();
        let x = [0.2, 0.4, 0.9, 0.1, 0.5];
        let g = m.grad(&x, 2).unwrap();
        let mut stepped = m.clone();
        stepped.apply(&g.layers, 1e-3);
        let after = stepped.grad(&x, 2).unwrap().loss;
        assert!(after < g.loss);
    }

    #[test]
    fn cross_entropy_nonnegative() {
        assert!(cross_entropy(&[1.0, 2.0, 3.0], 0) > 0.0);
        assert!(cross_entropy(&[50.0, 0.0], 0) < 1e-9);
    }

    #[test]
    fn model_file_round_trip_and_rejections() {
        let m = MlpModel::random(&[4, 5, 3], 9).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains(MODEL_SCHEMA));
        assert_eq!(MlpModel::from_json(&text).unwrap(), m);
        let bad = text.replacen("\"input_dim\": 4", "\"input_dim\": 5", 1);
        assert!(MlpModel::from_json(&bad).is_err());
        let wrong = text.replacen(MODEL_SCHEMA, "other/1", 1);
        assert!(MlpModel::from_json(&wrong).is_err());
    }

    #[test]
    fn separable_toy_problem() {
        let data: Vec<(Vec<f64>, usize)> = (0..40)
            .map(|i| {
                let a = (i % 10) as f64 / 10.0;
                let b = (i / 10) as f64 / 4.0;
                let label = (a > b) as usize;
                (vec![a, b], label)
            })
            .filter(|(x, _)| (x[0] - x[1]).abs() > 0.05)
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 50,
            batch_size: 4,
            seed: 3,
        };
        let m = train(&data, &[2, 8, 2], &cfg).unwrap();
        assert!(accuracy(&m, &data) >= 0.99);
        let again = train(&data, &[2, 8, 2], &cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            train(&[], &[2, 2], &TrainConfig::default()),
            Err(NeuralError::EmptyDataset)
        ));
    }
}
