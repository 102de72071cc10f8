//! A small fully-connected network: ReLU hidden layers and a two-way
//! softmax head, trained with cross-entropy.

mod file;
mod gradcheck;
mod train;

pub use gradcheck::grad_check;
pub use train::{fit, fit_with_history, Optimizer, OptimizerKind, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One affine layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs.max(1))
            .take(self.outputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Dense>,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= c);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect()
    }
}

struct Trace {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    logits: Vec<f64>,
}

pub(crate) fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax(z).into_iter().map(f64::exp).collect()
}

impl MlpModel {
    /// `dims` lists every layer width from input to output.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParam("a model needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Dimension {
                    expected: w[0].outputs,
                    actual: w[1].inputs,
                    context: Some("consecutive layers".into()),
                });
            }
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Malformed("layer parameter count does not match its shape".into()));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Malformed("non-finite model parameter".into()));
            }
        }
        Ok(MlpModel { layers })
    }

    /// Random Glorot initialization for `input → hidden… → outputs`.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], outputs: usize, rng: &mut R) -> Self {
        let dims: Vec<usize> = std::iter::once(input_dim).chain(hidden.iter().copied()).chain([outputs]).collect();
        MlpModel {
            layers: dims.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], outputs: usize) -> Self {
        let dims: Vec<usize> = std::iter::once(input_dim).chain(hidden.iter().copied()).chain([outputs]).collect();
        MlpModel {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
                context: Some("network input".into()),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&h);
            if i + 1 < self.layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Trace { inputs, logits: h }
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).logits)
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Log-odds of class 1 over class 0; the score used for ranking.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        let z = self.logits(x)?;
        Ok(z[1] - z[0])
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// derivative with respect to the logits at `x` is `dlogits`.
    pub fn accumulate_gradient(&self, x: &[f64], dlogits: &[f64], grads: &mut Gradients) -> Result<()> {
        self.check_input(x)?;
        let trace = self.trace(x);
        let mut delta = dlogits.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, v) in row.iter_mut().zip(input) {
                    *w += d * v;
                }
            }
            if i == 0 {
                break;
            }
            // Back through the weights and the ReLU that produced `input`.
            let mut next = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            for (n, v) in next.iter_mut().zip(input) {
                if *v <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        Ok(())
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, usize)]) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Degenerate("empty batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (x, label) in batch {
            self.check_input(x)?;
            if *label >= self.output_dim() {
                return Err(Error::InvalidParam(format!("label {label} out of range")));
            }
            let logp = log_softmax(&self.trace(x).logits);
            loss -= logp[*label];
            let mut dz: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            dz[*label] -= 1.0;
            self.accumulate_gradient(x, &dz, &mut grads)?;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        Ok((loss / n, grads))
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, batch: &[(Vec<f64>, usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Degenerate("empty batch".into()));
        }
        let mut loss = 0.0;
        for (x, label) in batch {
            self.check_input(x)?;
            loss -= log_softmax(&self.trace(x).logits)[*label];
        }
        Ok(loss / batch.len() as f64)
    }

    pub(crate) fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let n = l.weights.len();
            if index < n {
                return &mut l.weights[index];
            }
            index -= n;
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(3, &[4], 2);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), [0.5, 0.5]);
        let (loss, _) = m.loss_and_grad(&[(vec![1.0, 2.0, 3.0], 1)]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn logistic_fixture() {
        // One layer: z = W x + b with W = [[1, -1], [0.5, 2]], b = [0.1, -0.3], x = [2, 1].
        let m = MlpModel::from_layers(vec![Dense {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, -1.0, 0.5, 2.0],
            bias: vec![0.1, -0.3],
        }])
        .unwrap();
        let p = m.forward(&[2.0, 1.0]).unwrap();
        // z = [1.1, 2.7]; p1 = 1 / (1 + e^{-1.6})
        let p1 = 1.0 / (1.0 + (-1.6f64).exp());
        assert!((p[1] - p1).abs() < 1e-15 && (p[0] - (1.0 - p1)).abs() < 1e-15);
    }

    #[test]
    fn softmax_normalized_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpModel::new(5, &[7, 3], 2, &mut rng);
        for i in 0..50 {
            let x: Vec<f64> = (0..5).map(|j| ((i * 7 + j) as f64).sin() * 10.0).collect();
            let p = m.forward(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v > 0.0));
            assert_eq!(p, m.forward(&x).unwrap());
        }
    }

    #[test]
    fn confident_prediction_has_small_loss() {
        let m = MlpModel::from_layers(vec![Dense {
            inputs: 1,
            outputs: 2,
            weights: vec![-50.0, 50.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        assert!(m.loss(&[(vec![1.0], 1)]).unwrap() < 1e-30);
    }

    #[test]
    fn errors() {
        let m = MlpModel::zeros(3, &[], 2);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(m.loss_and_grad(&[]).is_err());
        assert!(m.loss_and_grad(&[(vec![0.0; 3], 2)]).is_err());
    }
}
