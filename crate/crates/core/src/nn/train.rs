use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 20,
            seed: 0,
            hidden_dims: vec![64, 32],
            optimizer: OptimizerKind::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParam(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParam("batch size and epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Applies gradient steps; holds Adam moments when needed.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, model: &MlpModel) -> Self {
        let n = if kind == OptimizerKind::Adam { model.num_params() } else { 0 };
        Optimizer {
            kind,
            learning_rate,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn apply(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let lr = self.learning_rate;
        let mut k = 0usize;
        for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let grads = g.weights.iter().chain(&g.bias);
            for (p, g) in params.zip(grads) {
                match self.kind {
                    OptimizerKind::Sgd => *p -= lr * g,
                    OptimizerKind::Adam => {
                        const B1: f64 = 0.9;
                        const B2: f64 = 0.999;
                        self.m[k] = B1 * self.m[k] + (1.0 - B1) * g;
                        self.v[k] = B2 * self.v[k] + (1.0 - B2) * g * g;
                        let mh = self.m[k] / (1.0 - B1.powi(self.step));
                        let vh = self.v[k] / (1.0 - B2.powi(self.step));
                        *p -= lr * mh / (vh.sqrt() + 1e-8);
                    }
                }
                k += 1;
            }
        }
    }
}

/// Trains a fresh two-class network with mini-batch gradient descent.
pub fn fit(instances: &[(Vec<f64>, usize)], config: &TrainConfig) -> Result<MlpModel> {
    fit_with_history(instances, config).map(|(m, _)| m)
}

/// Like [`fit`], also returning the full-data loss after every epoch.
pub fn fit_with_history(instances: &[(Vec<f64>, usize)], config: &TrainConfig) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    let Some((first, _)) = instances.first() else {
        return Err(Error::Degenerate("no training instances".into()));
    };
    let dim = first.len();
    if let Some((x, _)) = instances.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: x.len(),
            context: Some("training instance".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::new(dim, &config.hidden_dims, 2, &mut rng);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, &model);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch: Vec<(Vec<f64>, usize)> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| instances[i].clone()));
            let (loss, grads) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            opt.apply(&mut model, &grads);
        }
        history.push(model.loss(instances)?);
    }
    Ok((model, history))
}
