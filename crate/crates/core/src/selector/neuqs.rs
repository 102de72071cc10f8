//! The fused question scorer over topic, context and question embeddings,
//! retrieval scores and performance-prediction values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pairwise::{load_scaling, save_scaling};
use super::scaling::Standardizer;
use crate::nn::{fit_with_history, MlpModel, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuqsInput {
    pub phi_t: Vec<f32>,
    pub phi_h: Vec<f32>,
    pub phi_q: Vec<f32>,
    /// Scores of the top k documents, standardized within the context.
    pub eta: Vec<f64>,
    pub sigma_vec: Vec<f64>,
}

impl NeuqsInput {
    pub fn validate(&self) -> Result<()> {
        let d = self.phi_t.len();
        for (name, len) in [("phi_h", self.phi_h.len()), ("phi_q", self.phi_q.len())] {
            if len != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: len,
                    context: Some(name.into()),
                });
            }
        }
        if self.sigma_vec.len() != self.eta.len() {
            return Err(Error::Dimension {
                expected: self.eta.len(),
                actual: self.sigma_vec.len(),
                context: Some("sigma_vec".into()),
            });
        }
        Ok(())
    }

    /// `[φ_T; φ_H; φ_Q; η; σ]`.
    pub fn concat(&self) -> Vec<f64> {
        let emb = self.phi_t.iter().chain(&self.phi_h).chain(&self.phi_q).map(|&v| v as f64);
        emb.chain(self.eta.iter().copied()).chain(self.sigma_vec.iter().copied()).collect()
    }

    pub fn dim(&self) -> usize {
        3 * self.phi_t.len() + 2 * self.eta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuqsModel {
    pub net: MlpModel,
    pub scaling: Standardizer,
}

impl NeuqsModel {
    /// An untrained all-zero network; scores every input 0.5.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        NeuqsModel {
            net: MlpModel::zeros(input_dim, hidden, 2),
            scaling: Standardizer::identity(input_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.net.save(path)?;
        save_scaling(&self.scaling, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let net = MlpModel::load(path)?;
        let scaling = load_scaling(path)?;
        if scaling.dim() != net.input_dim() {
            return Err(Error::Dimension {
                expected: net.input_dim(),
                actual: scaling.dim(),
                context: Some("model scaling".into()),
            });
        }
        Ok(NeuqsModel { net, scaling })
    }
}

/// Probability of the relevant class.
pub fn neuqs_score(model: &NeuqsModel, input: &NeuqsInput) -> Result<f64> {
    input.validate()?;
    if input.dim() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: input.dim(),
            context: Some("neuqs input".into()),
        });
    }
    let x = model.scaling.apply(&input.concat())?;
    Ok(model.net.forward(&x)?[1])
}

/// Pointwise training with cross-entropy on `(input, relevant)` pairs.
pub fn train_neuqs(instances: &[(NeuqsInput, bool)], config: &TrainConfig) -> Result<(NeuqsModel, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = instances
        .iter()
        .map(|(x, _)| x.validate().map(|_| x.concat()))
        .collect::<Result<_>>()?;
    let scaling = Standardizer::fit(rows.iter().map(Vec::as_slice))?;
    let data: Vec<(Vec<f64>, usize)> = rows
        .iter()
        .zip(instances)
        .map(|(r, (_, y))| scaling.apply(r).map(|x| (x, usize::from(*y))))
        .collect::<Result<_>>()?;
    let (net, history) = fit_with_history(&data, config)?;
    Ok((NeuqsModel { net, scaling }, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(eta0: f64, rng: &mut impl Rng) -> NeuqsInput {
        NeuqsInput {
            phi_t: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            phi_h: vec![0.0; 4],
            phi_q: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            eta: vec![eta0, eta0 - 0.5, eta0 - 1.0],
            sigma_vec: vec![0.0, 0.2, 0.4],
        }
    }

    #[test]
    fn zero_model_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = NeuqsModel::zeros(18, &[8, 4]);
        for _ in 0..5 {
            assert_eq!(neuqs_score(&m, &input(rng.random_range(-3.0..3.0), &mut rng)).unwrap(), 0.5);
        }
    }

    #[test]
    fn dims_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = NeuqsModel::zeros(17, &[]);
        assert!(neuqs_score(&m, &input(0.0, &mut rng)).is_err());
        let mut bad = input(0.0, &mut rng);
        bad.phi_h.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn monotone_in_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<(NeuqsInput, bool)> = (0..400)
            .map(|_| {
                let e = rng.random_range(-2.0..2.0);
                (input(e, &mut rng), e > 0.0)
            })
            .collect();
        let config = TrainConfig {
            learning_rate: 0.05,
            epochs: 40,
            hidden_dims: vec![],
            seed: 2,
            ..TrainConfig::default()
        };
        let (m, _) = train_neuqs(&data, &config).unwrap();
        let mut probe = input(-1.0, &mut rng);
        let low = neuqs_score(&m, &probe).unwrap();
        probe.eta = vec![1.0, 0.5, 0.0];
        let high = neuqs_score(&m, &probe).unwrap();
        assert!(high > low, "{high} <= {low}");
        assert_eq!(neuqs_score(&m, &probe).unwrap(), high);
    }
}
