use super::MlpModel;

/// Largest relative difference between the analytic gradient and central
/// finite differences, over every parameter, for the loss at `(x, label)`.
///
/// Relative error is `|a − n| / max(|a| + |n|, 1e-6)`; the floor keeps
/// parameters with vanishing gradient from dividing rounding noise by zero.
pub fn grad_check(model: &MlpModel, x: &[f64], label: usize, epsilon: f64) -> f64 {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let batch = [(x.to_vec(), label)];
    let (_, grads) = model.loss_and_grad(&batch).expect("grad_check input matches the model");
    let analytic = grads.flat();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + epsilon;
        let plus = probe.loss(&batch).unwrap();
        *probe.param_mut(i) = orig - epsilon;
        let minus = probe.loss(&batch).unwrap();
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Gradients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_init_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = MlpModel::new(6, &[5, 4], 2, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(grad_check(&m, &x, 1, 1e-5) < 1e-4);
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpModel::new(4, &[3], 2, &mut rng);
        let (_, g): (f64, Gradients) = m.loss_and_grad(&[(vec![0.0; 4], 0)]).unwrap();
        assert!(g.layers[0].weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn larger_epsilon_is_less_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Smooth case (no hidden ReLU) so the comparison is about truncation error.
        let m = MlpModel::new(3, &[], 2, &mut rng);
        let x = [0.7, -1.3, 2.1];
        assert!(grad_check(&m, &x, 0, 1e-2) > grad_check(&m, &x, 0, 1e-5));
    }
}
