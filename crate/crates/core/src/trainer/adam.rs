//! Adam with bias correction.

use super::TrainError;
use crate::model::{ModelConfig, ParameterSet};

/// Adam hyperparameters. Betas and epsilon default to the standard values.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: ParameterSet,
    pub v: ParameterSet,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(config: &ModelConfig) -> Self {
        Self { m: ParameterSet::zeros(config), v: ParameterSet::zeros(config), t: 0 }
    }
}

/// One Adam update over every parameter tensor:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected
/// `m^ = m/(1-b1^t)`, `v^ = v/(1-b2^t)`, then
/// `theta <- theta - lr * m^ / (sqrt(v^) + eps)`.
///
/// A non-finite gradient refuses the whole step: parameters and moments
/// are left untouched.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &ParameterSet,
    state: &mut OptimizerState,
    hyper: &AdamHyper,
) -> Result<(), TrainError> {
    for (name, tensor) in grads.named_tensors() {
        if !tensor.all_finite() {
            return Err(TrainError::RefusedStep { tensor: name });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let m_correction = 1.0 - hyper.beta1.powi(t);
    let v_correction = 1.0 - hyper.beta2.powi(t);

    let grad_tensors = grads.named_tensors();
    let mut m_tensors = state.m.tensors_mut();
    let mut v_tensors = state.v.tensors_mut();
    for (i, (pname, param)) in params.tensors_mut().into_iter().enumerate() {
        let (gname, grad) = &grad_tensors[i];
        debug_assert_eq!(&pname, gname, "tensor order must match");
        let m = m_tensors[i].1.data_mut();
        let v = v_tensors[i].1.data_mut();
        let p = param.data_mut();
        let g = grad.data();
        for j in 0..p.len() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            let m_hat = m[j] / m_correction;
            let v_hat = v[j] / v_correction;
            p[j] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            hidden: 4,
            layers: 1,
            heads: 2,
            ff_dim: 8,
            max_len: 4,
            num_labels: 2,
            dropout: 0.0,
        }
    }

    #[test]
    fn first_step_with_unit_gradient() {
        // m^ = 1, v^ = 1, so theta moves by about -lr
        let config = tiny_config();
        let mut params = ParameterSet::zeros(&config);
        let mut grads = ParameterSet::zeros(&config);
        grads.classifier_b.data_mut()[0] = 1.0;
        let mut state = OptimizerState::new(&config);
        adam_step(&mut params, &grads, &mut state, &AdamHyper::new(0.001)).unwrap();
        let updated = params.classifier_b.data()[0];
        assert!((updated - (-0.001)).abs() < 1e-8, "got {updated}");
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let config = tiny_config();
        let mut params = crate::model::init_parameters(&config, 7).unwrap();
        let before = params.clone();
        let grads = ParameterSet::zeros(&config);
        let mut state = OptimizerState::new(&config);
        adam_step(&mut params, &grads, &mut state, &AdamHyper::new(0.01)).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn matches_independent_scalar_oracle() {
        // scalar Adam written out longhand, stepped twice
        let config = tiny_config();
        let hyper = AdamHyper::new(0.003);
        let mut rng = crate::rng::seeded_rng(5, "adam.oracle");

        let mut params = ParameterSet::zeros(&config);
        for (_, t) in params.tensors_mut() {
            for x in t.data_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        let mut grads1 = ParameterSet::zeros(&config);
        let mut grads2 = ParameterSet::zeros(&config);
        for g in [&mut grads1, &mut grads2] {
            for (_, t) in g.tensors_mut() {
                for x in t.data_mut() {
                    *x = rng.random_range(-1.0..1.0);
                }
            }
        }

        // oracle state per scalar
        let flat = |p: &ParameterSet| -> Vec<f64> {
            p.named_tensors().iter().flat_map(|(_, t)| t.data().to_vec()).collect()
        };
        let mut theta = flat(&params);
        let g1 = flat(&grads1);
        let g2 = flat(&grads2);
        let mut m = vec![0.0; theta.len()];
        let mut v = vec![0.0; theta.len()];
        for (step, g) in [(1, &g1), (2, &g2)] {
            for j in 0..theta.len() {
                m[j] = 0.9 * m[j] + 0.1 * g[j];
                v[j] = 0.999 * v[j] + 0.001 * g[j] * g[j];
                let mh = m[j] / (1.0 - 0.9f64.powi(step));
                let vh = v[j] / (1.0 - 0.999f64.powi(step));
                theta[j] -= 0.003 * mh / (vh.sqrt() + 1e-8);
            }
        }

        let mut state = OptimizerState::new(&config);
        adam_step(&mut params, &grads1, &mut state, &hyper).unwrap();
        adam_step(&mut params, &grads2, &mut state, &hyper).unwrap();
        for (ours, oracle) in flat(&params).iter().zip(&theta) {
            assert!((ours - oracle).abs() < 1e-12, "{ours} vs {oracle}");
        }
    }

    #[test]
    fn non_finite_gradient_refuses_step() {
        let config = tiny_config();
        let mut params = crate::model::init_parameters(&config, 7).unwrap();
        let before = params.clone();
        let mut grads = ParameterSet::zeros(&config);
        grads.layers[0].w1.data_mut()[3] = f64::NAN;
        let mut state = OptimizerState::new(&config);
        let err = adam_step(&mut params, &grads, &mut state, &AdamHyper::new(0.01)).unwrap_err();
        match err {
            TrainError::RefusedStep { tensor } => assert_eq!(tensor, "layer.0.ff.in.weight"),
            other => panic!("unexpected error {other}"),
        }
        assert_eq!(params, before, "refused step must leave parameters untouched");
        assert_eq!(state.t, 0);
    }
}
