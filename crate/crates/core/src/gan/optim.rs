use crate::numerics::{MlpGrads, MlpParams};

pub const ADAM_EPSILON: f64 = 1e-8;

/// Adam moments for one network. Step counts are kept per layer so that a
/// layer released from a freeze starts its bias correction from scratch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: MlpGrads,
    pub second: MlpGrads,
    pub steps: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamState {
    pub fn new(net: &MlpParams) -> Self {
        AdamState {
            first: MlpGrads::zeros_like(net),
            second: MlpGrads::zeros_like(net),
            steps: vec![0; net.num_layers()],
        }
    }

    pub fn matches(&self, net: &MlpParams) -> bool {
        self.first.matches(net) && self.second.matches(net) && self.steps.len() == net.num_layers()
    }

    /// One descent step along `grads`. Layers flagged in `frozen` are left
    /// untouched, moments included.
    pub fn step(
        &mut self,
        net: &mut MlpParams,
        grads: &MlpGrads,
        frozen: &[bool],
        cfg: AdamConfig,
    ) {
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            if frozen.get(l).copied().unwrap_or(false) {
                continue;
            }
            self.steps[l] += 1;
            let t = self.steps[l] as i32;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            };
            update(
                layer.weights.as_mut_slice(),
                grads.weights[l].as_slice(),
                self.first.weights[l].as_mut_slice(),
                self.second.weights[l].as_mut_slice(),
            );
            update(
                &mut layer.biases,
                &grads.biases[l],
                &mut self.first.biases[l],
                &mut self.second.biases[l],
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Rng};

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With fresh moments the bias-corrected step is lr * g / |g|.
        let mut rng = Rng::new(0);
        let mut net = MlpParams::new(
            &[1, 2, 1],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let before = net.flat_params();
        let mut grads = MlpGrads::zeros_like(&net);
        grads.weights[0].as_mut_slice().fill(3.0);
        let mut adam = AdamState::new(&net);
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.5,
            beta2: 0.999,
        };
        adam.step(&mut net, &grads, &[], cfg);
        let after = net.flat_params();
        assert!((before[0] - after[0] - 0.01).abs() < 1e-9);
        assert_eq!(before[2..], after[2..]);
        assert_eq!(adam.steps, vec![1, 1]);
    }

    #[test]
    fn frozen_layer_keeps_moments_and_step_count() {
        let mut rng = Rng::new(0);
        let mut net = MlpParams::new(
            &[1, 2, 1],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        grads.weights[0].as_mut_slice().fill(1.0);
        grads.weights[1].as_mut_slice().fill(1.0);
        let mut adam = AdamState::new(&net);
        let layer0 = net.layers()[0].clone();
        let cfg = AdamConfig {
            learning_rate: 0.01,
            beta1: 0.5,
            beta2: 0.999,
        };
        adam.step(&mut net, &grads, &[true, false], cfg);
        assert_eq!(net.layers()[0], layer0);
        assert_eq!(adam.steps, vec![0, 1]);
        assert!(adam.first.layer_is_zero(0));
    }
}
