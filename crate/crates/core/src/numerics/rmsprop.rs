use super::{ParamStore, Tensor};

/// RMSprop hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients, one accumulator per parameter tensor.
#[derive(Clone, Debug)]
pub struct RmspropState {
    pub config: RmspropConfig,
    accumulators: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new(config: RmspropConfig, store: &ParamStore) -> Self {
        let accumulators = store.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Self {
            config,
            accumulators,
        }
    }

    /// Single-tensor state, for optimising a tensor outside a store.
    pub fn for_tensor(config: RmspropConfig, theta: &Tensor) -> Self {
        Self {
            config,
            accumulators: vec![vec![0.0; theta.numel()]],
        }
    }

    pub fn accumulator(&self, index: usize) -> &[f64] {
        &self.accumulators[index]
    }

    /// One update of every parameter in `store`; gradients are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParamStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let cfg = self.config;
            update(cfg, &mut self.accumulators[id.index()], store.get_mut(id));
        }
    }

    /// Update for the state built with [`RmspropState::for_tensor`].
    pub fn step_tensor(&mut self, theta: &mut Tensor) {
        let cfg = self.config;
        update(cfg, &mut self.accumulators[0], theta);
    }
}

fn update(cfg: RmspropConfig, acc: &mut [f64], theta: &mut Tensor) {
    let RmspropConfig {
        learning_rate,
        decay,
        epsilon,
    } = cfg;
    let grads = theta.grad().to_vec();
    for ((a, w), g) in acc.iter_mut().zip(theta.data_mut()).zip(&grads) {
        *a = decay * *a + (1.0 - decay) * g * g;
        *w -= learning_rate * g / (*a + epsilon).sqrt();
    }
    theta.zero_grad();
}
