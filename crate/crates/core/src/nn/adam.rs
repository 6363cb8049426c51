
#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use super::dense::{DenseNetwork, ParamGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: ParamGrads,
    v: ParamGrads,
    step: u64,
}

impl Adam {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        Adam {
            config,
            m: ParamGrads::zeros_like(net),
            v: ParamGrads::zeros_like(net),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Descends along `grads` (gradient of a loss to minimise). Frozen layers
    /// are left as they are.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &ParamGrads) -> Result<()> {
        if grads.layers.len() != net.layers().len() || self.m.layers.len() != grads.layers.len() {
            return Err(Error::Input("optimiser and gradient shapes differ".into()));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::State("non-finite gradient".into()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            if layer.frozen {
                continue;
            }
            let g = &grads.layers[i];
            let m = &mut self.m.layers[i];
            let v = &mut self.v.layers[i];
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(g.bias.iter());
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &gr), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gr;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gr * gr;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
