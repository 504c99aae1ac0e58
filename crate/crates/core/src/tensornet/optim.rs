use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::{GradientSet, ModelParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment accumulators for one parameter set.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: AdamConfig,
    first: GradientSet,
    second: GradientSet,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            first: GradientSet::zeros_like(params),
            second: GradientSet::zeros_like(params),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &GradientSet {
        &self.first
    }

    pub fn second_moment(&self) -> &GradientSet {
        &self.second
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut ModelParams, grads: &GradientSet) -> Result<()> {
        if !grads.matches(params) || !self.first.matches(params) {
            return Err(Error::Config(
                "gradient shapes do not match parameters".into(),
            ));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };
        for (l, layer) in params.layers.iter_mut().enumerate() {
            let (m, v, g) = (
                &mut self.first.layers[l],
                &mut self.second.layers[l],
                &grads.layers[l],
            );
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
