use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Adam hyperparameters. Weight decay is decoupled from the moment estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `params`.
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::Argument(format!("adam: lr must be positive, got {}", config.lr)));
        }
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.rows(), p.cols());
        Ok(AdamState {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        self.step_refs(params.iter_mut().collect(), grads)
    }

    /// Same as [`AdamState::step`] for parameters that live in separate places.
    pub fn step_refs(&mut self, mut params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            g.expect_shape(p.shape(), "adam grad")?;
            self.first[i].expect_shape(p.shape(), "adam moment")?;
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let lr = T::of(c.lr);
        let decay = T::one() - T::of(c.lr * c.weight_decay);
        let eps = T::of(c.eps);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .map(|p| &mut **p)
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((theta, &gv), (mv, vv)) in it {
                *theta = *theta * decay;
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
