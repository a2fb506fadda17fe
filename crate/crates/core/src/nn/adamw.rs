use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Linear warmup length in optimizer steps; 0 disables warmup.
    pub warmup_steps: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 500,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid AdamW settings {self:?}")))
        }
    }

    /// Learning rate used by update number `step` (1-based):
    /// `lr · min(1, step / warmup)`, constant afterwards.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * step as f64 / self.warmup_steps as f64
        }
    }
}

/// Moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![T::zero(); n], vec![T::zero(); n]))
            .unzip();
        Self { m, v, step: 0 }
    }
}

/// Decoupled-weight-decay Adam with bias correction and linear warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    pub state: OptimizerState<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new<P: Parameters<T>>(config: AdamWConfig, params: &P) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptimizerState::new(params.tensors().iter().map(|t| t.len())),
        })
    }

    /// Applies one update; returns the learning rate it used. Gradients are
    /// checked before anything is modified.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P) -> Result<f64> {
        let grads = grads.tensors();
        let mut tensors = params.tensors_mut();
        self.step_slices(&mut tensors, &grads)
    }

    pub fn step_slices(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<f64> {
        let st = &mut self.state;
        if params.len() != grads.len() || params.len() != st.m.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                st.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != st.m[i].len() {
                return Err(Error::Shape(format!("tensor {i}: parameter/gradient sizes differ")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Grad(format!("tensor {i}")));
            }
        }

        st.step += 1;
        let c = &self.config;
        let lr = c.lr_at(st.step);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - T::of(c.beta1.powi(st.step.min(i32::MAX as u64) as i32));
        let bc2 = T::one() - T::of(c.beta2.powi(st.step.min(i32::MAX as u64) as i32));
        let (lr_t, decay, eps) = (T::of(lr), T::of(lr * c.weight_decay), T::of(c.eps));

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut st.m).zip(&mut st.v) {
            for (((w, &gi), mi), vi) in p.iter_mut().zip(*g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w -= decay * *w;
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(lr)
    }
}
