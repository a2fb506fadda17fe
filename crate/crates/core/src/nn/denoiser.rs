use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, Linear, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Width of the sinusoidal timestep embedding.
pub const TIMESTEP_EMBED_DIM: usize = 32;

/// `[sin(t·f_0), …, sin(t·f_15), cos(t·f_0), …, cos(t·f_15)]` with
/// `f_i = 10000^(-i/16)`.
pub fn timestep_embedding<T: Scalar>(t: usize) -> Vec<T> {
    let half = TIMESTEP_EMBED_DIM / 2;
    let t = t as f64;
    let freqs = (0..half).map(|i| (-(10_000f64.ln()) * i as f64 / half as f64).exp());
    let (sin, cos): (Vec<T>, Vec<T>) = freqs.map(|f| (T::of((t * f).sin()), T::of((t * f).cos()))).unzip();
    [sin, cos].concat()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserShape {
    pub latent_dim: usize,
    pub cond_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for DenoiserShape {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            cond_dim: 768,
            hidden_dim: 64,
            activation: Activation::Gelu,
        }
    }
}

impl DenoiserShape {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + TIMESTEP_EMBED_DIM + self.cond_dim
    }
}

/// Two-layer perceptron over `x_t ⊕ emb(t) ⊕ condition`, predicting noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams<T> {
    pub shape: DenoiserShape,
    pub first: Linear<T>,
    pub second: Linear<T>,
}

pub type DenoiserGrads<T> = DenoiserParams<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserCache<T> {
    pub input: Vec<T>,
    pub pre_activation: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> DenoiserParams<T> {
    pub fn zeros(shape: DenoiserShape) -> Result<Self> {
        Self::check_shape(&shape)?;
        Ok(Self {
            shape,
            first: Linear::zeros(shape.input_dim(), shape.hidden_dim),
            second: Linear::zeros(shape.hidden_dim, shape.latent_dim),
        })
    }

    pub fn random<R: Rng + ?Sized>(shape: DenoiserShape, rng: &mut R) -> Result<Self> {
        Self::check_shape(&shape)?;
        Ok(Self {
            shape,
            first: Linear::random(shape.input_dim(), shape.hidden_dim, rng),
            second: Linear::random(shape.hidden_dim, shape.latent_dim, rng),
        })
    }

    fn check_shape(s: &DenoiserShape) -> Result<()> {
        if s.latent_dim == 0 || s.hidden_dim == 0 {
            return Err(Error::Shape(format!("denoiser dimensions must be positive: {s:?}")));
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape).expect("shape already validated")
    }

    pub fn forward_cached(&self, xt: &[T], t: usize, cond: &[T]) -> Result<DenoiserCache<T>> {
        if xt.len() != self.shape.latent_dim {
            return Err(Error::Shape(format!(
                "latent has {} entries, denoiser expects {}",
                xt.len(),
                self.shape.latent_dim
            )));
        }
        if cond.len() != self.shape.cond_dim {
            return Err(Error::Shape(format!(
                "condition has {} entries, denoiser expects {}",
                cond.len(),
                self.shape.cond_dim
            )));
        }
        let input = [xt, &timestep_embedding::<T>(t), cond].concat();
        let pre_activation = self.first.forward(&input);
        let hidden: Vec<T> = pre_activation.iter().map(|&z| self.shape.activation.apply(z)).collect();
        let output = self.second.forward(&hidden);
        Ok(DenoiserCache {
            input,
            pre_activation,
            hidden,
            output,
        })
    }

    /// Predicted noise, shaped like `xt`.
    pub fn forward(&self, xt: &[T], t: usize, cond: &[T]) -> Result<Vec<T>> {
        Ok(self.forward_cached(xt, t, cond)?.output)
    }

    /// Accumulates parameter gradients into `grads`; returns
    /// `(dL/dx_t, dL/dcondition)`.
    pub fn backward_into(
        &self,
        cache: &DenoiserCache<T>,
        upstream: &[T],
        grads: &mut DenoiserParams<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        if upstream.len() != self.shape.latent_dim {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, expected {}",
                upstream.len(),
                self.shape.latent_dim
            )));
        }
        let d_hidden = self.second.backward(&cache.hidden, upstream, &mut grads.second);
        let d_pre: Vec<T> = d_hidden
            .iter()
            .zip(&cache.pre_activation)
            .map(|(&g, &z)| g * self.shape.activation.derivative(z))
            .collect();
        let d_input = self.first.backward(&cache.input, &d_pre, &mut grads.first);
        let l = self.shape.latent_dim;
        let d_xt = d_input[..l].to_vec();
        let d_cond = d_input[l + TIMESTEP_EMBED_DIM..].to_vec();
        Ok((d_xt, d_cond))
    }
}

impl<T: Scalar> Parameters<T> for DenoiserParams<T> {
    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let s = &self.shape;
        vec![
            ("denoiser.w1".into(), vec![s.hidden_dim, s.input_dim()]),
            ("denoiser.b1".into(), vec![s.hidden_dim]),
            ("denoiser.w2".into(), vec![s.latent_dim, s.hidden_dim]),
            ("denoiser.b2".into(), vec![s.latent_dim]),
        ]
    }

    fn tensors(&self) -> Vec<&[T]> {
        vec![
            self.first.weight.as_slice(),
            &self.first.bias,
            self.second.weight.as_slice(),
            &self.second.bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.first.weight.as_mut_slice(),
            &mut self.first.bias,
            self.second.weight.as_mut_slice(),
            &mut self.second.bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embedding_layout() {
        let e = timestep_embedding::<f64>(0);
        assert_eq!(e.len(), 32);
        assert!(e[..16].iter().all(|&x| x == 0.0));
        assert!(e[16..].iter().all(|&x| x == 1.0));
        let e = timestep_embedding::<f64>(7);
        assert!((e[0] - 7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_predict_zero() {
        let d = DenoiserParams::<f64>::zeros(DenoiserShape::default()).unwrap();
        let out = d.forward(&[0.4; 8], 500, &vec![1.0; 768]).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn output_matches_latent_shape() {
        let shape = DenoiserShape {
            latent_dim: 5,
            cond_dim: 3,
            hidden_dim: 7,
            activation: Activation::Gelu,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = DenoiserParams::<f32>::random(shape, &mut rng).unwrap();
        for t in [0, 10, 999] {
            assert_eq!(d.forward(&[0.1; 5], t, &[0.0; 3]).unwrap().len(), 5);
        }
        assert!(matches!(d.forward(&[0.1; 4], 0, &[0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(d.forward(&[0.1; 5], 0, &[0.0; 2]), Err(Error::Shape(_))));
    }
}
