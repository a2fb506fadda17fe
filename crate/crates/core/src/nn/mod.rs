//! Trainable pieces: the image projection layer, a toy conditional
//! denoiser, AdamW and the toy training loop. Every layer carries a
//! hand-written backward pass.

mod adamw;
mod checkpoint;
mod denoiser;
mod projection;
mod train;

pub use adamw::{AdamW, AdamWConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, TensorShape};
pub use denoiser::{timestep_embedding, DenoiserCache, DenoiserGrads, DenoiserParams, DenoiserShape, TIMESTEP_EMBED_DIM};
pub use projection::{project_image, projection_backward, ProjectionCache, ProjectionGrads, ProjectionParams, ProjectionShape};
pub use train::{
    synthetic_linear_task, train_toy, StepRecord, ToyItem, ToyModel, ToySample, TrainConfig, TrainReport,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::standard_normal;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Tanh approximation of GELU, as used by GPT-2.
    #[default]
    Gelu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Gelu => {
                let (k, c) = gelu_consts::<T>();
                let u = k * (x + c * x * x * x);
                T::of(0.5) * x * (T::one() + u.tanh())
            }
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Gelu => {
                let (k, c) = gelu_consts::<T>();
                let u = k * (x + c * x * x * x);
                let th = u.tanh();
                let du = k * (T::one() + T::of(3.0) * c * x * x);
                T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * du
            }
        }
    }
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

/// Anything holding trainable tensors in a fixed order.
pub trait Parameters<T> {
    /// `(name, shape)` for every tensor, in storage order.
    fn shapes(&self) -> Vec<(String, Vec<usize>)>;
    fn tensors(&self) -> Vec<&[T]>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<T>
    where
        T: Copy,
    {
        self.tensors().concat()
    }
}

/// Dense layer `y = W x + b` with `W` stored out x in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    /// Weights ~ N(0, 1/fan_in), zero bias.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let scale = T::of(1.0 / (inputs as f64).sqrt());
        let w: Vec<T> = standard_normal::<T, _>(rng, inputs * outputs)
            .into_iter()
            .map(|x| x * scale)
            .collect();
        Self {
            weight: Matrix::from_vec(outputs, inputs, w).expect("sized above"),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.weight.matvec(x);
        for (o, &b) in y.iter_mut().zip(&self.bias) {
            *o += b;
        }
        y
    }

    /// Adds `dy ⊗ x` and `dy` into `grad`, returns `Wᵀ dy`.
    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Linear<T>) -> Vec<T> {
        for (i, &d) in dy.iter().enumerate() {
            if d != T::zero() {
                for (g, &xi) in grad.weight.row_mut(i).iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            grad.bias[i] += d;
        }
        self.weight.matvec_t(dy)
    }

    fn check_input(&self, x: &[T], what: &str) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "{what}: expected {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_finite<T: Scalar>(name: &str, xs: &[T]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data(format!("{name} contains non-finite values")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0f64, -1.0, -0.2, 0.0, 0.4, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (Activation::Gelu.apply(x + h) - Activation::Gelu.apply(x - h)) / (2.0 * h);
            assert!((fd - Activation::Gelu.derivative(x)).abs() < 1e-8, "x={x}");
        }
        assert_eq!(Activation::Gelu.apply(0.0f64), 0.0);
        assert!((Activation::Gelu.apply(10.0f64) - 10.0).abs() < 1e-9);
    }
}
