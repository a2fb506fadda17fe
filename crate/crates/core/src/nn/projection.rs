use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_finite, Activation, Linear, Parameters};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Shape of the image projection layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionShape {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub n_tokens: usize,
    pub token_dim: usize,
    pub activation: Activation,
}

impl Default for ProjectionShape {
    fn default() -> Self {
        Self {
            in_dim: 1024,
            hidden_dim: 1024,
            n_tokens: 1,
            token_dim: 768,
            activation: Activation::Gelu,
        }
    }
}

impl ProjectionShape {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.n_tokens == 0 || self.token_dim == 0 {
            return Err(Error::Shape(format!("projection dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.n_tokens * self.token_dim
    }
}

/// Image embedding -> `n_tokens` tokens of `token_dim`, through
/// `Linear -> activation -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams<T> {
    pub shape: ProjectionShape,
    pub first: Linear<T>,
    pub second: Linear<T>,
}

pub type ProjectionGradsParams<T> = ProjectionParams<T>;

/// Gradients of a scalar loss w.r.t. every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrads<T> {
    pub params: ProjectionGradsParams<T>,
    pub input: Vec<T>,
}

/// Intermediate values kept from the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCache<T> {
    pub pre_activation: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> ProjectionParams<T> {
    pub fn zeros(shape: ProjectionShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            first: Linear::zeros(shape.in_dim, shape.hidden_dim),
            second: Linear::zeros(shape.hidden_dim, shape.out_dim()),
        })
    }

    pub fn random<R: Rng + ?Sized>(shape: ProjectionShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            shape,
            first: Linear::random(shape.in_dim, shape.hidden_dim, rng),
            second: Linear::random(shape.hidden_dim, shape.out_dim(), rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape).expect("shape already validated")
    }

    pub fn forward_cached(&self, emb: &[T]) -> Result<ProjectionCache<T>> {
        self.first.check_input(emb, "projection input")?;
        let pre_activation = self.first.forward(emb);
        let hidden: Vec<T> = pre_activation.iter().map(|&z| self.shape.activation.apply(z)).collect();
        let output = self.second.forward(&hidden);
        Ok(ProjectionCache {
            pre_activation,
            hidden,
            output,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient. `upstream` is dL/d(flattened tokens).
    pub fn backward_into(
        &self,
        emb: &[T],
        cache: &ProjectionCache<T>,
        upstream: &[T],
        grads: &mut ProjectionParams<T>,
    ) -> Result<Vec<T>> {
        if upstream.len() != self.shape.out_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, expected {}",
                upstream.len(),
                self.shape.out_dim()
            )));
        }
        let d_hidden = self.second.backward(&cache.hidden, upstream, &mut grads.second);
        let d_pre: Vec<T> = d_hidden
            .iter()
            .zip(&cache.pre_activation)
            .map(|(&g, &z)| g * self.shape.activation.derivative(z))
            .collect();
        Ok(self.first.backward(emb, &d_pre, &mut grads.first))
    }
}

impl<T: Scalar> Parameters<T> for ProjectionParams<T> {
    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let s = &self.shape;
        vec![
            ("projection.w1".into(), vec![s.hidden_dim, s.in_dim]),
            ("projection.b1".into(), vec![s.hidden_dim]),
            ("projection.w2".into(), vec![s.out_dim(), s.hidden_dim]),
            ("projection.b2".into(), vec![s.out_dim()]),
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

/// Projects one image embedding to an `n_tokens x token_dim` matrix.
pub fn project_image<T: Scalar>(emb: &[T], p: &ProjectionParams<T>) -> Result<Matrix<T>> {
    check_finite("embedding", emb)?;
    let cache = p.forward_cached(emb)?;
    Matrix::from_vec(p.shape.n_tokens, p.shape.token_dim, cache.output)
}

/// Exact reverse-mode gradients of the projection for an upstream gradient
/// shaped like its output.
pub fn projection_backward<T: Scalar>(
    emb: &[T],
    p: &ProjectionParams<T>,
    upstream: &Matrix<T>,
) -> Result<ProjectionGrads<T>> {
    if upstream.shape() != (p.shape.n_tokens, p.shape.token_dim) {
        return Err(Error::Shape(format!(
            "upstream gradient is {:?}, expected ({}, {})",
            upstream.shape(),
            p.shape.n_tokens,
            p.shape.token_dim
        )));
    }
    let cache = p.forward_cached(emb)?;
    let mut params = p.zeros_like();
    let input = p.backward_into(emb, &cache, upstream.as_slice(), &mut params)?;
    Ok(ProjectionGrads { params, input })
}
