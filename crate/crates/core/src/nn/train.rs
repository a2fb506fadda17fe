use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserParams, DenoiserShape};
use super::projection::{ProjectionParams, ProjectionShape};
use super::{AdamW, AdamWConfig, OptimizerState, Parameters};
use crate::diffusion::{add_noise, mse_loss, standard_normal, NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// A conditioning embedding and the clean latent it should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample<T> {
    pub condition: Vec<T>,
    pub latent: Vec<T>,
}

/// One training draw: which sample, at which timestep, with which noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyItem<'a, T> {
    pub sample: &'a ToySample<T>,
    pub t: usize,
    pub eps: Vec<T>,
}

/// Projection layer feeding a denoiser: the flattened projection tokens are
/// the denoiser's condition vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<T> {
    pub projection: ProjectionParams<T>,
    pub denoiser: DenoiserParams<T>,
}

impl<T: Scalar> ToyModel<T> {
    pub fn random<R: Rng + ?Sized>(
        projection: ProjectionShape,
        latent_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let den = DenoiserShape {
            latent_dim,
            cond_dim: projection.out_dim(),
            hidden_dim,
            ..Default::default()
        };
        Ok(Self {
            projection: ProjectionParams::random(projection, rng)?,
            denoiser: DenoiserParams::random(den, rng)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projection: self.projection.zeros_like(),
            denoiser: self.denoiser.zeros_like(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.denoiser.shape.latent_dim
    }

    /// Noise prediction for `x_t` conditioned on an image embedding.
    pub fn predict(&self, xt: &[T], t: usize, condition: &[T]) -> Result<Vec<T>> {
        let cond = self.projection.forward_cached(condition)?.output;
        self.denoiser.forward(xt, t, &cond)
    }

    /// Batch-mean min-SNR-weighted noise-prediction loss.
    pub fn loss(&self, items: &[ToyItem<'_, T>], schedule: &NoiseSchedule<T>) -> Result<T> {
        self.evaluate(items, schedule, None)
    }

    /// Loss and its gradient w.r.t. every parameter.
    pub fn loss_and_grad(&self, items: &[ToyItem<'_, T>], schedule: &NoiseSchedule<T>) -> Result<(T, Self)> {
        let mut grads = self.zeros_like();
        let loss = self.evaluate(items, schedule, Some(&mut grads))?;
        Ok((loss, grads))
    }

    fn evaluate(&self, items: &[ToyItem<'_, T>], schedule: &NoiseSchedule<T>, mut grads: Option<&mut Self>) -> Result<T> {
        if items.is_empty() {
            return Err(Error::EmptyInput("loss of empty batch"));
        }
        let batch = T::of(items.len() as f64);
        let mut total = T::zero();
        for item in items {
            let proj = self.projection.forward_cached(&item.sample.condition)?;
            let noisy = add_noise(&item.sample.latent, &item.eps, item.t, schedule)?;
            let den = self.denoiser.forward_cached(&noisy.xt, item.t, &proj.output)?;
            let weight = schedule.snr_weight(item.t)?;
            total += weight * mse_loss(&den.output, &item.eps)?;

            if let Some(g) = grads.as_deref_mut() {
                let scale = weight * T::of(2.0) / (T::of(item.eps.len() as f64) * batch);
                let d_pred: Vec<T> = den.output.iter().zip(&item.eps).map(|(&p, &e)| (p - e) * scale).collect();
                let (_, d_cond) = self.denoiser.backward_into(&den, &d_pred, &mut g.denoiser)?;
                self.projection
                    .backward_into(&item.sample.condition, &proj, &d_cond, &mut g.projection)?;
            }
        }
        Ok(total / batch)
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, c: T) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= c;
            }
        }
    }
}

impl<T: Scalar> Parameters<T> for ToyModel<T> {
    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut s = self.projection.shapes();
        s.extend(self.denoiser.shapes());
        s
    }

    fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.projection.tensors();
        t.extend(self.denoiser.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.projection.tensors_mut();
        t.extend(self.denoiser.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub accumulation_steps: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub optimizer: AdamWConfig,
    pub schedule: ScheduleConfig,
    pub train_projection: bool,
    pub train_denoiser: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            accumulation_steps: 4,
            seed: 0,
            max_steps: None,
            optimizer: AdamWConfig::default(),
            schedule: ScheduleConfig::default(),
            train_projection: true,
            train_denoiser: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.accumulation_steps == 0 {
            return Err(Error::Config(
                "epochs, batch_size and accumulation_steps must all be at least 1".into(),
            ));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !self.train_projection && !self.train_denoiser {
            return Err(Error::Config("nothing to train".into()));
        }
        self.optimizer.validate()
            .and_then(|_| self.schedule.build::<f64>().map(|_| ()))
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub steps: Vec<StepRecord>,
    pub model: ToyModel<T>,
}

impl<T> TrainReport<T> {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// One `{step, loss, lr}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io("<report>", e))?;
        }
        Ok(())
    }
}

/// Trains `model` on `data`.
///
/// Each epoch shuffles the data with the run's seeded generator and walks
/// it in micro-batches of `batch_size`. Every item draws a timestep
/// uniformly and fresh Gaussian noise, in data order. Gradients of
/// `accumulation_steps` consecutive micro-batches are averaged before one
/// AdamW update; a shorter group at the end of an epoch is averaged over
/// its own length. The recorded loss of a step is the mean micro-batch
/// loss of its group.
pub fn train_toy<T: Scalar>(
    mut model: ToyModel<T>,
    data: &[ToySample<T>],
    config: &TrainConfig,
) -> Result<TrainReport<T>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let in_dim = model.projection.shape.in_dim;
    let latent_dim = model.latent_dim();
    if model.denoiser.shape.cond_dim != model.projection.shape.out_dim() {
        return Err(Error::Config("denoiser condition width differs from projection output".into()));
    }
    if let Some(bad) = data
        .iter()
        .position(|s| s.condition.len() != in_dim || s.latent.len() != latent_dim)
    {
        return Err(Error::Config(format!(
            "sample {bad} does not match model dims (condition {in_dim}, latent {latent_dim})"
        )));
    }

    let schedule: NoiseSchedule<T> = config.schedule.build()?;
    let n_proj = model.projection.tensors().len();
    let trainable: Vec<bool> = (0..model.tensors().len())
        .map(|i| if i < n_proj { config.train_projection } else { config.train_denoiser })
        .collect();
    let sizes = model
        .tensors()
        .iter()
        .zip(&trainable)
        .filter(|(_, &on)| on)
        .map(|(t, _)| t.len())
        .collect::<Vec<_>>();
    let mut opt = AdamW {
        config: config.optimizer,
        state: OptimizerState::new(sizes),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let micro: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for group in micro.chunks(config.accumulation_steps) {
            let mut acc = model.zeros_like();
            let mut loss = 0.0;
            for mb in group {
                let items: Vec<ToyItem<'_, T>> = mb
                    .iter()
                    .map(|&i| ToyItem {
                        sample: &data[i],
                        t: rng.random_range(0..schedule.len()),
                        eps: standard_normal(&mut rng, latent_dim),
                    })
                    .collect();
                let (l, g) = model.loss_and_grad(&items, &schedule)?;
                loss += l.as_f64();
                acc.add_assign(&g);
            }
            let k = group.len();
            acc.scale(T::one() / T::of(k as f64));

            let grads: Vec<&[T]> = acc
                .tensors()
                .into_iter()
                .zip(&trainable)
                .filter_map(|(t, &on)| on.then_some(t))
                .collect();
            let mut params: Vec<&mut [T]> = model
                .tensors_mut()
                .into_iter()
                .zip(&trainable)
                .filter_map(|(t, &on)| on.then_some(t))
                .collect();
            let lr = opt.step_slices(&mut params, &grads)?;
            steps.push(StepRecord {
                step: steps.len() + 1,
                loss: loss / k as f64,
                lr,
            });
            if config.max_steps.is_some_and(|m| steps.len() >= m) {
                break 'epochs;
            }
        }
    }
    Ok(TrainReport { steps, model })
}

/// `n` samples with Gaussian conditions and latents
/// `A·c / sqrt(in_dim) + noise·z`, for a fixed Gaussian `A`.
pub fn synthetic_linear_task<T: Scalar>(
    n: usize,
    in_dim: usize,
    latent_dim: usize,
    noise: f64,
    seed: u64,
) -> Vec<ToySample<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_vec(latent_dim, in_dim, standard_normal::<T, _>(&mut rng, latent_dim * in_dim))
        .expect("sized above");
    let norm = T::of(1.0 / (in_dim as f64).sqrt());
    (0..n)
        .map(|_| {
            let condition: Vec<T> = standard_normal(&mut rng, in_dim);
            let z: Vec<T> = standard_normal(&mut rng, latent_dim);
            let latent = a
                .matvec(&condition)
                .into_iter()
                .zip(z)
                .map(|(x, z)| x * norm + T::of(noise) * z)
                .collect();
            ToySample { condition, latent }
        })
        .collect()
}
