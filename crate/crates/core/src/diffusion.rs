//! Diffusion noise schedule, forward noising, min-SNR-γ weighted
//! ε-prediction loss and a DDPM ancestral sampler.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of a linear-β schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub gamma: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
            gamma: 5.0,
        }
    }
}

impl ScheduleConfig {
    pub fn build<T: Scalar>(&self) -> Result<NoiseSchedule<T>> {
        NoiseSchedule::linear(self.timesteps, self.beta_start, self.beta_end, self.gamma)
    }
}

/// Per-timestep coefficients. `alpha_bars[t]` is the retained signal power
/// (α² in the SNR ratio) and `1 - alpha_bars[t]` the noise power (σ²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule<T> {
    pub betas: Vec<T>,
    pub alpha_bars: Vec<T>,
    pub snr: Vec<T>,
    pub gamma: T,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Linear interpolation of β from `beta_start` to `beta_end` over
    /// `timesteps` steps.
    pub fn linear(timesteps: usize, beta_start: f64, beta_end: f64, gamma: f64) -> Result<Self> {
        if timesteps < 2 {
            return Err(Error::Schedule(format!("need at least 2 timesteps, got {timesteps}")));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Schedule(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
            )));
        }
        let betas: Vec<T> = (0..timesteps)
            .map(|t| {
                let frac = t as f64 / (timesteps - 1) as f64;
                T::of(beta_start + (beta_end - beta_start) * frac)
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(timesteps);
        let mut acc = T::one();
        for &b in &betas {
            acc *= T::one() - b;
            alpha_bars.push(acc);
        }
        Self::assemble(betas, alpha_bars, gamma)
    }

    /// Builds a schedule from cumulative products directly; βs are recovered
    /// as `1 - ᾱ_t / ᾱ_{t-1}`.
    pub fn from_alpha_bars(alpha_bars: Vec<T>, gamma: f64) -> Result<Self> {
        if alpha_bars.len() < 2 {
            return Err(Error::Schedule("need at least 2 timesteps".into()));
        }
        let betas = alpha_bars
            .iter()
            .enumerate()
            .map(|(t, &a)| {
                let prev = if t == 0 { T::one() } else { alpha_bars[t - 1] };
                T::one() - a / prev
            })
            .collect();
        Self::assemble(betas, alpha_bars, gamma)
    }

    fn assemble(betas: Vec<T>, alpha_bars: Vec<T>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Schedule(format!("gamma must be positive, got {gamma}")));
        }
        for (t, &a) in alpha_bars.iter().enumerate() {
            if !(a > T::zero() && a < T::one()) {
                return Err(Error::Schedule(format!("alpha_bar[{t}] = {a} outside (0, 1)")));
            }
            if t > 0 && a >= alpha_bars[t - 1] {
                return Err(Error::Schedule(format!("alpha_bar not strictly decreasing at {t}")));
            }
        }
        let snr: Vec<T> = alpha_bars.iter().map(|&a| a / (T::one() - a)).collect();
        if snr.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Schedule("SNR not strictly decreasing (precision exhausted)".into()));
        }
        Ok(Self {
            betas,
            alpha_bars,
            snr,
            gamma: T::of(gamma),
        })
    }

    pub fn len(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bars.is_empty()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            Err(Error::Timestep { t, len: self.len() })
        } else {
            Ok(())
        }
    }

    /// Min-SNR-γ weight for an ε-prediction target: `min(snr, γ) / snr`.
    pub fn snr_weight(&self, t: usize) -> Result<T> {
        self.check(t)?;
        let s = self.snr[t];
        Ok(s.min(self.gamma) / s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One forward-noised sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLatent<T> {
    pub x0: Vec<T>,
    pub eps: Vec<T>,
    pub t: usize,
    pub xt: Vec<T>,
}

/// `x_t = sqrt(ᾱ_t)·x0 + sqrt(1 - ᾱ_t)·ε`
pub fn add_noise<T: Scalar>(x0: &[T], eps: &[T], t: usize, s: &NoiseSchedule<T>) -> Result<NoisyLatent<T>> {
    if x0.len() != eps.len() {
        return Err(Error::Shape(format!(
            "latent has {} entries, noise has {}",
            x0.len(),
            eps.len()
        )));
    }
    s.check(t)?;
    let a = s.alpha_bars[t];
    let (sa, sn) = (a.sqrt(), (T::one() - a).sqrt());
    let xt = x0.iter().zip(eps).map(|(&x, &e)| sa * x + sn * e).collect();
    Ok(NoisyLatent {
        x0: x0.to_vec(),
        eps: eps.to_vec(),
        t,
        xt,
    })
}

/// Inverts [`add_noise`] given the true noise.
pub fn recover_x0<T: Scalar>(xt: &[T], eps: &[T], t: usize, s: &NoiseSchedule<T>) -> Result<Vec<T>> {
    if xt.len() != eps.len() {
        return Err(Error::Shape("x_t and noise differ in length".into()));
    }
    s.check(t)?;
    let a = s.alpha_bars[t];
    let (sa, sn) = (a.sqrt(), (T::one() - a).sqrt());
    Ok(xt.iter().zip(eps).map(|(&x, &e)| (x - sn * e) / sa).collect())
}

/// `(1/n) Σ (target_i - pred_i)²`
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction has {} entries, target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse of empty vectors"));
    }
    let sum: T = pred.iter().zip(target).map(|(&p, &y)| (y - p) * (y - p)).sum();
    Ok(sum / T::of(pred.len() as f64))
}

/// Mean over the batch of `snr_weight(t_b) · mse(pred_b, ε_b)`.
pub fn weighted_loss<T: Scalar>(batch: &[(&NoisyLatent<T>, &[T])], s: &NoiseSchedule<T>) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("weighted loss of empty batch"));
    }
    let mut total = T::zero();
    for (latent, pred) in batch {
        total += s.snr_weight(latent.t)? * mse_loss(pred, &latent.eps)?;
    }
    Ok(total / T::of(batch.len() as f64))
}

pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| T::of(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)))
        .collect()
}

/// Descending timesteps visited by a `steps`-step sampler: every
/// `T / steps`-th training timestep starting from 0, reversed.
pub fn inference_timesteps(train_steps: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > train_steps {
        return Err(Error::Steps {
            steps,
            max: train_steps,
        });
    }
    let stride = train_steps / steps;
    Ok((0..steps).map(|i| i * stride).rev().collect())
}

/// DDPM ancestral sampling from `x_T ~ N(0, I)`.
///
/// `denoiser(x_t, t)` returns the predicted noise. Each step goes from `t`
/// to the next ladder timestep `t'` (or to the clean sample after the last
/// one) using the posterior of the sub-sampled chain, whose effective β is
/// `1 - ᾱ_t / ᾱ_t'`; fresh noise is drawn from `rng` for every step except
/// the last.
pub fn sample<T, F, R>(
    mut denoiser: F,
    s: &NoiseSchedule<T>,
    dim: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T], usize) -> Result<Vec<T>>,
    R: Rng + ?Sized,
{
    let ladder = inference_timesteps(s.len(), steps)?;
    let mut x: Vec<T> = standard_normal(rng, dim);
    for (k, &t) in ladder.iter().enumerate() {
        let eps = denoiser(&x, t)?;
        if eps.len() != dim {
            return Err(Error::Shape(format!(
                "denoiser returned {} values for a {dim}-dim latent",
                eps.len()
            )));
        }
        let a_t = s.alpha_bars[t];
        let a_prev = ladder.get(k + 1).map_or(T::one(), |&p| s.alpha_bars[p]);
        let beta = T::one() - a_t / a_prev;
        let one_minus = T::one() - a_t;
        let (sa, sn) = (a_t.sqrt(), one_minus.sqrt());
        let c_x0 = a_prev.sqrt() * beta / one_minus;
        let c_xt = (T::one() - beta).sqrt() * (T::one() - a_prev) / one_minus;
        let var = (T::one() - a_prev) / one_minus * beta;
        let noise: Vec<T> = if k + 1 < ladder.len() {
            standard_normal(rng, dim)
        } else {
            vec![T::zero(); dim]
        };
        let sigma = var.max(T::zero()).sqrt();
        for ((xi, &e), &z) in x.iter_mut().zip(&eps).zip(&noise) {
            let x0 = (*xi - sn * e) / sa;
            *xi = c_x0 * x0 + c_xt * *xi + sigma * z;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_step_schedule() {
        let s = NoiseSchedule::<f64>::linear(2, 0.1, 0.2, 5.0).unwrap();
        assert!((s.alpha_bars[0] - 0.9).abs() < 1e-15);
        assert!((s.alpha_bars[1] - 0.72).abs() < 1e-15);
        assert!((s.snr[0] - 9.0).abs() < 1e-12);
        assert!((s.snr[1] - 0.72 / 0.28).abs() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(NoiseSchedule::<f64>::linear(1, 0.1, 0.2, 5.0).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.0, 0.2, 5.0).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.3, 0.2, 5.0).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.1, 1.0, 5.0).is_err());
        assert!(NoiseSchedule::<f64>::linear(10, 0.1, 0.2, 0.0).is_err());
        assert!(NoiseSchedule::<f64>::from_alpha_bars(vec![0.5, 0.6], 5.0).is_err());
    }

    #[test]
    fn half_alpha_bar_has_unit_snr() {
        let s = NoiseSchedule::<f64>::from_alpha_bars(vec![0.9, 0.5, 0.1], 5.0).unwrap();
        assert_eq!(s.snr[1], 1.0);
    }

    #[test]
    fn default_schedule_monotone() {
        let s: NoiseSchedule<f32> = ScheduleConfig::default().build().unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.snr.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn snr_weight_branches() {
        // snr = a / (1 - a): a = 2/3 -> 2, a = 10/11 -> 10, a = 5/6 -> 5
        let s = NoiseSchedule::<f64>::from_alpha_bars(vec![10.0 / 11.0, 5.0 / 6.0, 2.0 / 3.0], 5.0).unwrap();
        assert!((s.snr_weight(0).unwrap() - 0.5).abs() < 1e-12);
        assert!((s.snr_weight(1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s.snr_weight(2).unwrap(), 1.0);
        assert!(matches!(s.snr_weight(3), Err(Error::Timestep { t: 3, len: 3 })));
    }

    #[test]
    fn add_noise_examples() {
        let s = NoiseSchedule::<f64>::from_alpha_bars(vec![1.0 - 1e-12, 0.72, 0.5], 5.0).unwrap();
        let n = add_noise(&[0.3, -0.7], &[1.0, -2.0], 0, &s).unwrap();
        assert!(n.xt.iter().zip(&n.x0).all(|(a, b)| (a - b).abs() < 1e-5));

        let n = add_noise(&[0.0, 0.0], &[1.5, -0.5], 1, &s).unwrap();
        assert_eq!(n.xt, vec![0.28f64.sqrt() * 1.5, 0.28f64.sqrt() * -0.5]);

        let n = add_noise(&[1.0, 0.0], &[0.0, 1.0], 1, &s).unwrap();
        assert!((n.xt[0] - 0.848528137).abs() < 1e-9);
        assert!((n.xt[1] - 0.529150262).abs() < 1e-9);

        assert!(matches!(add_noise(&[1.0], &[1.0, 2.0], 0, &s), Err(Error::Shape(_))));
        assert!(matches!(add_noise(&[1.0], &[1.0], 3, &s), Err(Error::Timestep { .. })));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 2.5);
        assert!(matches!(mse_loss(&[0.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn weighted_loss_examples() {
        let s = NoiseSchedule::<f64>::from_alpha_bars(vec![10.0 / 11.0, 0.5], 5.0).unwrap();
        let item = add_noise(&[0.0, 0.0], &[1.0, 2.0], 0, &s).unwrap();
        let pred = [0.0, 0.0];
        let l = weighted_loss(&[(&item, &pred[..])], &s).unwrap();
        assert!((l - 1.25).abs() < 1e-12);
        let exact = weighted_loss(&[(&item, &item.eps[..])], &s).unwrap();
        assert_eq!(exact, 0.0);
        assert!(matches!(weighted_loss::<f64>(&[], &s), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ladder() {
        assert_eq!(inference_timesteps(1000, 200).unwrap()[..3], [995, 990, 985]);
        assert_eq!(inference_timesteps(4, 4).unwrap(), vec![3, 2, 1, 0]);
        assert!(matches!(inference_timesteps(10, 0), Err(Error::Steps { .. })));
        assert!(matches!(inference_timesteps(10, 11), Err(Error::Steps { .. })));
    }

    #[test]
    fn zero_denoiser_is_replayable() {
        let s: NoiseSchedule<f64> = ScheduleConfig::default().build().unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            sample(|x: &[f64], _| Ok(vec![0.0; x.len()]), &s, 8, 50, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
