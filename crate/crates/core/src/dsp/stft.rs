use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients<T: Scalar>(self, n: usize) -> Vec<T> {
        match self {
            WindowKind::Hann => (0..n)
                .map(|i| {
                    let phase = T::TAU() * T::of(i as f64) / T::of(n as f64);
                    T::of(0.5) - T::of(0.5) * phase.cos()
                })
                .collect(),
            WindowKind::Rectangular => vec![T::one(); n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub n_fft: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 160,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        let p = Self {
            n_fft,
            hop,
            window: WindowKind::Hann,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() {
            return Err(Error::Stft(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Stft(format!(
                "hop {} must satisfy 0 < hop <= n_fft ({})",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames for a signal of `len` samples with no centre padding.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            1 + (len - self.n_fft) / self.hop
        }
    }

    /// Signal length covered by `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            self.n_fft + (frames - 1) * self.hop
        }
    }
}

/// Forward/inverse transforms for one parameter set, with plans cached.
pub struct Stft<T: Scalar> {
    params: StftParams,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Stft<T> {
    pub fn new(params: StftParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: params.window.coefficients(params.n_fft),
            forward: planner.plan_fft_forward(params.n_fft),
            inverse: planner.plan_fft_inverse(params.n_fft),
            params,
        })
    }

    pub fn params(&self) -> &StftParams {
        &self.params
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// One-sided complex spectra, frames x (n_fft/2 + 1).
    pub fn forward(&self, samples: &[T]) -> Result<Vec<Vec<Complex<T>>>> {
        let n = self.params.n_fft;
        if samples.len() < n {
            return Err(Error::TooShort {
                len: samples.len(),
                n_fft: n,
            });
        }
        let frames = self.params.frame_count(samples.len());
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.forward.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(frames);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for f in 0..frames {
            let start = f * self.params.hop;
            for ((b, &x), &w) in buf.iter_mut().zip(&samples[start..start + n]).zip(&self.window) {
                *b = Complex::new(x * w, T::zero());
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            out.push(buf[..self.params.n_bins()].to_vec());
        }
        Ok(out)
    }

    /// Inverse by windowed overlap-add, normalized by the summed squared
    /// window. Samples with no window support come out as zero.
    pub fn inverse(&self, spectra: &[Vec<Complex<T>>]) -> Vec<T> {
        let n = self.params.n_fft;
        let bins = self.params.n_bins();
        let len = self.params.signal_len(spectra.len());
        let mut out = vec![T::zero(); len];
        let mut norm = vec![T::zero(); len];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.inverse.get_inplace_scratch_len()];
        let scale = T::one() / T::of(n as f64);
        for (f, spec) in spectra.iter().enumerate() {
            buf[..bins].copy_from_slice(spec);
            // Hermitian completion; DC and Nyquist must be real.
            buf[0].im = T::zero();
            buf[n / 2].im = T::zero();
            for k in 1..n / 2 {
                buf[n - k] = spec[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = f * self.params.hop;
            for (i, (&w, b)) in self.window.iter().zip(&buf).enumerate() {
                out[start + i] += w * b.re * scale;
                norm[start + i] += w * w;
            }
        }
        let tiny = T::of(1e-8);
        for (o, &z) in out.iter_mut().zip(&norm) {
            *o = if z > tiny { *o / z } else { T::zero() };
        }
        out
    }

    pub fn magnitude(&self, samples: &[T]) -> Result<Matrix<T>> {
        let spectra = self.forward(samples)?;
        Ok(magnitudes(&spectra, self.params.n_bins()))
    }
}

pub(crate) fn magnitudes<T: Scalar>(spectra: &[Vec<Complex<T>>], bins: usize) -> Matrix<T> {
    let data = spectra.iter().flat_map(|s| s.iter().map(|c| c.norm())).collect();
    Matrix::from_vec(spectra.len(), bins, data).expect("frame widths agree")
}

/// Magnitude of the one-sided STFT, frames x (n_fft/2 + 1).
pub fn stft_magnitude<T: Scalar>(audio: &AudioBuffer<T>, params: &StftParams) -> Result<Matrix<T>> {
    Stft::new(*params)?.magnitude(&audio.samples)
}
