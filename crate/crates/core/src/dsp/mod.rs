//! Audio front-end: WAV ingestion, STFT, mel filterbank, log-mel and
//! Griffin-Lim reconstruction.
//!
//! The default extraction profile is 16 kHz, `n_fft` 1024, hop 160, periodic
//! Hann window, 64 HTK mel bands over 0–8 kHz and a natural-log floor of
//! `1e-5`. Frames start at sample 0 (no centre padding), so a signal of `n`
//! samples yields `1 + (n - n_fft) / hop` frames.

mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, griffin_lim_mel, mel_to_linear, GriffinLimOutput};
pub use mel::{
    hz_to_mel, log_mel, mel_filterbank, mel_to_hz, sidecar_path, MelExtractor, MelParams, MelSpectrogram,
    LOG_FLOOR,
};
pub use stft::{stft_magnitude, Stft, StftParams, WindowKind};
pub use wav::{load_wav, resample_linear, save_wav};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mono samples, nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate)
    }

    /// `amplitude * sin(2π f n / sr)`.
    pub fn sine(freq: f64, amplitude: f64, len: usize, sample_rate: u32) -> Result<Self> {
        let w = std::f64::consts::TAU * freq / sample_rate as f64;
        Self::new(
            (0..len).map(|n| T::of(amplitude * (w * n as f64).sin())).collect(),
            sample_rate,
        )
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * c).collect(),
            sample_rate: self.sample_rate,
        }
    }
}
